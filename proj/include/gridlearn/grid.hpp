#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace gridlearn {

using BusId = std::string;

enum class BusKind { substation, internal, leaf };
enum class WeightKind { resistance, reactance };

const char* to_string(BusKind kind);
BusKind bus_kind_from_string(const std::string& s);

struct Bus {
  BusId id;
  BusKind kind = BusKind::internal;
  bool observed = false;
};

/// Undirected line with per-unit series impedance r + jx. Both parts must be finite and positive.
class Line {
 public:
  Line(BusId a, BusId b, double r, double x);

  const BusId& a() const { return a_; }
  const BusId& b() const { return b_; }
  double r() const { return r_; }
  double x() const { return x_; }
  double g() const { return r_ / (r_ * r_ + x_ * x_); }
  double beta() const { return x_ / (r_ * r_ + x_ * x_); }
  double weight(WeightKind kind) const { return kind == WeightKind::resistance ? r_ : x_; }

  bool connects(const BusId& u, const BusId& v) const {
    return (a_ == u && b_ == v) || (a_ == v && b_ == u);
  }
  const BusId& other(const BusId& end) const { return end == a_ ? b_ : a_; }
  /// Same impedance, endpoints listed from `from`.
  Line oriented_from(const BusId& from) const;

 private:
  BusId a_;
  BusId b_;
  double r_;
  double x_;
};

/// A (possibly unrooted) radial grid. Construction checks bus ids, line endpoints and impedance
/// positivity; tree-ness is reported by validate() and required by the tree-algebra operations.
class RadialGrid {
 public:
  RadialGrid() = default;
  RadialGrid(std::vector<Bus> buses, std::vector<Line> lines, std::optional<BusId> root);

  /// Builds a grid whose bus kinds follow the structure: root is the substation, degree-1 buses are
  /// leaves, everything else internal. `observed` lists the observed buses; leaves if omitted.
  static RadialGrid from_lines(const std::vector<BusId>& bus_ids, std::vector<Line> lines,
                               std::optional<BusId> root,
                               const std::optional<std::vector<BusId>>& observed = std::nullopt);

  const std::vector<Bus>& buses() const { return buses_; }
  const std::vector<Line>& lines() const { return lines_; }
  const std::optional<BusId>& root() const { return root_; }
  bool rooted() const { return root_.has_value(); }
  bool is_tree() const { return is_tree_; }

  bool contains(const BusId& id) const { return index_.count(id) > 0; }
  std::size_t index_of(const BusId& id) const;
  const Bus& bus(const BusId& id) const { return buses_[index_of(id)]; }
  std::size_t degree(const BusId& id) const { return adjacency_[index_of(id)].size(); }
  std::vector<BusId> neighbors(const BusId& id) const;
  const Line* find_line(const BusId& u, const BusId& v) const;

  std::vector<BusId> bus_ids() const;      // sorted
  std::vector<BusId> observed_ids() const;  // sorted
  std::vector<BusId> leaf_ids() const;      // sorted
  /// Every bus except the root, sorted; the index order of LaplacianInverse and NodeState.
  std::vector<BusId> non_substation_ids() const;

  // Tree algebra. All of these require is_tree(); an unrooted tree is hung from its smallest id.
  const BusId& anchor() const { return buses_[anchor_].id; }
  std::optional<BusId> parent(const BusId& id) const;
  std::vector<BusId> children(const BusId& id) const;
  BusId lca(const BusId& a, const BusId& b) const;
  /// Impedance sum from the anchor (root) to `id`.
  double depth_weight(const BusId& id, WeightKind kind) const;
  /// True if `d` lies in the subtree hanging from `a` (a is its own descendant).
  bool is_descendant(const BusId& d, const BusId& a) const;

 private:
  void require_tree() const;
  std::size_t lca_index(std::size_t a, std::size_t b) const;

  std::vector<Bus> buses_;
  std::vector<Line> lines_;
  std::optional<BusId> root_;
  std::map<BusId, std::size_t> index_;
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> adjacency_;  // (bus, line)

  bool is_tree_ = false;
  std::size_t anchor_ = 0;
  std::vector<std::size_t> parent_;
  std::vector<std::size_t> parent_line_;
  std::vector<std::size_t> depth_;
  std::vector<double> depth_r_;
  std::vector<double> depth_x_;
};

struct GridDiagnostics {
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
};

/// Structural checks: connectivity, acyclicity, substation count, bus-kind consistency. With
/// `require_hidden_degree3` also flags unobserved leaves and hidden buses of degree below three.
GridDiagnostics validate(const RadialGrid& grid, bool require_hidden_degree3);

/// Lines along the unique path from `a` to `b`, each oriented in the direction of travel.
std::vector<Line> path(const RadialGrid& grid, const BusId& a, const BusId& b);

/// Inverse of the reduced weighted Laplacian (1/r or 1/x edge weights, root removed), built from
/// common root-path sums.
class LaplacianInverse {
 public:
  LaplacianInverse(WeightKind kind, std::vector<BusId> ids, Eigen::MatrixXd entries);

  WeightKind kind() const { return kind_; }
  const std::vector<BusId>& ids() const { return ids_; }
  const Eigen::MatrixXd& matrix() const { return entries_; }
  std::size_t index_of(const BusId& id) const;
  double entry(const BusId& a, const BusId& b) const {
    return entries_(static_cast<Eigen::Index>(index_of(a)), static_cast<Eigen::Index>(index_of(b)));
  }

 private:
  WeightKind kind_;
  std::vector<BusId> ids_;
  std::map<BusId, std::size_t> index_;
  Eigen::MatrixXd entries_;
};

LaplacianInverse laplacian_inverse(const RadialGrid& grid, WeightKind kind);

double effective_distance(const RadialGrid& grid, const BusId& a, const BusId& b, WeightKind kind);

/// Removes every hidden (unobserved, non-root) degree-2 bus, merging its two lines into one whose
/// r and x are the sums.
RadialGrid kron_reduce_degree2(const RadialGrid& grid);

/// The part of a grid that leaf measurements can identify: unobserved dangling buses (including an
/// unobserved substation of degree one) are pruned, then every unobserved degree-2 bus is merged
/// away as in kron_reduce_degree2.
RadialGrid observable_skeleton(const RadialGrid& grid);

/// Correspondence between two trees over the same observed labels. Observed buses and a shared
/// substation match by id; hidden buses match by observed-descendant set (exact sets first, then
/// greedy by largest Jaccard overlap).
struct TreeMatch {
  std::map<BusId, BusId> first_to_second;
  std::size_t edge_difference = 0;
  /// Pairs of matching lines (line in first, line in second).
  std::vector<std::pair<Line, Line>> common_lines;
};

TreeMatch match_trees(const RadialGrid& first, const RadialGrid& second);
std::size_t tree_edit_distance(const RadialGrid& estimate, const RadialGrid& truth);

}  // namespace gridlearn
