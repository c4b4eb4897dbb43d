#pragma once

#include "gridlearn/moments.hpp"
#include "gridlearn/result.hpp"

#include <Eigen/Dense>

#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace gridlearn {

enum class RgMode { exact, finite, adaptive };

const char* to_string(RgMode mode);
RgMode rg_mode_from_string(const std::string& s);

struct RgConfig {
  RgMode mode = RgMode::exact;
  /// Classification tolerance. Exact mode still needs a little slack for round-off.
  double epsilon = 1e-8;
  /// Witness radius in d_r units; infinity means every other active node.
  double tau = std::numeric_limits<double>::infinity();
  /// Adaptive growth factor for epsilon.
  double alpha = 2.0;
  /// Adaptive mode gives up once epsilon would exceed this multiple of its initial value.
  double epsilon_cap_factor = 100.0;
  std::string hidden_prefix = "_h";

  void check() const;
};

/// Symmetric distance table that grows as hidden vertices are added.
class DistanceTable {
 public:
  DistanceTable() = default;
  DistanceTable(const std::vector<BusId>& nodes, const Eigen::MatrixXd& d);

  bool contains(const BusId& id) const { return index_.count(id) > 0; }
  const std::vector<BusId>& ids() const { return ids_; }
  void add(const BusId& id);
  /// Drops the most recently added vertex; `id` must be that vertex.
  void remove_last(const BusId& id);
  double operator()(const BusId& a, const BusId& b) const;
  void set(const BusId& a, const BusId& b, double value);

 private:
  std::size_t index_of(const BusId& id) const;

  std::map<BusId, std::size_t> index_;
  std::vector<BusId> ids_;
  Eigen::MatrixXd d_;
};

/// d(a, c) - d(b, c).
double phi_stat(const DistanceTable& d, const BusId& a, const BusId& b, const BusId& c);

enum class Relation { none, a_parent_of_b, b_parent_of_a, siblings };
const char* to_string(Relation r);

struct Classification {
  Relation relation = Relation::none;
  /// Max deviation for a parent relation, spread of Phi for siblings, and the smallest of the
  /// three tests for `none`.
  double residual = 0.0;
};

/// Members of `active` other than a and b within `tau` of both (by `radius`).
std::vector<BusId> witness_set(const DistanceTable& radius, const std::vector<BusId>& active, const BusId& a,
                               const BusId& b, double tau);

/// Parent/sibling test on one pair. a is the parent of leaf b when d(a,b) + Phi_abc stays within
/// epsilon of zero for every witness (b of a when d(a,b) - Phi_abc does); they are siblings when
/// Phi_abc varies by at most epsilon. Parent relations win over siblings.
Classification classify_pair(const DistanceTable& d, const BusId& a, const BusId& b,
                             const std::vector<BusId>& witnesses, double epsilon);

/// Adds hidden vertex h as the parent of `children` and fills d(h, x) for the children and every
/// `targets` entry. Exact mode uses a single witness; finite and adaptive modes average over other
/// children and over witness sets drawn from `radius` (pass the d_r table when updating d_x).
void add_hidden_parent(DistanceTable& d, const DistanceTable& radius, const BusId& h,
                       const std::vector<BusId>& children, const std::vector<BusId>& active,
                       const std::vector<BusId>& targets, RgMode mode, double tau);

struct RgResult {
  std::vector<BusId> observed;
  std::vector<BusId> hidden;
  /// Edge lengths in d_r (r) and d_x (x); not filtered for sign.
  std::vector<EdgeEstimate> edges;
  EstimationDiagnostics diagnostics;
};

/// Recursive grouping on observed-pair distances. Without d_x the x lengths mirror r.
RgResult run_rg(const std::vector<BusId>& observed, const Eigen::MatrixXd& dr,
                const std::optional<Eigen::MatrixXd>& dx, const RgConfig& config);
RgResult run_rg(const DistanceMatrix& d, const RgConfig& config);

/// Converts RG output to a grid; edges with nonpositive r or x are moved to diagnostics.quarantined.
EstimationResult to_estimation_result(const RgResult& rg);

}  // namespace gridlearn
