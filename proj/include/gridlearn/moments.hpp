#pragma once

#include "gridlearn/grid.hpp"
#include "gridlearn/sampling.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <utility>
#include <vector>

namespace gridlearn {

enum class Provenance { empirical, analytic };

/// Second moments over an observed node set (sorted ids). Matrices are indexed (a, b) with a the
/// row: vp(a, b) = E[v_a p_b], vq(a, b) = E[v_a q_b], vv(a, b) = E[v_a v_b].
struct MomentSet {
  std::vector<BusId> nodes;
  Eigen::MatrixXd vp, vq, vv;
  Eigen::VectorXd pp, qq, pq;
  Provenance provenance = Provenance::analytic;
  std::size_t n_samples = 0;

  std::size_t index_of(const BusId& id) const;
  bool contains(const BusId& id) const;
  /// Restriction to a subset of nodes.
  MomentSet subset(const std::vector<BusId>& keep) const;
};

/// Running sums for empirical moments; samples can be added in chunks.
class MomentAccumulator {
 public:
  explicit MomentAccumulator(std::vector<BusId> nodes);

  /// Adds every sample of `samples`, reading only the accumulator's nodes through the mask.
  void add(const SampleSet& samples);
  std::size_t count() const { return n_; }
  /// Moments with 1/n normalization; requires n >= 2.
  MomentSet moments() const;

 private:
  std::vector<BusId> nodes_;
  std::size_t n_ = 0;
  Eigen::MatrixXd vp_, vq_, vv_;
  Eigen::VectorXd pp_, qq_, pq_;
};

MomentSet empirical_moments(const SampleSet& samples);

/// Closed-form moments under the LC-PF model for `observed` (leaves if omitted).
MomentSet analytic_moments(const RadialGrid& grid, const InjectionModel& model,
                           const std::optional<std::vector<BusId>>& observed = std::nullopt);

/// Block-diagonal union of moment sets from independent grids (cross moments are zero).
MomentSet merge_independent(const MomentSet& first, const MomentSet& second);

/// E[(v_a - v_b)^2].
double phi(const MomentSet& m, const BusId& a, const BusId& b);

/// Solves [[E p_b^2, E p_b q_b], [E p_b q_b, E q_b^2]] [h_r; h_x] = [E v_a p_b; E v_a q_b]. Raises
/// IllConditioned when the determinant is not above d_min * E[p_b^2] E[q_b^2].
std::pair<double, double> estimate_h_inverse_entry(const MomentSet& m, const BusId& a, const BusId& b,
                                                   double d_min = 1e-8);

struct DistanceMatrix {
  std::vector<BusId> nodes;
  Eigen::MatrixXd r;
  Eigen::MatrixXd x;

  std::size_t index_of(const BusId& id) const;
  double dr(const BusId& a, const BusId& b) const;
  double dx(const BusId& a, const BusId& b) const;
};

/// d(a, b) = H(a,a) + H(b,b) - H(a,b) - H(b,a) from estimated inverse entries, which averages the
/// two directed estimates.
DistanceMatrix distance_matrix(const MomentSet& m, const std::optional<std::vector<BusId>>& nodes = std::nullopt,
                               double d_min = 1e-8);

/// Exact path-sum distances between `nodes` of a known grid.
DistanceMatrix exact_distances(const RadialGrid& grid, const std::vector<BusId>& nodes);

void write_distance_csv(const DistanceMatrix& d, const std::filesystem::path& file);

}  // namespace gridlearn
