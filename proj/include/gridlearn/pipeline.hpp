#pragma once

#include "gridlearn/moments.hpp"
#include "gridlearn/result.hpp"
#include "gridlearn/rg.hpp"
#include "gridlearn/sampling.hpp"

#include <Eigen/Dense>

#include <vector>

namespace gridlearn {

struct Alg3Config {
  RgConfig rg;
  /// Scale-free guard on each leaf's 2x2 injection moment matrix.
  double d_min = 1e-8;
};

/// Distances from moments, then recursive grouping, then per-edge impedances. The output is
/// unrooted: the substation never appears among the moment nodes, so nothing identifies it.
EstimationResult run_alg3(const MomentSet& moments, const Alg3Config& config);
EstimationResult run_alg3(const SampleSet& samples, const Alg3Config& config);

/// Connected components of the graph joining nodes whose voltage correlation exceeds `threshold`
/// in magnitude. Groups and their members are sorted.
std::vector<std::vector<BusId>> split_by_substation(const MomentSet& moments, double threshold = 0.1);
std::vector<std::vector<BusId>> split_by_substation(const SampleSet& samples, double threshold = 0.1);

/// One run_alg3 per substation group, in group order; groups run concurrently.
std::vector<EstimationResult> run_alg3_grouped(const MomentSet& moments, const Alg3Config& config,
                                               double threshold = 0.1, unsigned threads = 0);

struct HiddenStateRecovery {
  std::vector<BusId> buses;  // hidden non-substation buses, sorted
  Eigen::MatrixXd v, theta, p, q;  // samples x buses
  /// Second moments of the recovered hidden injections.
  Eigen::VectorXd pp, qq, pq;
  Eigen::Index rank = 0;
  Eigen::Index unknowns = 0;
  /// Largest absolute misfit of the observed v, theta rows after the solve; zero up to round-off
  /// on linearized data.
  double residual = 0.0;
};

/// Per sample, solves the linearized flow equations at the observed buses for the hidden p, q, then
/// maps all injections back to hidden v, theta. Needs a rooted grid with impedances and observed
/// v, theta, p, q. Raises RankDeficient when the hidden injections are not identifiable.
HiddenStateRecovery recover_hidden_states(const RadialGrid& grid, const SampleSet& samples);

}  // namespace gridlearn
