#pragma once

#include "gridlearn/grid.hpp"
#include "gridlearn/moments.hpp"
#include "gridlearn/result.hpp"

#include <optional>
#include <vector>

namespace gridlearn {

struct Alg1Config {
  double tau1 = 1e-6;
  double tau2 = 1e-6;
  std::vector<Line> permissible;
  /// Substation id; the surviving top component is joined to it.
  std::optional<BusId> root;
};

/// Second-order injection statistics of one leaf.
struct LeafStats {
  double pp = 0.0;
  double qq = 0.0;
  double pq = 0.0;
};

LeafStats leaf_stats(const MomentSet& m, const BusId& leaf);

struct TestOutcome {
  bool applicable = false;  // false when a required permissible edge is missing
  bool pass = false;
  double residual = 0.0;  // relative, with a 1e-15 absolute floor on the denominator
};

/// Right side of the sibling identity: impedance-weighted injection moments of a and b over their
/// lines to a common parent.
double sibling_rhs(double ra, double xa, const LeafStats& a, double rb, double xb, const LeafStats& b);

/// Tests whether leaves a, b hang from k1 given the permissible lines (a, k1) and (b, k1), or
/// nullptr when either line is not permissible.
TestOutcome sibling_parent_test(double phi_ab, const Line* a_k1, const Line* b_k1, const LeafStats& a,
                                const LeafStats& b, double tau1);

/// Path impedances to a hypothesized ancestor k2: from a, from b, and from their parent k1.
struct PathToAncestor {
  double ra = 0.0, xa = 0.0;
  double rb = 0.0, xb = 0.0;
  double rk1 = 0.0, xk1 = 0.0;
};

double intermediate_rhs(const PathToAncestor& path, const LeafStats& a, const LeafStats& b);

/// Tests phi_ac - phi_bc against the three-leaf identity for a hypothesized ancestor. The caller
/// folds the hypothesized edge into `path`; `edge_permissible` false marks the test inapplicable.
TestOutcome intermediate_edge_test(double phi_ac, double phi_bc, const PathToAncestor& path, const LeafStats& a,
                                   const LeafStats& b, double tau2, bool edge_permissible = true);

/// Topology from leaf voltage moments, leaf injection statistics and a permissible edge set with
/// known impedances. Nodes that cannot be placed are reported in diagnostics.unresolved.
EstimationResult run_alg1(const MomentSet& moments, const Alg1Config& config);

}  // namespace gridlearn
