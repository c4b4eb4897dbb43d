#pragma once

#include "gridlearn/grid.hpp"

#include <string>
#include <vector>

namespace gridlearn {

struct EdgeEstimate {
  BusId a;
  BusId b;
  double r = 0.0;
  double x = 0.0;
};

struct EstimationDiagnostics {
  std::vector<double> tolerances_used;
  int epsilon_escalations = 0;
  int metric_switches = 0;
  int iterations = 0;
  /// Hidden parents that landed within tolerance of a child and were merged into it.
  int collapsed_parents = 0;
  bool partial = false;
  std::vector<BusId> unresolved;
  std::vector<std::string> warnings;
  /// Edges whose estimated r or x came out nonpositive; kept out of the recovered grid.
  std::vector<EdgeEstimate> quarantined;
};

struct EstimationResult {
  RadialGrid grid;
  EstimationDiagnostics diagnostics;
};

}  // namespace gridlearn
