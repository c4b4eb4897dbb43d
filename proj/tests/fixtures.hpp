#pragma once

#include "gridlearn/grid.hpp"
#include "gridlearn/rng.hpp"
#include "gridlearn/sampling.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <map>
#include <string>

namespace fixtures {

using namespace gridlearn;

// Root t, hidden h, leaves a, b, c.
inline RadialGrid g1() {
  return RadialGrid::from_lines({"t", "h", "a", "b", "c"},
                                {Line("t", "h", 1, 1), Line("h", "a", 2, 1), Line("h", "b", 3, 2), Line("h", "c", 4, 3)},
                                "t");
}

// Siblings a, b under k1; k1 and leaf c under k2; r = x on every line.
inline RadialGrid g2() {
  return RadialGrid::from_lines({"t", "k2", "k1", "a", "b", "c"},
                                {Line("t", "k2", 1, 1), Line("k2", "k1", 1, 1), Line("k1", "a", 1, 1),
                                 Line("k1", "b", 2, 2), Line("k2", "c", 1, 1)},
                                "t");
}

// Per-bus standard deviations in [0.5, 1.5] and p-q correlation in [-0.5, 0.5].
inline InjectionModel generic_injections(const RadialGrid& g, std::uint64_t seed) {
  auto m = InjectionModel::isotropic(g, 1.0);
  PhiloxStream rng(seed, 7);
  for (Eigen::Index i = 0; i < m.pp.size(); ++i) {
    const double sp = 0.5 + rng.uniform(), sq = 0.5 + rng.uniform(), rho = rng.uniform() - 0.5;
    m.pp(i) = sp * sp;
    m.qq(i) = sq * sq;
    m.pq(i) = rho * sp * sq;
  }
  return m;
}

// Inverse of the weighted Laplacian with the root row and column removed, by dense factorization.
inline Eigen::MatrixXd numeric_inverse(const RadialGrid& g, WeightKind kind) {
  const auto ids = g.non_substation_ids();
  std::map<BusId, Eigen::Index> at;
  for (std::size_t i = 0; i < ids.size(); ++i) at[ids[i]] = static_cast<Eigen::Index>(i);
  const auto n = static_cast<Eigen::Index>(ids.size());
  Eigen::MatrixXd lap = Eigen::MatrixXd::Zero(n, n);
  for (const auto& l : g.lines()) {
    const double w = 1.0 / l.weight(kind);
    const bool ia = at.count(l.a()) > 0, ib = at.count(l.b()) > 0;
    if (ia) lap(at[l.a()], at[l.a()]) += w;
    if (ib) lap(at[l.b()], at[l.b()]) += w;
    if (ia && ib) {
      lap(at[l.a()], at[l.b()]) -= w;
      lap(at[l.b()], at[l.a()]) -= w;
    }
  }
  return lap.ldlt().solve(Eigen::MatrixXd::Identity(n, n));
}

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("gridlearn_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace fixtures
