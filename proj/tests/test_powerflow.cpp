#include "fixtures.hpp"

#include "gridlearn/errors.hpp"
#include "gridlearn/harness.hpp"
#include "gridlearn/powerflow.hpp"
#include "gridlearn/rng.hpp"

#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

using namespace gridlearn;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

Eigen::Index at(const std::vector<BusId>& ids, const BusId& id) {
  return static_cast<Eigen::Index>(std::find(ids.begin(), ids.end(), id) - ids.begin());
}

Eigen::VectorXd normals(PhiloxStream& rng, Eigen::Index n, double scale) {
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = scale * rng.normal();
  return v;
}

double phi(const Eigen::MatrixXd& cov, const std::vector<BusId>& ids, const BusId& a, const BusId& b) {
  const auto i = at(ids, a), j = at(ids, b);
  return cov(i, i) + cov(j, j) - 2.0 * cov(i, j);
}

}  // namespace

TEST_CASE("linear power flow on the canonical grid", "[powerflow]") {
  const auto g = fixtures::g1();
  const auto ids = g.non_substation_ids();  // a, b, c, h
  Eigen::VectorXd p = Eigen::VectorXd::Zero(4), q = Eigen::VectorXd::Zero(4);
  p(at(ids, "a")) = 1.0;
  const auto s = lcpf_solve(g, p, q);
  REQUIRE(s.buses == ids);
  const std::map<BusId, std::pair<double, double>> expected{{"h", {1, 1}}, {"a", {3, 2}}, {"b", {1, 1}}, {"c", {1, 1}}};
  for (const auto& [id, vt] : expected) {
    CHECK_THAT(s.v(at(ids, id)), WithinAbs(vt.first, 1e-12));
    CHECK_THAT(s.theta(at(ids, id)), WithinAbs(vt.second, 1e-12));
  }

  // Independent check through the dense inverses.
  const Eigen::MatrixXd hr = fixtures::numeric_inverse(g, WeightKind::resistance);
  const Eigen::MatrixXd hx = fixtures::numeric_inverse(g, WeightKind::reactance);
  PhiloxStream rng(3, 0);
  const Eigen::VectorXd p2 = normals(rng, 4, 1.0), q2 = normals(rng, 4, 1.0);
  const auto s2 = lcpf_solve(g, p2, q2);
  CHECK((s2.v - (hr * p2 + hx * q2)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((s2.theta - (hx * p2 - hr * q2)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("linear power flow edge cases", "[powerflow]") {
  const auto g = fixtures::g1();
  const auto zero = lcpf_solve(g, Eigen::VectorXd::Zero(4), Eigen::VectorXd::Zero(4));
  CHECK(zero.v.isZero());
  CHECK(zero.theta.isZero());
  CHECK_THROWS_AS(lcpf_solve(g, Eigen::VectorXd::Zero(3), Eigen::VectorXd::Zero(4)), DimensionMismatch);

  PhiloxStream rng(5, 0);
  const Eigen::VectorXd p1 = normals(rng, 4, 1.0), p2 = normals(rng, 4, 1.0);
  const Eigen::VectorXd z = Eigen::VectorXd::Zero(4);
  const double alpha = -2.5;
  const auto lhs = lcpf_solve(g, alpha * p1 + p2, z);
  const auto a = lcpf_solve(g, p1, z), b = lcpf_solve(g, p2, z);
  CHECK((lhs.v - (alpha * a.v + b.v)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((lhs.theta - (alpha * a.theta + b.theta)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("substation absorbs the net injection under the linear model", "[powerflow][property]") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto g = gen_random_grid(20, 5, {}, seed, true);
    PhiloxStream rng(seed, 1);
    const auto n = static_cast<Eigen::Index>(g.non_substation_ids().size());
    const Eigen::VectorXd p = normals(rng, n, 1.0), q = normals(rng, n, 1.0);
    const auto s = lcpf_solve(g, p, q);
    const auto bal = lcpf_balance(g, s.v, s.theta);
    const auto root = at(bal.buses, *g.root());
    CHECK_THAT(bal.p(root), WithinAbs(-p.sum(), 1e-9));
    CHECK_THAT(bal.q(root), WithinAbs(-q.sum(), 1e-9));
    for (std::size_t i = 0; i < s.buses.size(); ++i) {
      const auto k = at(bal.buses, s.buses[i]);
      CHECK_THAT(bal.p(k), WithinAbs(p(static_cast<Eigen::Index>(i)), 1e-9));
      CHECK_THAT(bal.q(k), WithinAbs(q(static_cast<Eigen::Index>(i)), 1e-9));
    }
  }
}

TEST_CASE("analytic voltage covariance", "[powerflow]") {
  SECTION("two-level grid with unit injections") {
    const auto g = fixtures::g2();
    const auto ids = g.non_substation_ids();
    const auto n = static_cast<Eigen::Index>(ids.size());
    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(n, n);
    const auto cov = analytic_voltage_covariance(g, eye, eye, Eigen::MatrixXd::Zero(n, n));
    const Eigen::MatrixXd h = fixtures::numeric_inverse(g, WeightKind::resistance);
    CHECK((cov - 2.0 * h * h).cwiseAbs().maxCoeff() < 1e-10);
    CHECK_THAT(phi(cov, ids, "a", "c"), WithinAbs(14, 1e-10));
    CHECK_THAT(phi(cov, ids, "b", "c"), WithinAbs(24, 1e-10));
  }
  SECTION("zero injections") {
    const auto g = fixtures::g1();
    const Eigen::MatrixXd z = Eigen::MatrixXd::Zero(4, 4);
    CHECK(analytic_voltage_covariance(g, z, z, z).isZero());
  }
  SECTION("non-symmetric covariance is rejected") {
    const auto g = fixtures::g1();
    Eigen::MatrixXd bad = Eigen::MatrixXd::Identity(4, 4);
    bad(0, 1) = 0.5;
    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(4, 4);
    CHECK_THROWS_AS(analytic_voltage_covariance(g, bad, eye, Eigen::MatrixXd::Zero(4, 4)), Error);
    CHECK_THROWS_AS(analytic_voltage_covariance(g, eye, eye, Eigen::MatrixXd::Zero(3, 3)), DimensionMismatch);
  }
  SECTION("result is symmetric positive semidefinite") {
    const auto g = gen_random_grid(15, 5, {}, 8, true);
    const auto n = static_cast<Eigen::Index>(g.non_substation_ids().size());
    PhiloxStream rng(8, 0);
    Eigen::MatrixXd a(n, n), b(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) {
        a(i, j) = rng.normal();
        b(i, j) = rng.normal();
      }
    // Joint (p, q) covariance [[A A^T, A B^T], [B A^T, B B^T]] is PSD by construction.
    const auto cov = analytic_voltage_covariance(g, a * a.transpose(), b * b.transpose(), a * b.transpose());
    CHECK((cov - cov.transpose()).cwiseAbs().maxCoeff() < 1e-10);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    CHECK(eig.eigenvalues().minCoeff() > -1e-10 * eig.eigenvalues().maxCoeff());
  }
}

TEST_CASE("analytic covariance matches Monte-Carlo draws", "[powerflow][montecarlo]") {
  const auto g = fixtures::g1();
  const LcpfModel model(g);
  const auto n = static_cast<Eigen::Index>(g.non_substation_ids().size());
  // p and q correlated per bus: q = 0.5 p + sqrt(0.75) w.
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(n, n);
  const auto exact = analytic_voltage_covariance(g, eye, eye, 0.5 * eye);

  auto sampled_error = [&](std::size_t draws, std::uint64_t stream) {
    PhiloxStream rng(11, stream);
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(n, n);
    for (std::size_t k = 0; k < draws; ++k) {
      const Eigen::VectorXd p = normals(rng, n, 1.0);
      const Eigen::VectorXd q = 0.5 * p + normals(rng, n, std::sqrt(0.75));
      const auto s = model.solve(p, q);
      acc.noalias() += s.v * s.v.transpose();
    }
    acc /= static_cast<double>(draws);
    return (acc - exact).norm() / exact.norm();
  };

  CHECK(sampled_error(1'000'000, 0) < 0.01);

  // Error falls like 1/sqrt(n): averaged over replicates, four times the draws halves it.
  double small = 0.0, large = 0.0;
  for (std::uint64_t r = 1; r <= 30; ++r) {
    small += sampled_error(2000, r);
    large += sampled_error(8000, 100 + r);
  }
  CHECK(small / large > 1.5);
  CHECK(small / large < 2.7);
}

TEST_CASE("AC power flow", "[powerflow]") {
  const auto g = fixtures::g1();
  const Eigen::VectorXd z = Eigen::VectorXd::Zero(4);

  SECTION("flat start is the zero-injection solution") {
    const auto r = acpf_solve(g, z, z);
    CHECK(r.iterations == 1);
    CHECK(r.state.v.isZero());
    CHECK(r.state.theta.isZero());
  }

  SECTION("small injections agree with the linear model") {
    // With impedances of several per-unit on this grid the second-order terms are not tiny, so the
    // 1e-4 bound holds for a typical draw and for a lone injection, not for every draw.
    PhiloxStream rng(21, 0);
    std::vector<double> gaps;
    for (int k = 0; k < 200; ++k) {
      const Eigen::VectorXd p = normals(rng, 4, 1e-3), q = normals(rng, 4, 1e-3);
      const auto ac = acpf_solve(g, p, q);
      const auto lc = lcpf_solve(g, p, q);
      gaps.push_back((ac.state.v - lc.v).cwiseAbs().maxCoeff());
    }
    std::nth_element(gaps.begin(), gaps.begin() + 100, gaps.end());
    CHECK(gaps[100] <= 1e-4);

    Eigen::VectorXd unit = Eigen::VectorXd::Zero(4);
    unit(at(g.non_substation_ids(), "a")) = 1e-3;
    CHECK((acpf_solve(g, unit, z).state.v - lcpf_solve(g, unit, z).v).cwiseAbs().maxCoeff() <= 1e-4);
  }

  SECTION("gap to the linear model is second order") {
    PhiloxStream rng(22, 0);
    const Eigen::VectorXd p = normals(rng, 4, 1e-2), q = normals(rng, 4, 1e-2);
    auto gap = [&](double s) {
      return (acpf_solve(g, s * p, s * q).state.v - lcpf_solve(g, s * p, s * q).v).cwiseAbs().maxCoeff();
    };
    const double ratio = gap(1.0) / gap(0.5);
    CHECK(ratio > 4.0 * 0.7);
    CHECK(ratio < 4.0 * 1.3);
  }

  SECTION("solution satisfies the power balance") {
    const auto big = gen_random_grid(25, 5, {}, 31, true);
    const AcpfSolver solver(big);
    const auto n = static_cast<Eigen::Index>(solver.buses().size());
    PhiloxStream rng(31, 0);
    const Eigen::VectorXd p = normals(rng, n, 0.02), q = normals(rng, n, 0.02);
    const auto r = solver.solve(p, q);
    CHECK(r.mismatch <= 1e-8);
    const Eigen::VectorXd vmag = Eigen::VectorXd::Ones(n) + r.state.v;
    CHECK(solver.mismatch(vmag, r.state.theta, p, q).cwiseAbs().maxCoeff() <= 1e-8);
  }

  SECTION("oversized injections fail loudly") {
    AcpfOptions opts;
    opts.max_iter = 5;
    const Eigen::VectorXd huge = Eigen::VectorXd::Constant(4, 50.0);
    CHECK_THROWS_AS(acpf_solve(g, huge, huge, opts), Error);
  }
}

TEST_CASE("AC Jacobian matches finite differences", "[powerflow]") {
  const auto g = gen_random_grid(8, 4, {}, 17, true);
  const AcpfSolver solver(g);
  const auto n = static_cast<Eigen::Index>(solver.buses().size());
  PhiloxStream rng(17, 0);
  const Eigen::VectorXd vmag = Eigen::VectorXd::Ones(n) + normals(rng, n, 0.01);
  const Eigen::VectorXd angle = normals(rng, n, 0.01);
  const Eigen::VectorXd z = Eigen::VectorXd::Zero(n);
  const auto jac = solver.jacobian(vmag, angle);
  const double h = 1e-6;
  for (Eigen::Index k = 0; k < 2 * n; ++k) {
    Eigen::VectorXd a1 = angle, a2 = angle, v1 = vmag, v2 = vmag;
    if (k < n) {
      a1(k) += h;
      a2(k) -= h;
    } else {
      v1(k - n) += h;
      v2(k - n) -= h;
    }
    const Eigen::VectorXd fd = (solver.mismatch(v1, a1, z, z) - solver.mismatch(v2, a2, z, z)) / (2 * h);
    CHECK((fd - jac.col(k)).cwiseAbs().maxCoeff() < 1e-5 * (1.0 + jac.col(k).cwiseAbs().maxCoeff()));
  }
}
