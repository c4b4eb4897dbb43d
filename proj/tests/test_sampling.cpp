#include "fixtures.hpp"

#include "gridlearn/errors.hpp"
#include "gridlearn/harness.hpp"
#include "gridlearn/powerflow.hpp"
#include "gridlearn/rng.hpp"
#include "gridlearn/sampling.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>
#include <fstream>

using namespace gridlearn;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;

namespace {

double corr(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  const Eigen::VectorXd xc = x.array() - x.mean(), yc = y.array() - y.mean();
  return xc.dot(yc) / std::sqrt(xc.squaredNorm() * yc.squaredNorm());
}

void write_file(const std::filesystem::path& f, const std::string& text) {
  std::ofstream(f) << text;
}

}  // namespace

TEST_CASE("Philox4x32-10 known-answer vectors", "[rng]") {
  using A4 = std::array<std::uint32_t, 4>;
  CHECK(philox4x32({0, 0, 0, 0}, {0, 0}) == A4{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  CHECK(philox4x32({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
        A4{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
}

TEST_CASE("random streams are reproducible and independent", "[rng]") {
  PhiloxStream a(99, 3), b(99, 3), c(99, 4);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u32();
    CHECK(x == b.next_u32());
    differs = differs || x != c.next_u32();
  }
  CHECK(differs);
  CHECK(derive_seed(1, 2) == derive_seed(1, 2));
  CHECK(derive_seed(1, 2) != derive_seed(2, 1));

  PhiloxStream u(5, 0);
  double mean = 0.0, sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = u.normal();
    mean += z;
    sq += z * z;
  }
  CHECK(std::abs(mean / n) < 5.0 / std::sqrt(n));
  CHECK(std::abs(sq / n - 1.0) < 5.0 * std::sqrt(2.0 / n));
}

TEST_CASE("draw_injections moments", "[sampling]") {
  const auto g = fixtures::g1();
  const auto model = InjectionModel::isotropic(g, 1.0);

  SECTION("cross moment of an independent bus") {
    const auto d = draw_injections(model, 1'000'000, 7);
    const auto a = static_cast<Eigen::Index>(model.index_of("a"));
    const double epq = d.p.col(a).dot(d.q.col(a)) / 1e6;
    CHECK(std::abs(epq) <= 0.01);
  }

  SECTION("no correlation between buses without a common factor") {
    const std::size_t n = 100000;
    const auto d = draw_injections(model, n, 8);
    const double bound = 3.0 / std::sqrt(static_cast<double>(n));
    for (Eigen::Index i = 0; i < d.p.cols(); ++i)
      for (Eigen::Index j = i + 1; j < d.p.cols(); ++j) {
        CHECK(std::abs(corr(d.p.col(i), d.p.col(j))) <= bound);
        CHECK(std::abs(corr(d.q.col(i), d.q.col(j))) <= bound);
      }
  }

  SECTION("common factor sets the correlation") {
    auto m = model;
    m.correlation = 0.3;
    const auto d = draw_injections(m, 200000, 9);
    CHECK_THAT(corr(d.p.col(0), d.p.col(1)), WithinAbs(0.3, 0.01));
    CHECK_THAT(corr(d.p.col(0), d.q.col(2)), WithinAbs(0.3, 0.01));
  }

  SECTION("same seed, same draws; slices agree with the full draw") {
    const auto a = draw_injections(model, 50, 10);
    const auto b = draw_injections(model, 50, 10);
    CHECK(a.p == b.p);
    CHECK(a.q == b.q);
    const auto tail = draw_injections(model, 20, 10, 30);
    CHECK(tail.p == a.p.bottomRows(20));
    CHECK(tail.q == a.q.bottomRows(20));
  }

  SECTION("malformed models are rejected") {
    auto m = model;
    m.correlation = 1.0;
    CHECK_THROWS_AS(draw_injections(m, 1, 1), PreconditionError);
    m = model;
    m.pq(0) = 2.0;  // |E[pq]| > sqrt(E[p^2] E[q^2])
    CHECK_THROWS_AS(draw_injections(m, 1, 1), PreconditionError);
  }
}

TEST_CASE("property: empirical injection moments converge", "[sampling][property]") {
  const auto g = gen_random_grid(12, 5, {}, 3, true);
  const auto model = fixtures::generic_injections(g, 3);
  const std::size_t n = 40000;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    for (auto kind : {InjectionKind::gaussian, InjectionKind::uniform}) {
      auto m = model;
      m.kind = kind;
      const auto d = draw_injections(m, n, seed);
      for (Eigen::Index j = 0; j < d.p.cols(); ++j) {
        const Eigen::ArrayXd pp = d.p.col(j).array().square(), qq = d.q.col(j).array().square();
        const Eigen::ArrayXd pq = d.p.col(j).array() * d.q.col(j).array();
        for (const auto& [prod, truth] : {std::pair{pp, m.pp(j)}, std::pair{qq, m.qq(j)}, std::pair{pq, m.pq(j)}}) {
          const double mean = prod.mean();
          const double sd = std::sqrt((prod - mean).square().mean());
          CHECK(std::abs(mean - truth) <= 5.0 * sd / std::sqrt(static_cast<double>(n)));
        }
        CHECK(std::abs(d.p.col(j).mean()) <= 5.0 * std::sqrt(m.pp(j) / static_cast<double>(n)));
      }
    }
  }
}

TEST_CASE("generate_samples", "[sampling]") {
  const auto g = fixtures::g1();
  const auto model = InjectionModel::isotropic(g, 1.0);

  SECTION("empty request") {
    const auto s = generate_samples(g, model, 0, Solver::lcpf, 1);
    CHECK(s.size() == 0);
  }

  SECTION("mask defaults to the leaves and guards hidden buses") {
    const auto s = generate_samples(g, model, 10, Solver::lcpf, 1);
    CHECK(s.observed() == std::vector<BusId>{"a", "b", "c"});
    CHECK(s.column(Quantity::v, "a").size() == 10);
    CHECK_THROWS_AS(s.column(Quantity::v, "h"), MaskError);
    CHECK_THROWS_AS(s.column(Quantity::v, "zz"), UnknownBus);
    CHECK(s.observed_matrix(Quantity::p).cols() == 3);
  }

  SECTION("linear samples reproduce the analytic covariance") {
    const std::size_t n = 400000;
    const auto s = generate_samples(g, model, n, Solver::lcpf, 2);
    const auto& v = s.truth().v;
    const Eigen::MatrixXd emp = v.transpose() * v / static_cast<double>(n);
    const auto ids = g.non_substation_ids();
    const auto k = static_cast<Eigen::Index>(ids.size());
    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(k, k);
    const auto exact = analytic_voltage_covariance(g, eye, eye, Eigen::MatrixXd::Zero(k, k));
    CHECK((emp - exact).norm() / exact.norm() < 0.01);
  }

  SECTION("AC samples are close to the linear ones for small injections") {
    const auto small = InjectionModel::isotropic(g, 1e-4);
    const auto lc = generate_samples(g, small, 20, Solver::lcpf, 3);
    const auto ac = generate_samples(g, small, 20, Solver::acpf, 3);
    CHECK((lc.truth().p - ac.truth().p).cwiseAbs().maxCoeff() == 0.0);
    CHECK((lc.truth().v - ac.truth().v).cwiseAbs().maxCoeff() < 1e-5);
  }

  SECTION("AC failures name the sample") {
    const auto huge = InjectionModel::isotropic(g, 100.0);
    SimulationOptions opts;
    opts.acpf.max_iter = 4;
    CHECK_THROWS_WITH(generate_samples(g, huge, 3, Solver::acpf, 4, 0, std::nullopt, opts), ContainsSubstring("sample"));
  }

  SECTION("chunked generation equals one pass") {
    const auto all = generate_samples(g, model, 30, Solver::lcpf, 5);
    auto part = generate_samples(g, model, 10, Solver::lcpf, 5);
    part.append(generate_samples(g, model, 20, Solver::lcpf, 5, 10));
    CHECK(part.truth().v == all.truth().v);
  }
}

TEST_CASE("sample CSV round trip", "[sampling]") {
  const auto g = fixtures::g1();
  const auto s = generate_samples(g, InjectionModel::isotropic(g, 0.3), 25, Solver::lcpf, 6);
  const auto dir = fixtures::scratch("samples");

  write_samples_csv(s, dir / "leaves.csv");
  const auto back = read_samples_csv(dir / "leaves.csv");
  CHECK(back.observed() == s.observed());
  for (const auto& b : s.observed())
    for (auto q : {Quantity::v, Quantity::theta, Quantity::p, Quantity::q})
      CHECK((back.column(q, b) - s.column(q, b)).cwiseAbs().maxCoeff() <= 1e-12);

  write_samples_csv(s, dir / "all.csv", true);
  const auto full = read_samples_csv(dir / "all.csv", s.observed());
  CHECK(full.buses().size() == 4);
  CHECK_THROWS_AS(full.column(Quantity::v, "h"), MaskError);

  write_file(dir / "bad.csv", "t,bus,v,theta,p,q\n0,a,1,2,3\n");
  CHECK_THROWS_AS(read_samples_csv(dir / "bad.csv"), FormatError);
}

TEST_CASE("replaying real loads", "[sampling]") {
  const auto dir = fixtures::scratch("replay");

  SECTION("constant column is centred to zero") {
    write_file(dir / "loads.csv", "a,b\n5,1\n5,2\n5,3\n5,6\n");
    const auto r = replay_real_loads(dir / "loads.csv", 0.95, 4, {"a", "b"});
    CHECK(r.p.col(0).isZero());
    CHECK_THAT(r.p.col(1).sum(), WithinAbs(0.0, 1e-12));
    CHECK_THAT(r.q(3, 1), WithinAbs(r.p(3, 1) * std::tan(std::acos(0.95)), 1e-12));
  }

  SECTION("unit power factor") {
    write_file(dir / "loads.csv", "a\n1\n2\n");
    const auto r = replay_real_loads(dir / "loads.csv", 1.0, 2, {"a"});
    CHECK(r.q.isZero());
    REQUIRE_FALSE(r.warnings.empty());
    CHECK_THAT(r.warnings[0], ContainsSubstring("power factor 1"));
  }

  SECTION("errors") {
    write_file(dir / "loads.csv", "a,b\n1,2\n3,4\n");
    CHECK_THROWS_WITH(replay_real_loads(dir / "loads.csv", 0.95, 5, {"a"}), ContainsSubstring("replay exhausted"));
    CHECK_THROWS_AS(replay_real_loads(dir / "loads.csv", 0.95, 2, {"c"}), FormatError);
    write_file(dir / "text.csv", "a\n1\nxyz\n");
    CHECK_THROWS_AS(replay_real_loads(dir / "text.csv", 0.95, 2, {"a"}), FormatError);
  }

  SECTION("replay model feeds leaves from the file and the rest from the Gaussian law") {
    write_file(dir / "loads.csv", "a,b,c\n1,2,3\n2,2,1\n3,0,2\n4,1,1\n");
    const auto g = fixtures::g1();
    auto m = InjectionModel::isotropic(g, 1.0);
    m.kind = InjectionKind::replay;
    m.replay = replay_real_loads(dir / "loads.csv", 0.9, 4, {"a", "b", "c"});
    const auto d = draw_injections(m, 4, 1);
    const auto a = static_cast<Eigen::Index>(m.index_of("a"));
    CHECK((d.p.col(a) - m.replay->p.col(0)).cwiseAbs().maxCoeff() < 1e-15);
    CHECK_THROWS_WITH(draw_injections(m, 5, 1), ContainsSubstring("replay exhausted"));
  }
}
