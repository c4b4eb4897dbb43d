#include "fixtures.hpp"

#include "gridlearn/errors.hpp"
#include "gridlearn/harness.hpp"
#include "gridlearn/moments.hpp"
#include "gridlearn/rng.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>

using namespace gridlearn;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

const std::vector<BusId> kLeaves{"a", "b", "c"};

MomentSet g1_analytic() {
  const auto g = fixtures::g1();
  return analytic_moments(g, InjectionModel::isotropic(g, 1.0), kLeaves);
}

}  // namespace

TEST_CASE("phi on the canonical grids", "[moments]") {
  const auto m = g1_analytic();
  CHECK(phi(m, "a", "a") == 0.0);
  // Siblings a, b under h: only their own line injections differ.
  CHECK_THAT(phi(m, "a", "b"), WithinAbs(4 + 1 + 9 + 4, 1e-10));
  CHECK_THROWS_AS(phi(m, "a", "h"), MaskError);

  const auto g = fixtures::g2();
  const auto m2 = analytic_moments(g, InjectionModel::isotropic(g, 1.0));
  CHECK_THAT(phi(m2, "a", "c"), WithinAbs(14, 1e-10));
  CHECK_THAT(phi(m2, "a", "c") - phi(m2, "b", "c"), WithinAbs(-10, 1e-10));
}

TEST_CASE("inverse Laplacian entries from moments", "[moments]") {
  const auto m = g1_analytic();
  const auto [ab_r, ab_x] = estimate_h_inverse_entry(m, "a", "b");
  CHECK_THAT(ab_r, WithinAbs(1, 1e-12));
  CHECK_THAT(ab_x, WithinAbs(1, 1e-12));
  const auto [aa_r, aa_x] = estimate_h_inverse_entry(m, "a", "a");
  CHECK_THAT(aa_r, WithinAbs(3, 1e-12));
  CHECK_THAT(aa_x, WithinAbs(2, 1e-12));

  auto singular = m;
  singular.pq(singular.index_of("b")) = 1.0;  // E[p^2] E[q^2] = E[pq]^2
  CHECK_THROWS_AS(estimate_h_inverse_entry(singular, "a", "b"), IllConditioned);
  CHECK_THROWS_WITH(estimate_h_inverse_entry(singular, "a", "b"), ContainsSubstring("b"));
}

TEST_CASE("distance matrix from exact moments", "[moments]") {
  const auto d = distance_matrix(g1_analytic());
  CHECK_THAT(d.dr("a", "b"), WithinAbs(5, 1e-12));
  CHECK_THAT(d.dr("a", "c"), WithinAbs(6, 1e-12));
  CHECK_THAT(d.dr("b", "c"), WithinAbs(7, 1e-12));
  CHECK_THAT(d.dx("a", "b"), WithinAbs(3, 1e-12));
  for (const auto& a : kLeaves) {
    CHECK(d.dr(a, a) == 0.0);
    CHECK(d.dx(a, a) == 0.0);
  }
  CHECK((d.r - d.r.transpose()).isZero());
}

TEST_CASE("distance matrix from samples", "[moments][montecarlo]") {
  const auto g = fixtures::g1();
  const auto samples = generate_samples(g, InjectionModel::isotropic(g, 1.0), 100000, Solver::lcpf, 2024);
  const auto d = distance_matrix(empirical_moments(samples));
  double worst = 0.0;
  for (const auto& a : kLeaves)
    for (const auto& b : kLeaves)
      worst = std::max(worst, std::abs(d.dr(a, b) - effective_distance(g, a, b, WeightKind::resistance)));
  CHECK(worst <= 0.15);
}

TEST_CASE("empirical moments", "[moments]") {
  const auto g = fixtures::g1();
  SECTION("zero samples give zero moments") {
    SampleSet::Matrices data{Eigen::MatrixXd::Zero(5, 4), Eigen::MatrixXd::Zero(5, 4), Eigen::MatrixXd::Zero(5, 4),
                             Eigen::MatrixXd::Zero(5, 4)};
    const SampleSet s(g.non_substation_ids(), data, kLeaves);
    const auto m = empirical_moments(s);
    CHECK(m.vv.isZero());
    CHECK(m.vp.isZero());
    CHECK(m.pp.isZero());
    CHECK(m.provenance == Provenance::empirical);
    CHECK(m.n_samples == 5);
  }
  SECTION("a single sample is not enough") {
    const auto s = generate_samples(g, InjectionModel::isotropic(g, 1.0), 1, Solver::lcpf, 1);
    CHECK_THROWS_AS(empirical_moments(s), InsufficientSamples);
  }
  SECTION("plain averages without centring") {
    SampleSet::Matrices data{Eigen::MatrixXd::Constant(3, 4, 2.0), Eigen::MatrixXd::Zero(3, 4),
                             Eigen::MatrixXd::Constant(3, 4, 1.0), Eigen::MatrixXd::Constant(3, 4, -1.0)};
    const SampleSet s(g.non_substation_ids(), data, kLeaves);
    const auto m = empirical_moments(s);
    CHECK(m.vv(0, 1) == 4.0);
    CHECK(m.vp(0, 0) == 2.0);
    CHECK(m.pq(2) == -1.0);
  }
  SECTION("chunked accumulation equals one pass") {
    const auto model = fixtures::generic_injections(g, 4);
    const auto all = generate_samples(g, model, 300, Solver::lcpf, 9);
    MomentAccumulator acc(kLeaves);
    acc.add(generate_samples(g, model, 100, Solver::lcpf, 9));
    acc.add(generate_samples(g, model, 200, Solver::lcpf, 9, 100));
    const auto a = acc.moments(), b = empirical_moments(all);
    CHECK((a.vv - b.vv).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((a.vq - b.vq).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((a.pq - b.pq).cwiseAbs().maxCoeff() < 1e-12);
  }
  SECTION("empirical moments approach the analytic ones at the root-n rate") {
    const auto model = InjectionModel::isotropic(g, 1.0);
    const auto exact = analytic_moments(g, model, kLeaves);
    auto err = [&](std::size_t n, std::uint64_t seed) {
      const auto m = empirical_moments(generate_samples(g, model, n, Solver::lcpf, seed));
      return (m.vv - exact.vv).norm() + (m.vp - exact.vp).norm() + (m.vq - exact.vq).norm();
    };
    double small = 0.0, large = 0.0;
    for (std::uint64_t s = 1; s <= 30; ++s) {
      small += err(2000, s);
      large += err(8000, 1000 + s);
    }
    CHECK(small / large > 1.5);
    CHECK(small / large < 2.7);
  }
}

TEST_CASE("merge_independent and subset", "[moments]") {
  const auto m = g1_analytic();
  const auto sub = m.subset({"a", "c"});
  CHECK(sub.nodes == std::vector<BusId>{"a", "c"});
  CHECK(sub.vv(1, 0) == m.vv(m.index_of("c"), m.index_of("a")));

  const auto g = fixtures::g2();
  auto other = analytic_moments(g, InjectionModel::isotropic(g, 1.0));
  other.nodes = {"x", "y", "z"};
  const auto merged = merge_independent(m, other);
  CHECK(merged.nodes.size() == 6);
  CHECK(merged.vv(merged.index_of("a"), merged.index_of("x")) == 0.0);
  CHECK(phi(merged, "x", "z") == phi(other, "x", "z"));
}

TEST_CASE("property: exact moments give exact distances", "[moments][property]") {
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    const auto g = gen_random_grid(5 + 3 * seed, 5, {0.05, 1.0}, seed, true);
    const auto m = analytic_moments(g, fixtures::generic_injections(g, seed));
    const auto d = distance_matrix(m);
    for (const auto& a : d.nodes)
      for (const auto& b : d.nodes) {
        if (a == b) continue;
        const double r = effective_distance(g, a, b, WeightKind::resistance);
        const double x = effective_distance(g, a, b, WeightKind::reactance);
        CHECK_THAT(d.dr(a, b), WithinRel(r, 1e-9));
        CHECK_THAT(d.dx(a, b), WithinRel(x, 1e-9));
      }
  }
}

TEST_CASE("property: sibling leaves only see their own lines", "[moments][property]") {
  std::size_t checks = 0;
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    const auto g = gen_random_grid(20, 5, {}, seed, true);
    const auto model = fixtures::generic_injections(g, seed);
    const auto m = analytic_moments(g, model);
    const auto leaves = g.leaf_ids();
    auto own = [&](const BusId& leaf) {
      const Line* l = g.find_line(leaf, *g.parent(leaf));
      const auto i = static_cast<Eigen::Index>(model.index_of(leaf));
      return l->r() * l->r() * model.pp(i) + l->x() * l->x() * model.qq(i) + 2.0 * l->r() * l->x() * model.pq(i);
    };
    for (const auto& a : leaves)
      for (const auto& b : leaves)
        if (a < b && g.parent(a) == g.parent(b)) {
          CHECK_THAT(phi(m, a, b), WithinRel(own(a) + own(b), 1e-9));
          ++checks;
        }
  }
  CHECK(checks > 30);
}

TEST_CASE("property: empirical distance error shrinks at the root-n rate", "[moments][property][montecarlo]") {
  const auto g = fixtures::g1();
  const auto model = InjectionModel::isotropic(g, 1.0);
  auto max_err = [&](std::size_t n, std::uint64_t seed) {
    const auto d = distance_matrix(empirical_moments(generate_samples(g, model, n, Solver::lcpf, seed)));
    double worst = 0.0;
    for (const auto& a : kLeaves)
      for (const auto& b : kLeaves)
        worst = std::max(worst, std::abs(d.dr(a, b) - effective_distance(g, a, b, WeightKind::resistance)));
    return worst;
  };
  double small = 0.0, large = 0.0;
  for (std::uint64_t s = 1; s <= 20; ++s) {
    small += max_err(2500, derive_seed(71, s));
    large += max_err(10000, derive_seed(72, s));
  }
  const double ratio = small / large;
  CHECK(ratio > 2.0 * 0.7);
  CHECK(ratio < 2.0 * 1.3);
}

TEST_CASE("distance CSV export", "[moments]") {
  const auto dir = fixtures::scratch("distances");
  write_distance_csv(distance_matrix(g1_analytic()), dir / "d.csv");
  CHECK(std::filesystem::file_size(dir / "d.csv") > 0);
}
