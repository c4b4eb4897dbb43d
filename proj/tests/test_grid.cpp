#include "fixtures.hpp"

#include "gridlearn/errors.hpp"
#include "gridlearn/grid.hpp"
#include "gridlearn/grid_io.hpp"
#include "gridlearn/harness.hpp"

#include <catch_amalgamated.hpp>

#include <algorithm>

using namespace gridlearn;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

bool has_violation(const GridDiagnostics& d, const std::string& text) {
  return std::any_of(d.violations.begin(), d.violations.end(),
                     [&](const std::string& v) { return v.find(text) != std::string::npos; });
}

double path_sum(const RadialGrid& g, const BusId& a, const BusId& b, WeightKind kind) {
  double s = 0.0;
  for (const auto& l : path(g, a, b)) s += l.weight(kind);
  return s;
}

}  // namespace

TEST_CASE("line rejects nonpositive impedance and self loops", "[grid]") {
  CHECK_THROWS_AS(Line("a", "b", 0.0, 1.0), InvalidGrid);
  CHECK_THROWS_AS(Line("a", "b", 1.0, -1.0), InvalidGrid);
  CHECK_THROWS_AS(Line("a", "b", std::nan(""), 1.0), InvalidGrid);
  CHECK_THROWS_AS(Line("a", "a", 1.0, 1.0), InvalidGrid);
  const Line l("a", "b", 3.0, 4.0);
  CHECK_THAT(l.g(), WithinRel(3.0 / 25.0));
  CHECK_THAT(l.beta(), WithinRel(4.0 / 25.0));
}

TEST_CASE("grid construction rejects unknown endpoints and duplicates", "[grid]") {
  CHECK_THROWS_AS(RadialGrid::from_lines({"t", "a"}, {Line("t", "z", 1, 1)}, "t"), UnknownBus);
  CHECK_THROWS_AS(RadialGrid::from_lines({"t", "a"}, {Line("t", "a", 1, 1)}, "q"), UnknownBus);
  CHECK_THROWS_AS(RadialGrid::from_lines({"t", "t"}, {}, "t"), InvalidGrid);
}

TEST_CASE("validate", "[grid]") {
  SECTION("star with a hidden hub is valid") {
    const auto g = RadialGrid::from_lines(
        {"t", "h", "a", "b", "c"},
        {Line("t", "h", 1, 1), Line("h", "a", 1, 1), Line("h", "b", 1, 1), Line("h", "c", 1, 1)}, "t");
    CHECK(validate(g, true).ok());
  }
  SECTION("hidden bus of degree two") {
    const auto g = RadialGrid::from_lines({"t", "m", "a"}, {Line("t", "m", 1, 1), Line("m", "a", 1, 1)}, "t");
    const auto d = validate(g, true);
    CHECK(has_violation(d, "hidden bus m has degree 2"));
    CHECK(validate(g, false).ok());
  }
  SECTION("cycle") {
    const auto g = RadialGrid::from_lines(
        {"t", "h", "a", "b"},
        {Line("t", "h", 1, 1), Line("h", "a", 1, 1), Line("h", "b", 1, 1), Line("a", "b", 1, 1)}, "t");
    CHECK_FALSE(g.is_tree());
    CHECK(has_violation(validate(g, false), "not a tree"));
    CHECK_THROWS_AS(laplacian_inverse(g, WeightKind::resistance), InvalidGrid);
  }
}

TEST_CASE("path on the canonical grid", "[grid]") {
  const auto g = fixtures::g1();
  auto ab = path(g, "a", "b");
  REQUIRE(ab.size() == 2);
  CHECK((ab[0].a() == "a" && ab[0].b() == "h"));
  CHECK((ab[1].a() == "h" && ab[1].b() == "b"));
  CHECK(path(g, "a", "a").empty());
  auto at = path(g, "a", "t");
  REQUIRE(at.size() == 2);
  CHECK((at[0].a() == "a" && at[0].b() == "h"));
  CHECK((at[1].a() == "h" && at[1].b() == "t"));
  CHECK_THROWS_AS(path(g, "a", "zz"), UnknownBus);
}

TEST_CASE("laplacian inverse on the canonical grid", "[grid]") {
  const auto g = fixtures::g1();
  const auto h = laplacian_inverse(g, WeightKind::resistance);
  CHECK_THAT(h.entry("a", "a"), WithinAbs(3, 1e-12));
  CHECK_THAT(h.entry("a", "b"), WithinAbs(1, 1e-12));
  CHECK_THAT(h.entry("b", "b"), WithinAbs(4, 1e-12));
  CHECK_THAT(h.entry("h", "h"), WithinAbs(1, 1e-12));
  CHECK_THAT(h.entry("a", "c"), WithinAbs(1, 1e-12));
  // b is not below a, so moving from a up to its parent h leaves the entry unchanged.
  CHECK_THAT(h.entry("h", "b") - h.entry("a", "b"), WithinAbs(0, 1e-12));

  const Eigen::MatrixXd oracle = fixtures::numeric_inverse(g, WeightKind::resistance);
  CHECK((h.matrix() - oracle).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("effective distances on the canonical grid", "[grid]") {
  const auto g = fixtures::g1();
  for (const auto& [a, b, d] : std::vector<std::tuple<BusId, BusId, double>>{{"a", "b", 5}, {"a", "c", 6}, {"b", "c", 7}}) {
    CHECK_THAT(effective_distance(g, a, b, WeightKind::resistance), WithinAbs(d, 1e-12));
    CHECK_THAT(path_sum(g, a, b, WeightKind::resistance), WithinAbs(d, 1e-12));
  }
  CHECK(effective_distance(g, "a", "a", WeightKind::resistance) == 0.0);
  CHECK_THAT(effective_distance(g, "a", "b", WeightKind::reactance), WithinAbs(3, 1e-12));
  CHECK_THROWS_AS(effective_distance(g, "a", "nope", WeightKind::resistance), UnknownBus);
}

TEST_CASE("kron reduction of degree-two buses", "[grid]") {
  SECTION("single chain bus") {
    const auto g = RadialGrid::from_lines({"t", "m", "a"}, {Line("t", "m", 1, 0.5), Line("m", "a", 1, 0.25)}, "t",
                                          std::vector<BusId>{"a"});
    const auto k = kron_reduce_degree2(g);
    REQUIRE(k.lines().size() == 1);
    CHECK(k.find_line("t", "a") != nullptr);
    CHECK_THAT(k.lines()[0].r(), WithinAbs(2.0, 1e-15));
    CHECK_THAT(k.lines()[0].x(), WithinAbs(0.75, 1e-15));
    CHECK(k.root() == std::optional<BusId>("t"));
  }
  SECTION("no degree-two buses") {
    const auto g = fixtures::g1();
    const auto k = kron_reduce_degree2(g);
    CHECK(k.bus_ids() == g.bus_ids());
    CHECK(tree_edit_distance(k, g) == 0);
  }
  SECTION("two chained buses") {
    const auto g = RadialGrid::from_lines({"t", "m1", "m2", "a"},
                                          {Line("t", "m1", 1, 2), Line("m1", "m2", 3, 4), Line("m2", "a", 5, 6)}, "t",
                                          std::vector<BusId>{"a"});
    const auto k = kron_reduce_degree2(g);
    REQUIRE(k.lines().size() == 1);
    CHECK_THAT(k.lines()[0].r(), WithinAbs(9, 1e-12));
    CHECK_THAT(k.lines()[0].x(), WithinAbs(12, 1e-12));
  }
}

TEST_CASE("tree edit distance", "[grid]") {
  const auto g = fixtures::g1();
  CHECK(tree_edit_distance(g, g) == 0);

  const auto star = RadialGrid::from_lines({"t", "a", "b", "c"},
                                           {Line("t", "a", 1, 1), Line("t", "b", 1, 1), Line("t", "c", 1, 1)}, "t");
  CHECK(tree_edit_distance(star, g) == 7);
  CHECK(tree_edit_distance(g, star) == 7);

  const auto moved = RadialGrid::from_lines(
      {"t", "h", "a", "b", "c"},
      {Line("t", "h", 1, 1), Line("h", "a", 2, 1), Line("h", "b", 3, 2), Line("t", "c", 4, 3)}, "t");
  CHECK(tree_edit_distance(moved, g) == 2);
  CHECK(tree_edit_distance(g, moved) == 2);

  const auto other_leaves = RadialGrid::from_lines({"t", "a", "z"}, {Line("t", "a", 1, 1), Line("t", "z", 1, 1)}, "t");
  CHECK_THROWS_AS(tree_edit_distance(other_leaves, g), PreconditionError);
}

TEST_CASE("hidden buses match regardless of their names", "[grid]") {
  const auto g = fixtures::g1();
  const auto renamed = RadialGrid::from_lines(
      {"t", "_h0", "a", "b", "c"},
      {Line("t", "_h0", 1, 1), Line("_h0", "a", 2, 1), Line("_h0", "b", 3, 2), Line("_h0", "c", 4, 3)}, "t");
  const auto m = match_trees(renamed, g);
  CHECK(m.edge_difference == 0);
  CHECK(m.first_to_second.at("_h0") == "h");
  CHECK(m.common_lines.size() == 4);
}

TEST_CASE("observable skeleton prunes and merges what leaves cannot see", "[grid]") {
  // Hidden dangling bus d and hidden chain bus m.
  const auto g = RadialGrid::from_lines(
      {"t", "h", "m", "a", "b", "c", "d"},
      {Line("t", "h", 1, 1), Line("h", "m", 1, 1), Line("m", "a", 1, 1), Line("h", "b", 1, 1), Line("h", "c", 1, 1),
       Line("c", "d", 1, 1)},
      "t", std::vector<BusId>{"a", "b", "c"});
  const auto s = observable_skeleton(g);
  CHECK_FALSE(s.contains("d"));
  CHECK_FALSE(s.contains("m"));
  REQUIRE(s.find_line("h", "a") != nullptr);
  CHECK_THAT(s.find_line("h", "a")->r(), WithinAbs(2, 1e-12));
}

TEST_CASE("grid JSON round trip is lossless", "[grid]") {
  const auto g = gen_random_grid(30, 5, {}, 4242, true);
  const auto file = fixtures::scratch("grid_io") / "grid.json";
  save_grid(g, file);
  const auto back = load_grid(file);
  REQUIRE(back.bus_ids() == g.bus_ids());
  CHECK(back.root() == g.root());
  for (const auto& b : g.buses()) CHECK(back.bus(b.id).kind == b.kind);
  for (const auto& l : g.lines()) {
    const Line* m = back.find_line(l.a(), l.b());
    REQUIRE(m != nullptr);
    CHECK(m->r() == l.r());
    CHECK(m->x() == l.x());
  }
}

TEST_CASE("malformed grid JSON is rejected", "[grid]") {
  CHECK_THROWS(grid_from_json(nlohmann::json::parse(R"({"buses": [{"id": "t", "kind": "bogus"}], "lines": [], "root": "t"})")));
  CHECK_THROWS(grid_from_json(nlohmann::json::parse(R"({"lines": []})")));
}

TEST_CASE("property: laplacian inverse matches dense inversion", "[grid][property]") {
  for (std::uint64_t seed = 1; seed <= 40; ++seed) {
    const auto g = gen_random_grid(3 + seed * 2, 5, {0.01, 2.0}, seed, false);
    for (auto kind : {WeightKind::resistance, WeightKind::reactance}) {
      const auto h = laplacian_inverse(g, kind);
      const Eigen::MatrixXd oracle = fixtures::numeric_inverse(g, kind);
      const double scale = oracle.cwiseAbs().maxCoeff();
      CHECK((h.matrix() - oracle).cwiseAbs().maxCoeff() / scale < 1e-10);
    }
  }
}

TEST_CASE("property: parent-child differences of the inverse", "[grid][property]") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto g = gen_random_grid(25, 5, {}, seed, true);
    const auto h = laplacian_inverse(g, WeightKind::resistance);
    for (const auto& b : g.non_substation_ids()) {
      const auto a = *g.parent(b);
      if (a == *g.root()) continue;
      const double r_ab = g.find_line(a, b)->r();
      for (const auto& c : g.non_substation_ids()) {
        const double expected = g.is_descendant(c, b) ? -r_ab : 0.0;
        CHECK_THAT(h.entry(a, c) - h.entry(b, c), WithinAbs(expected, 1e-12));
      }
    }
  }
}

TEST_CASE("property: distances are additive along paths", "[grid][property]") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto g = gen_random_grid(20, 4, {}, seed, false);
    const auto ids = g.bus_ids();
    for (const auto& a : ids)
      for (const auto& c : ids) {
        const double dac = effective_distance(g, a, c, WeightKind::resistance);
        CHECK_THAT(dac, WithinAbs(path_sum(g, a, c, WeightKind::resistance), 1e-12));
        for (const auto& l : path(g, a, c)) {
          const auto& b = l.b();
          CHECK_THAT(effective_distance(g, a, b, WeightKind::resistance) +
                         effective_distance(g, b, c, WeightKind::resistance),
                     WithinAbs(dac, 1e-12));
        }
      }
  }
}

TEST_CASE("property: kron reduction preserves distances", "[grid][property]") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto g = gen_random_grid(30, 5, {}, seed, false);
    const auto k = kron_reduce_degree2(g);
    for (const auto& b : k.buses())
      if (b.id != *k.root() && !b.observed) CHECK(k.degree(b.id) != 2);
    for (const auto& a : k.bus_ids())
      for (const auto& b : k.bus_ids())
        for (auto kind : {WeightKind::resistance, WeightKind::reactance})
          CHECK_THAT(effective_distance(k, a, b, kind), WithinAbs(effective_distance(g, a, b, kind), 1e-12));
  }
}

TEST_CASE("property: tree edit distance is symmetric", "[grid][property]") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto a = gen_random_grid(15, 5, {}, seed, true);
    auto leaves = a.leaf_ids();
    // Same leaves, different topology: a star over them.
    std::vector<Line> lines;
    std::vector<BusId> ids{"root"};
    for (const auto& l : leaves) {
      ids.push_back(l);
      lines.emplace_back("root", l, 1.0, 1.0);
    }
    const auto star = RadialGrid::from_lines(ids, lines, "root");
    CHECK(tree_edit_distance(a, a) == 0);
    CHECK(tree_edit_distance(a, star) == tree_edit_distance(star, a));
  }
}
