#include "gridlearn/alg1.hpp"

#include "gridlearn/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <tuple>

namespace gridlearn {

namespace {

constexpr double kResidualFloor = 1e-15;

double relative_residual(double lhs, double rhs) { return std::abs(lhs - rhs) / std::max(std::abs(rhs), kResidualFloor); }

std::pair<BusId, BusId> key(const BusId& u, const BusId& v) { return u < v ? std::make_pair(u, v) : std::make_pair(v, u); }

}  // namespace

LeafStats leaf_stats(const MomentSet& m, const BusId& leaf) {
  const auto i = static_cast<Eigen::Index>(m.index_of(leaf));
  return {m.pp(i), m.qq(i), m.pq(i)};
}

double sibling_rhs(double ra, double xa, const LeafStats& a, double rb, double xb, const LeafStats& b) {
  return ra * ra * a.pp + xa * xa * a.qq + 2.0 * ra * xa * a.pq + rb * rb * b.pp + xb * xb * b.qq +
         2.0 * rb * xb * b.pq;
}

TestOutcome sibling_parent_test(double phi_ab, const Line* a_k1, const Line* b_k1, const LeafStats& a,
                                const LeafStats& b, double tau1) {
  if (!a_k1 || !b_k1) return {};
  const double rhs = sibling_rhs(a_k1->r(), a_k1->x(), a, b_k1->r(), b_k1->x(), b);
  const double res = relative_residual(phi_ab, rhs);
  return {true, res <= tau1, res};
}

double intermediate_rhs(const PathToAncestor& p, const LeafStats& a, const LeafStats& b) {
  const double side_a = a.pp * (p.ra * p.ra - p.rk1 * p.rk1) + a.qq * (p.xa * p.xa - p.xk1 * p.xk1) +
                        2.0 * a.pq * (p.ra * p.xa - p.rk1 * p.xk1);
  const double side_b = b.pp * (p.rb * p.rb - p.rk1 * p.rk1) + b.qq * (p.xb * p.xb - p.xk1 * p.xk1) +
                        2.0 * b.pq * (p.rb * p.xb - p.rk1 * p.xk1);
  return side_a - side_b;
}

TestOutcome intermediate_edge_test(double phi_ac, double phi_bc, const PathToAncestor& path, const LeafStats& a,
                                   const LeafStats& b, double tau2, bool edge_permissible) {
  if (!edge_permissible) return {};
  const double res = relative_residual(phi_ac - phi_bc, intermediate_rhs(path, a, b));
  return {true, res <= tau2, res};
}

namespace {

class Alg1 {
 public:
  Alg1(const MomentSet& m, const Alg1Config& cfg) : m_(m), cfg_(cfg) {
    if (!(cfg.tau1 > 0.0) || !(cfg.tau2 > 0.0)) throw PreconditionError("tolerances must be positive");
    leaves_ = m.nodes;
    for (const auto& l : cfg.permissible) {
      perm_.emplace(key(l.a(), l.b()), l);
      adj_[l.a()].insert(l.b());
      adj_[l.b()].insert(l.a());
    }
    for (const auto& a : leaves_) stats_[a] = leaf_stats(m, a);
  }

  EstimationResult run() {
    pair_siblings();
    climb();
    place_lonely_leaves();
    join_root();
    return result();
  }

 private:
  const Line* line(const BusId& u, const BusId& v) const {
    auto it = perm_.find(key(u, v));
    return it == perm_.end() ? nullptr : &it->second;
  }

  bool is_leaf(const BusId& id) const { return stats_.count(id) > 0; }

  void add_edge(const BusId& u, const BusId& v) {
    if (edges_.emplace(key(u, v)).second) lines_.push_back(*line(u, v));
  }

  double phi_of(const BusId& a, const BusId& b) const { return phi(m_, a, b); }

  // Impedance along recovered parent pointers from `from` up to its ancestor `to`.
  std::pair<double, double> climb_sum(BusId from, const BusId& to) const {
    double r = 0.0, x = 0.0;
    while (from != to) {
      auto it = par_.find(from);
      if (it == par_.end()) throw PreconditionError("internal: " + to + " is not a recovered ancestor");
      const Line* l = line(from, it->second);
      r += l->r();
      x += l->x();
      from = it->second;
    }
    return {r, x};
  }

  bool below(BusId node, const BusId& ancestor) const {
    while (true) {
      if (node == ancestor) return true;
      auto it = par_.find(node);
      if (it == par_.end()) return false;
      node = it->second;
    }
  }

  // Path impedances from the representative pair under `k` (and their parent) to a node reached
  // from k through an extra line of impedance `extra`.
  PathToAncestor chain(const BusId& k, const std::pair<double, double>& extra) const {
    const auto& [a, b] = des_.at(k);
    const BusId& k1 = par_.at(a);
    const auto up = climb_sum(k1, k);
    const Line* la = line(a, k1);
    const Line* lb = line(b, k1);
    PathToAncestor p;
    p.rk1 = up.first + extra.first;
    p.xk1 = up.second + extra.second;
    p.ra = la->r() + p.rk1;
    p.xa = la->x() + p.xk1;
    p.rb = lb->r() + p.rk1;
    p.xb = lb->x() + p.xk1;
    return p;
  }

  // Best residual of the three-leaf identity over witnesses c.
  TestOutcome best_witness(const BusId& k, const PathToAncestor& p, const std::vector<BusId>& witnesses) const {
    const auto& [a, b] = des_.at(k);
    TestOutcome best;
    for (const auto& c : witnesses) {
      if (c == a || c == b) continue;
      const auto t = intermediate_edge_test(phi_of(a, c), phi_of(b, c), p, stats_.at(a), stats_.at(b), cfg_.tau2);
      if (!best.applicable || t.residual < best.residual) best = t;
    }
    return best;
  }

  void pair_siblings() {
    for (const auto& a : leaves_) {
      if (par_.count(a)) continue;
      std::tuple<double, BusId, BusId> best{std::numeric_limits<double>::infinity(), "", ""};
      bool found = false;
      auto ait = adj_.find(a);
      if (ait == adj_.end()) continue;
      for (const auto& k1 : ait->second) {
        if (is_leaf(k1)) continue;
        for (const auto& b : adj_.at(k1)) {
          if (b == a || !is_leaf(b)) continue;
          auto pb = par_.find(b);
          if (pb != par_.end() && pb->second != k1) continue;
          const auto t =
              sibling_parent_test(phi_of(a, b), line(a, k1), line(b, k1), stats_.at(a), stats_.at(b), cfg_.tau1);
          if (!t.pass) continue;
          const std::tuple<double, BusId, BusId> cand{t.residual, b, k1};
          if (!found || cand < best) best = cand;
          found = true;
        }
      }
      if (!found) continue;
      const auto& [res, b, k1] = best;
      add_edge(a, k1);
      add_edge(b, k1);
      par_[a] = k1;
      par_[b] = k1;
      if (!des_.count(k1)) des_[k1] = {std::min(a, b), std::max(a, b)};
    }
  }

  void climb() {
    bool progressed = true;
    while (progressed) {
      ++iterations_;
      progressed = false;
      std::vector<BusId> m1;
      for (const auto& [k, d] : des_)
        if (!par_.count(k) && !(cfg_.root && k == *cfg_.root)) m1.push_back(k);
      for (const auto& k : m1) {
        auto nit = adj_.find(k);
        if (nit == adj_.end()) continue;
        // Discovered candidates first; undiscovered only if none of those pass.
        std::tuple<double, BusId> best_known{std::numeric_limits<double>::infinity(), ""};
        std::tuple<double, BusId> best_new{std::numeric_limits<double>::infinity(), ""};
        bool known = false, fresh = false;
        std::vector<BusId> outside;
        for (const auto& c : leaves_)
          if (!below(c, k)) outside.push_back(c);
        for (const auto& k2 : nit->second) {
          if (k2 == k || is_leaf(k2) || below(k2, k)) continue;
          const Line* e = line(k, k2);
          const auto p = chain(k, {e->r(), e->x()});
          auto dit = des_.find(k2);
          if (dit != des_.end()) {
            const auto t = best_witness(k, p, {dit->second.first, dit->second.second});
            if (t.pass && std::tuple<double, BusId>{t.residual, k2} < best_known) {
              best_known = {t.residual, k2};
              known = true;
            }
          } else {
            const auto t = best_witness(k, p, outside);
            if (t.pass && std::tuple<double, BusId>{t.residual, k2} < best_new) {
              best_new = {t.residual, k2};
              fresh = true;
            }
          }
        }
        if (!known && !fresh) continue;
        const BusId k2 = known ? std::get<1>(best_known) : std::get<1>(best_new);
        add_edge(k, k2);
        par_[k] = k2;
        if (!des_.count(k2)) des_[k2] = des_.at(k);
        progressed = true;
      }
    }
  }

  void post_order(const BusId& node, const std::map<BusId, std::vector<BusId>>& kids, std::vector<BusId>& out) const {
    auto it = kids.find(node);
    if (it != kids.end())
      for (const auto& c : it->second) post_order(c, kids, out);
    out.push_back(node);
  }

  void place_lonely_leaves() {
    std::map<BusId, std::vector<BusId>> kids;
    std::vector<BusId> tops;
    for (const auto& [k, d] : des_) {
      auto it = par_.find(k);
      if (it == par_.end())
        tops.push_back(k);
      else
        kids[it->second].push_back(k);
    }
    std::vector<BusId> w;
    for (const auto& t : tops) post_order(t, kids, w);

    for (const auto& c : leaves_) {
      if (par_.count(c)) continue;
      for (auto it = w.begin(); it != w.end(); ++it) {
        const BusId k2 = *it;
        if (!line(c, k2)) continue;
        const auto p = chain(k2, {0.0, 0.0});
        const auto t = best_witness(k2, p, {c});
        if (!t.pass) continue;
        add_edge(c, k2);
        par_[c] = k2;
        w.erase(it);
        break;
      }
    }
  }

  void join_root() {
    std::vector<BusId> tops;
    for (const auto& [k, d] : des_)
      if (!par_.count(k)) tops.push_back(k);
    if (!cfg_.root) {
      if (tops.size() > 1) unresolved_tops_ = tops;
      return;
    }
    const BusId& root = *cfg_.root;
    if (tops.size() == 1 && tops.front() != root) {
      if (line(tops.front(), root)) {
        add_edge(tops.front(), root);
        par_[tops.front()] = root;
      } else {
        warnings_.push_back("no permissible line joins " + tops.front() + " to the substation");
        unresolved_tops_ = tops;
      }
      return;
    }
    for (const auto& t : tops)
      if (t != root) unresolved_tops_.push_back(t);
  }

  EstimationResult result() const {
    std::set<BusId> ids(leaves_.begin(), leaves_.end());
    for (const auto& l : lines_) {
      ids.insert(l.a());
      ids.insert(l.b());
    }
    std::optional<BusId> root;
    if (cfg_.root && ids.count(*cfg_.root)) root = cfg_.root;
    EstimationResult r{RadialGrid::from_lines({ids.begin(), ids.end()}, lines_, root, leaves_), {}};
    auto& d = r.diagnostics;
    d.tolerances_used = {cfg_.tau1, cfg_.tau2};
    d.iterations = iterations_;
    for (const auto& a : leaves_)
      if (!par_.count(a)) d.unresolved.push_back(a);
    d.unresolved.insert(d.unresolved.end(), unresolved_tops_.begin(), unresolved_tops_.end());
    d.partial = !d.unresolved.empty();
    d.warnings = warnings_;
    return r;
  }

  const MomentSet& m_;
  const Alg1Config& cfg_;
  std::vector<BusId> leaves_;
  std::map<std::pair<BusId, BusId>, Line> perm_;
  std::map<BusId, std::set<BusId>> adj_;
  std::map<BusId, LeafStats> stats_;

  std::map<BusId, BusId> par_;
  std::map<BusId, std::pair<BusId, BusId>> des_;
  std::set<std::pair<BusId, BusId>> edges_;
  std::vector<Line> lines_;
  std::vector<BusId> unresolved_tops_;
  std::vector<std::string> warnings_;
  int iterations_ = 0;
};

}  // namespace

EstimationResult run_alg1(const MomentSet& moments, const Alg1Config& config) { return Alg1(moments, config).run(); }

}  // namespace gridlearn
