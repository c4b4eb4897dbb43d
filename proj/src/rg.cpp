#include "gridlearn/rg.hpp"

#include "gridlearn/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace gridlearn {

const char* to_string(RgMode mode) {
  switch (mode) {
    case RgMode::exact: return "exact";
    case RgMode::finite: return "finite";
    case RgMode::adaptive: return "adaptive";
  }
  return "?";
}

RgMode rg_mode_from_string(const std::string& s) {
  if (s == "exact") return RgMode::exact;
  if (s == "finite") return RgMode::finite;
  if (s == "adaptive") return RgMode::adaptive;
  throw FormatError("unknown RG mode '" + s + "'");
}

const char* to_string(Relation r) {
  switch (r) {
    case Relation::none: return "none";
    case Relation::a_parent_of_b: return "parent(a->b)";
    case Relation::b_parent_of_a: return "parent(b->a)";
    case Relation::siblings: return "siblings";
  }
  return "?";
}

void RgConfig::check() const {
  if (!(epsilon >= 0.0)) throw PreconditionError("epsilon must be >= 0");
  if (!(tau > 0.0)) throw PreconditionError("tau must be > 0");
  if (!(alpha > 1.0)) throw PreconditionError("alpha must be > 1");
  if (mode == RgMode::adaptive && !(epsilon > 0.0)) throw PreconditionError("adaptive mode needs epsilon > 0");
  if (!(epsilon_cap_factor >= 1.0)) throw PreconditionError("epsilon cap factor must be >= 1");
}

DistanceTable::DistanceTable(const std::vector<BusId>& nodes, const Eigen::MatrixXd& d) {
  const auto n = static_cast<Eigen::Index>(nodes.size());
  if (d.rows() != n || d.cols() != n) throw DimensionMismatch("distance matrix must be square over the node list");
  d_ = Eigen::MatrixXd::Constant(std::max<Eigen::Index>(2 * n, 8), std::max<Eigen::Index>(2 * n, 8), std::nan(""));
  for (const auto& id : nodes) add(id);
  d_.topLeftCorner(n, n) = d;
}

void DistanceTable::add(const BusId& id) {
  if (contains(id)) throw PreconditionError("vertex " + id + " already in the distance table");
  const auto k = static_cast<Eigen::Index>(ids_.size());
  if (k >= d_.rows()) {
    Eigen::MatrixXd grown = Eigen::MatrixXd::Constant(2 * k + 8, 2 * k + 8, std::nan(""));
    grown.topLeftCorner(k, k) = d_.topLeftCorner(k, k);
    d_ = std::move(grown);
  }
  index_[id] = ids_.size();
  ids_.push_back(id);
  d_(k, k) = 0.0;
}

void DistanceTable::remove_last(const BusId& id) {
  if (ids_.empty() || ids_.back() != id) throw PreconditionError(id + " is not the last vertex added");
  const auto k = static_cast<Eigen::Index>(ids_.size() - 1);
  d_.row(k).setConstant(std::nan(""));
  d_.col(k).setConstant(std::nan(""));
  index_.erase(id);
  ids_.pop_back();
}

std::size_t DistanceTable::index_of(const BusId& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw UnknownBus(id);
  return it->second;
}

double DistanceTable::operator()(const BusId& a, const BusId& b) const {
  return d_(static_cast<Eigen::Index>(index_of(a)), static_cast<Eigen::Index>(index_of(b)));
}

void DistanceTable::set(const BusId& a, const BusId& b, double value) {
  const auto i = static_cast<Eigen::Index>(index_of(a));
  const auto j = static_cast<Eigen::Index>(index_of(b));
  d_(i, j) = value;
  d_(j, i) = value;
}

double phi_stat(const DistanceTable& d, const BusId& a, const BusId& b, const BusId& c) {
  if (a == b || a == c || b == c) throw PreconditionError("Phi needs three distinct nodes");
  return d(a, c) - d(b, c);
}

std::vector<BusId> witness_set(const DistanceTable& radius, const std::vector<BusId>& active, const BusId& a,
                               const BusId& b, double tau) {
  std::vector<BusId> out;
  for (const auto& c : active) {
    if (c == a || c == b) continue;
    if (std::isinf(tau) || (radius(a, c) < tau && radius(b, c) < tau)) out.push_back(c);
  }
  return out;
}

Classification classify_pair(const DistanceTable& d, const BusId& a, const BusId& b,
                             const std::vector<BusId>& witnesses, double epsilon) {
  if (a == b) throw PreconditionError("cannot classify a node against itself");
  if (witnesses.empty()) throw PreconditionError("insufficient witnesses for (" + a + ", " + b + ")");
  const double dab = d(a, b);
  double a_parent = 0.0, b_parent = 0.0;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& c : witnesses) {
    const double p = phi_stat(d, a, b, c);
    a_parent = std::max(a_parent, std::abs(dab + p));
    b_parent = std::max(b_parent, std::abs(dab - p));
    lo = std::min(lo, p);
    hi = std::max(hi, p);
  }
  const double spread = hi - lo;
  if (a_parent <= epsilon && a_parent <= b_parent) return {Relation::a_parent_of_b, a_parent};
  if (b_parent <= epsilon) return {Relation::b_parent_of_a, b_parent};
  if (spread <= epsilon) return {Relation::siblings, spread};
  return {Relation::none, std::min({a_parent, b_parent, spread})};
}

void add_hidden_parent(DistanceTable& d, const DistanceTable& radius, const BusId& h,
                       const std::vector<BusId>& children, const std::vector<BusId>& active,
                       const std::vector<BusId>& targets, RgMode mode, double tau) {
  if (children.size() < 2) throw PreconditionError("a hidden parent needs at least two children");
  if (!d.contains(h)) d.add(h);
  const std::set<BusId> kids(children.begin(), children.end());

  if (mode == RgMode::exact) {
    const BusId& a = children[0];
    const BusId& b = children[1];
    const auto w = witness_set(radius, active, a, b, std::numeric_limits<double>::infinity());
    if (w.empty()) throw PreconditionError("insufficient witnesses for (" + a + ", " + b + ")");
    const double dah = 0.5 * (d(a, b) + phi_stat(d, a, b, w.front()));
    d.set(a, h, dah);
    for (std::size_t i = 1; i < children.size(); ++i) d.set(children[i], h, d(a, children[i]) - dah);
    for (const auto& x : targets)
      if (!kids.count(x) && x != h) d.set(x, h, d(a, x) - dah);
    return;
  }

  std::vector<double> dist(children.size());
  for (std::size_t i = 0; i < children.size(); ++i) {
    const BusId& a = children[i];
    double sum = 0.0;
    std::size_t used = 0;
    for (const auto& b : children) {
      if (b == a) continue;
      const auto w = witness_set(radius, active, a, b, tau);
      if (w.empty()) continue;
      double mean_phi = 0.0;
      for (const auto& c : w) mean_phi += phi_stat(d, a, b, c);
      mean_phi /= static_cast<double>(w.size());
      sum += d(a, b) + mean_phi;
      ++used;
    }
    if (used == 0) throw PreconditionError("child " + a + " has no witnesses for its distance to the new parent");
    dist[i] = sum / (2.0 * static_cast<double>(used));
    d.set(a, h, dist[i]);
  }
  for (const auto& x : targets) {
    if (kids.count(x) || x == h) continue;
    double sum = 0.0;
    for (std::size_t i = 0; i < children.size(); ++i) sum += d(children[i], x) - dist[i];
    d.set(x, h, sum / static_cast<double>(children.size()));
  }
}

namespace {

struct PairPass {
  std::size_t i, j;
  Relation relation;
  double residual;
};

struct UnionFind {
  std::vector<std::size_t> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

struct Cell {
  std::vector<std::size_t> members;
  std::optional<std::size_t> parent;
};

// Groups `active` into cells whose members are pairwise siblings, or a parent and its leaf
// children; inconsistent components are split by dropping their weakest passing pair.
std::vector<Cell> coarsest_partition(const std::vector<BusId>& active, const DistanceTable& d,
                                     const DistanceTable& radius, double epsilon, double tau) {
  const std::size_t n = active.size();
  std::vector<PairPass> passes;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const auto w = witness_set(radius, active, active[i], active[j], tau);
      if (w.empty()) continue;
      const auto c = classify_pair(d, active[i], active[j], w, epsilon);
      if (c.relation != Relation::none) passes.push_back({i, j, c.relation, c.residual});
    }

  while (true) {
    UnionFind uf(n);
    for (const auto& p : passes) uf.unite(p.i, p.j);
    std::map<std::size_t, std::vector<std::size_t>> comps;
    for (std::size_t i = 0; i < n; ++i) comps[uf.find(i)].push_back(i);

    std::map<std::pair<std::size_t, std::size_t>, Relation> rel;
    for (const auto& p : passes) rel[{p.i, p.j}] = p.relation;
    auto relation = [&](std::size_t a, std::size_t b) {  // oriented: a_parent_of_b means a is parent of b
      if (a < b) {
        auto it = rel.find({a, b});
        return it == rel.end() ? Relation::none : it->second;
      }
      auto it = rel.find({b, a});
      if (it == rel.end()) return Relation::none;
      if (it->second == Relation::a_parent_of_b) return Relation::b_parent_of_a;
      if (it->second == Relation::b_parent_of_a) return Relation::a_parent_of_b;
      return it->second;
    };

    std::vector<Cell> cells;
    std::optional<std::size_t> bad_root;
    for (const auto& [root, members] : comps) {
      Cell cell{members, std::nullopt};
      if (members.size() > 1) {
        std::vector<std::size_t> parents;
        for (auto p : members) {
          bool all = true;
          for (auto x : members)
            if (x != p && relation(p, x) != Relation::a_parent_of_b) all = false;
          if (all) parents.push_back(p);
        }
        bool ok = parents.size() <= 1;
        if (ok) {
          if (!parents.empty()) cell.parent = parents.front();
          for (std::size_t u = 0; u < members.size() && ok; ++u)
            for (std::size_t v = u + 1; v < members.size() && ok; ++v) {
              const auto a = members[u], b = members[v];
              if (cell.parent && (a == *cell.parent || b == *cell.parent)) continue;
              if (relation(a, b) != Relation::siblings) ok = false;
            }
        }
        if (!ok) {
          bad_root = root;
          break;
        }
      }
      cells.push_back(std::move(cell));
    }
    if (!bad_root) return cells;

    // Drop the weakest pass inside the offending component and retry.
    std::size_t worst = passes.size();
    for (std::size_t k = 0; k < passes.size(); ++k) {
      if (uf.find(passes[k].i) != *bad_root) continue;
      if (worst == passes.size() || passes[k].residual > passes[worst].residual) worst = k;
    }
    passes.erase(passes.begin() + static_cast<std::ptrdiff_t>(worst));
  }
}

class Engine {
 public:
  Engine(const std::vector<BusId>& observed, const Eigen::MatrixXd& dr, const std::optional<Eigen::MatrixXd>& dx,
         const RgConfig& cfg)
      : cfg_(cfg), dr_(observed, dr), dx_(observed, dx ? *dx : dr), active_(observed) {
    if (!dx) result_.diagnostics.warnings.push_back("no reactance distances supplied; x lengths mirror r");
    result_.observed = observed;
  }

  RgResult run() {
    const double tau = cfg_.mode == RgMode::exact ? std::numeric_limits<double>::infinity() : cfg_.tau;
    double eps = cfg_.epsilon;
    bool use_dx = false;
    auto& diag = result_.diagnostics;
    while (active_.size() > 2) {
      ++diag.iterations;
      const auto cells = coarsest_partition(active_, use_dx ? dx_ : dr_, dr_, eps, tau);
      const bool progress = std::any_of(cells.begin(), cells.end(), [](const Cell& c) { return c.members.size() > 1; });
      if (progress) {
        if (diag.tolerances_used.empty() || diag.tolerances_used.back() != eps) diag.tolerances_used.push_back(eps);
        apply(cells, tau, eps);
        eps = cfg_.epsilon;
        use_dx = false;
        continue;
      }
      if (cfg_.mode != RgMode::adaptive) {
        diag.warnings.push_back("no sibling or parent relation found at epsilon " + std::to_string(eps));
        break;
      }
      if (!use_dx) {
        use_dx = true;
        ++diag.metric_switches;
        continue;
      }
      use_dx = false;
      eps *= cfg_.alpha;
      ++diag.epsilon_escalations;
      if (eps > cfg_.epsilon_cap_factor * cfg_.epsilon * (1.0 + 1e-12)) {
        diag.warnings.push_back("epsilon cap reached without progress");
        break;
      }
    }
    if (active_.size() == 2) {
      add_edge(active_[0], active_[1]);
      active_.clear();
    } else if (active_.size() > 2) {
      diag.partial = true;
      diag.unresolved = active_;
    }
    if (diag.tolerances_used.empty()) diag.tolerances_used.push_back(cfg_.epsilon);
    return result_;
  }

 private:
  BusId fresh_name() {
    while (true) {
      BusId id = cfg_.hidden_prefix + std::to_string(++counter_);
      if (!dr_.contains(id)) return id;
    }
  }

  void add_edge(const BusId& u, const BusId& v) { result_.edges.push_back({u, v, dr_(u, v), dx_(u, v)}); }

  void apply(const std::vector<Cell>& cells, double tau, double eps) {
    const std::vector<BusId> old = active_;
    std::vector<BusId> next;
    std::vector<BusId> created;
    for (const auto& cell : cells) {
      if (cell.members.size() == 1) {
        next.push_back(old[cell.members.front()]);
        continue;
      }
      if (cell.parent) {
        const BusId& p = old[*cell.parent];
        for (auto m : cell.members)
          if (m != *cell.parent) add_edge(p, old[m]);
        next.push_back(p);
        continue;
      }
      std::vector<BusId> children;
      for (auto m : cell.members) children.push_back(old[m]);
      const BusId h = fresh_name();
      std::vector<BusId> targets = old;
      targets.insert(targets.end(), created.begin(), created.end());
      add_hidden_parent(dr_, dr_, h, children, old, targets, cfg_.mode, tau);
      // A parent and its child also pass the sibling test once noise pushes the parent residual
      // past epsilon. 2 d(a, h) is the witness-averaged parent statistic d(a, b) + mean Phi, so a
      // new vertex within epsilon / 2 of a child is taken to be that child.
      const auto nearest = *std::min_element(children.begin(), children.end(), [&](const BusId& u, const BusId& v) {
        return dr_(u, h) < dr_(v, h);
      });
      if (dr_(nearest, h) <= 0.5 * eps) {
        dr_.remove_last(h);
        --counter_;
        for (const auto& c : children)
          if (c != nearest) add_edge(nearest, c);
        next.push_back(nearest);
        ++result_.diagnostics.collapsed_parents;
        continue;
      }
      add_hidden_parent(dx_, dr_, h, children, old, targets, cfg_.mode, tau);
      for (const auto& c : children) add_edge(h, c);
      result_.hidden.push_back(h);
      created.push_back(h);
      next.push_back(h);
    }
    std::sort(next.begin(), next.end());
    active_ = std::move(next);
  }

  RgConfig cfg_;
  DistanceTable dr_;
  DistanceTable dx_;
  std::vector<BusId> active_;
  RgResult result_;
  int counter_ = 0;
};

void check_distance_input(const std::vector<BusId>& nodes, const Eigen::MatrixXd& d, const char* what) {
  const auto n = static_cast<Eigen::Index>(nodes.size());
  if (d.rows() != n || d.cols() != n) throw DimensionMismatch(std::string(what) + " must be square over the node list");
  if (!d.allFinite()) throw PreconditionError(std::string(what) + " has non-finite entries");
  const double scale = std::max(1.0, d.cwiseAbs().maxCoeff());
  if ((d - d.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale)
    throw PreconditionError(std::string(what) + " is not symmetric");
  if (d.diagonal().cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw PreconditionError(std::string(what) + " has a nonzero diagonal");
}

}  // namespace

RgResult run_rg(const std::vector<BusId>& observed, const Eigen::MatrixXd& dr, const std::optional<Eigen::MatrixXd>& dx,
                const RgConfig& config) {
  config.check();
  std::set<BusId> unique(observed.begin(), observed.end());
  if (unique.size() != observed.size()) throw PreconditionError("duplicate observed ids");
  check_distance_input(observed, dr, "d_r");
  if (dx) check_distance_input(observed, *dx, "d_x");
  // Work in sorted id order so the output does not depend on input order.
  std::vector<std::size_t> order(observed.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return observed[a] < observed[b]; });
  const auto n = static_cast<Eigen::Index>(observed.size());
  std::vector<BusId> ids;
  Eigen::MatrixXd r(n, n);
  std::optional<Eigen::MatrixXd> x;
  if (dx) x = Eigen::MatrixXd(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    ids.push_back(observed[order[static_cast<std::size_t>(i)]]);
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto oi = static_cast<Eigen::Index>(order[static_cast<std::size_t>(i)]);
      const auto oj = static_cast<Eigen::Index>(order[static_cast<std::size_t>(j)]);
      r(i, j) = 0.5 * (dr(oi, oj) + dr(oj, oi));
      if (dx) (*x)(i, j) = 0.5 * ((*dx)(oi, oj) + (*dx)(oj, oi));
    }
  }
  return Engine(ids, r, x, config).run();
}

RgResult run_rg(const DistanceMatrix& d, const RgConfig& config) { return run_rg(d.nodes, d.r, d.x, config); }

EstimationResult to_estimation_result(const RgResult& rg) {
  std::set<BusId> ids(rg.observed.begin(), rg.observed.end());
  ids.insert(rg.hidden.begin(), rg.hidden.end());
  std::vector<Line> lines;
  EstimationDiagnostics diag = rg.diagnostics;
  for (const auto& e : rg.edges) {
    if (e.r > 0.0 && e.x > 0.0 && std::isfinite(e.r) && std::isfinite(e.x)) {
      lines.emplace_back(e.a, e.b, e.r, e.x);
    } else {
      diag.quarantined.push_back(e);
      diag.warnings.push_back("edge (" + e.a + ", " + e.b + ") has a nonpositive impedance estimate; quarantined");
    }
  }
  if (!diag.quarantined.empty()) diag.partial = true;
  return {RadialGrid::from_lines({ids.begin(), ids.end()}, std::move(lines), std::nullopt, rg.observed),
          std::move(diag)};
}

}  // namespace gridlearn
