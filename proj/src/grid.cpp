#include "gridlearn/grid.hpp"

#include "gridlearn/errors.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <set>
#include <tuple>

namespace gridlearn {

namespace {

constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

std::pair<BusId, BusId> ordered_pair(const BusId& u, const BusId& v) {
  return u < v ? std::make_pair(u, v) : std::make_pair(v, u);
}

// Mutable adjacency used by the reductions.
struct EditableTree {
  std::map<BusId, Bus> buses;
  std::map<BusId, std::map<BusId, std::pair<double, double>>> adj;

  explicit EditableTree(const RadialGrid& g) {
    for (const auto& b : g.buses()) {
      buses[b.id] = b;
      adj[b.id];
    }
    for (const auto& l : g.lines()) {
      adj[l.a()][l.b()] = {l.r(), l.x()};
      adj[l.b()][l.a()] = {l.r(), l.x()};
    }
  }

  void remove(const BusId& id) {
    for (const auto& [nb, imp] : adj[id]) adj[nb].erase(id);
    adj.erase(id);
    buses.erase(id);
  }

  // Replaces a degree-2 bus by a single line carrying the summed impedance.
  void merge_through(const BusId& id) {
    auto it = adj[id].begin();
    const auto [u, zu] = *it++;
    const auto [v, zv] = *it;
    remove(id);
    const std::pair<double, double> z{zu.first + zv.first, zu.second + zv.second};
    adj[u][v] = z;
    adj[v][u] = z;
  }

  std::vector<Line> lines() const {
    std::vector<Line> out;
    for (const auto& [u, nbs] : adj)
      for (const auto& [v, z] : nbs)
        if (u < v) out.emplace_back(u, v, z.first, z.second);
    return out;
  }
};

}  // namespace

const char* to_string(BusKind kind) {
  switch (kind) {
    case BusKind::substation: return "substation";
    case BusKind::internal: return "internal";
    case BusKind::leaf: return "leaf";
  }
  return "internal";
}

BusKind bus_kind_from_string(const std::string& s) {
  if (s == "substation") return BusKind::substation;
  if (s == "internal") return BusKind::internal;
  if (s == "leaf") return BusKind::leaf;
  throw FormatError("unknown bus kind '" + s + "'");
}

Line::Line(BusId a, BusId b, double r, double x) : a_(std::move(a)), b_(std::move(b)), r_(r), x_(x) {
  if (!std::isfinite(r) || !std::isfinite(x) || r <= 0.0 || x <= 0.0)
    throw InvalidGrid("line (" + a_ + "," + b_ + ") has nonpositive or non-finite impedance");
  if (a_ == b_) throw InvalidGrid("line (" + a_ + "," + b_ + ") is a self loop");
}

Line Line::oriented_from(const BusId& from) const {
  return from == a_ ? *this : Line(b_, a_, r_, x_);
}

RadialGrid::RadialGrid(std::vector<Bus> buses, std::vector<Line> lines, std::optional<BusId> root)
    : buses_(std::move(buses)), lines_(std::move(lines)), root_(std::move(root)) {
  for (std::size_t i = 0; i < buses_.size(); ++i) {
    if (!index_.emplace(buses_[i].id, i).second)
      throw InvalidGrid("duplicate bus id '" + buses_[i].id + "'");
  }
  if (root_ && !contains(*root_)) throw UnknownBus(*root_);

  adjacency_.resize(buses_.size());
  std::set<std::pair<BusId, BusId>> seen;
  for (std::size_t k = 0; k < lines_.size(); ++k) {
    const auto& l = lines_[k];
    const auto ia = index_of(l.a());
    const auto ib = index_of(l.b());
    if (!seen.insert(ordered_pair(l.a(), l.b())).second)
      throw InvalidGrid("duplicate line (" + l.a() + "," + l.b() + ")");
    adjacency_[ia].emplace_back(ib, k);
    adjacency_[ib].emplace_back(ia, k);
  }
  if (buses_.empty()) return;

  anchor_ = root_ ? index_of(*root_) : index_.begin()->second;
  const std::size_t n = buses_.size();
  parent_.assign(n, npos);
  parent_line_.assign(n, npos);
  depth_.assign(n, 0);
  depth_r_.assign(n, 0.0);
  depth_x_.assign(n, 0.0);
  std::vector<bool> visited(n, false);
  std::deque<std::size_t> queue{anchor_};
  visited[anchor_] = true;
  std::size_t reached = 1;
  while (!queue.empty()) {
    const auto u = queue.front();
    queue.pop_front();
    for (const auto& [v, k] : adjacency_[u]) {
      if (visited[v]) continue;
      visited[v] = true;
      ++reached;
      parent_[v] = u;
      parent_line_[v] = k;
      depth_[v] = depth_[u] + 1;
      depth_r_[v] = depth_r_[u] + lines_[k].r();
      depth_x_[v] = depth_x_[u] + lines_[k].x();
      queue.push_back(v);
    }
  }
  is_tree_ = reached == n && lines_.size() + 1 == n;
}

RadialGrid RadialGrid::from_lines(const std::vector<BusId>& bus_ids, std::vector<Line> lines,
                                  std::optional<BusId> root,
                                  const std::optional<std::vector<BusId>>& observed) {
  std::map<BusId, std::size_t> degree;
  for (const auto& id : bus_ids) degree[id] = 0;
  for (const auto& l : lines) {
    if (!degree.count(l.a())) throw UnknownBus(l.a());
    if (!degree.count(l.b())) throw UnknownBus(l.b());
    ++degree[l.a()];
    ++degree[l.b()];
  }
  std::set<BusId> obs;
  if (observed) obs.insert(observed->begin(), observed->end());
  std::vector<Bus> buses;
  buses.reserve(bus_ids.size());
  for (const auto& id : bus_ids) {
    Bus b{id, BusKind::internal, false};
    if (root && id == *root)
      b.kind = BusKind::substation;
    else if (degree[id] == 1)
      b.kind = BusKind::leaf;
    b.observed = observed ? obs.count(id) > 0 : b.kind == BusKind::leaf;
    buses.push_back(std::move(b));
  }
  return RadialGrid(std::move(buses), std::move(lines), std::move(root));
}

std::size_t RadialGrid::index_of(const BusId& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw UnknownBus(id);
  return it->second;
}

std::vector<BusId> RadialGrid::neighbors(const BusId& id) const {
  std::vector<BusId> out;
  for (const auto& [v, k] : adjacency_[index_of(id)]) out.push_back(buses_[v].id);
  std::sort(out.begin(), out.end());
  return out;
}

const Line* RadialGrid::find_line(const BusId& u, const BusId& v) const {
  for (const auto& [w, k] : adjacency_[index_of(u)])
    if (buses_[w].id == v) return &lines_[k];
  return nullptr;
}

std::vector<BusId> RadialGrid::bus_ids() const {
  std::vector<BusId> out;
  for (const auto& [id, i] : index_) out.push_back(id);
  return out;
}

std::vector<BusId> RadialGrid::observed_ids() const {
  std::vector<BusId> out;
  for (const auto& [id, i] : index_)
    if (buses_[i].observed) out.push_back(id);
  return out;
}

std::vector<BusId> RadialGrid::leaf_ids() const {
  std::vector<BusId> out;
  for (const auto& [id, i] : index_)
    if (buses_[i].kind == BusKind::leaf) out.push_back(id);
  return out;
}

std::vector<BusId> RadialGrid::non_substation_ids() const {
  std::vector<BusId> out;
  for (const auto& [id, i] : index_)
    if (!root_ || id != *root_) out.push_back(id);
  return out;
}

void RadialGrid::require_tree() const {
  if (!is_tree_) throw InvalidGrid("operation requires a connected acyclic grid");
}

std::optional<BusId> RadialGrid::parent(const BusId& id) const {
  require_tree();
  const auto p = parent_[index_of(id)];
  if (p == npos) return std::nullopt;
  return buses_[p].id;
}

std::vector<BusId> RadialGrid::children(const BusId& id) const {
  require_tree();
  const auto i = index_of(id);
  std::vector<BusId> out;
  for (const auto& [v, k] : adjacency_[i])
    if (parent_[v] == i) out.push_back(buses_[v].id);
  std::sort(out.begin(), out.end());
  return out;
}

std::size_t RadialGrid::lca_index(std::size_t a, std::size_t b) const {
  while (depth_[a] > depth_[b]) a = parent_[a];
  while (depth_[b] > depth_[a]) b = parent_[b];
  while (a != b) {
    a = parent_[a];
    b = parent_[b];
  }
  return a;
}

BusId RadialGrid::lca(const BusId& a, const BusId& b) const {
  require_tree();
  return buses_[lca_index(index_of(a), index_of(b))].id;
}

double RadialGrid::depth_weight(const BusId& id, WeightKind kind) const {
  require_tree();
  const auto i = index_of(id);
  return kind == WeightKind::resistance ? depth_r_[i] : depth_x_[i];
}

bool RadialGrid::is_descendant(const BusId& d, const BusId& a) const {
  require_tree();
  return lca_index(index_of(d), index_of(a)) == index_of(a);
}

GridDiagnostics validate(const RadialGrid& grid, bool require_hidden_degree3) {
  GridDiagnostics diag;
  const auto n = grid.buses().size();
  if (n == 0) {
    diag.violations.push_back("grid has no buses");
    return diag;
  }
  if (grid.lines().size() + 1 != n)
    diag.violations.push_back("not a tree: " + std::to_string(grid.lines().size()) + " lines for " +
                              std::to_string(n) + " buses");

  // Connectivity by union-find so forests and cyclic graphs are both diagnosed.
  std::vector<std::size_t> uf(n);
  for (std::size_t i = 0; i < n; ++i) uf[i] = i;
  auto find = [&](std::size_t i) {
    while (uf[i] != i) i = uf[i] = uf[uf[i]];
    return i;
  };
  std::size_t components = n;
  for (const auto& l : grid.lines()) {
    const auto ra = find(grid.index_of(l.a()));
    const auto rb = find(grid.index_of(l.b()));
    if (ra != rb) {
      uf[ra] = rb;
      --components;
    }
  }
  if (components > 1) diag.violations.push_back("not connected: " + std::to_string(components) + " components");

  std::vector<BusId> substations;
  for (const auto& b : grid.buses())
    if (b.kind == BusKind::substation) substations.push_back(b.id);
  if (grid.rooted()) {
    if (substations.size() > 1) diag.violations.push_back("multiple substations");
    if (grid.bus(*grid.root()).kind != BusKind::substation)
      diag.violations.push_back("root " + *grid.root() + " is not marked as substation");
  } else if (!substations.empty()) {
    diag.violations.push_back("substation bus present but grid has no root");
  }

  for (const auto& b : grid.buses()) {
    const auto deg = grid.degree(b.id);
    const bool should_be_leaf = deg == 1 && b.kind != BusKind::substation;
    if ((b.kind == BusKind::leaf) != should_be_leaf)
      diag.violations.push_back("bus " + b.id + " kind '" + to_string(b.kind) + "' inconsistent with degree " +
                                std::to_string(deg));
  }
  for (const auto& l : grid.lines())
    if (!(l.r() > 0.0 && l.x() > 0.0))
      diag.violations.push_back("line (" + l.a() + "," + l.b() + ") has nonpositive impedance");

  if (require_hidden_degree3) {
    for (const auto& b : grid.buses()) {
      if (b.kind == BusKind::leaf && !b.observed) diag.violations.push_back("leaf " + b.id + " is not observed");
      if (b.kind == BusKind::internal && !b.observed && grid.degree(b.id) < 3)
        diag.violations.push_back("hidden bus " + b.id + " has degree " + std::to_string(grid.degree(b.id)));
    }
  }
  return diag;
}

std::vector<Line> path(const RadialGrid& grid, const BusId& a, const BusId& b) {
  if (!grid.is_tree()) throw InvalidGrid("path requires a tree");
  const BusId top = grid.lca(a, b);
  std::vector<Line> up;
  for (BusId u = a; u != top;) {
    const BusId p = *grid.parent(u);
    up.push_back(grid.find_line(u, p)->oriented_from(u));
    u = p;
  }
  std::vector<Line> down;
  for (BusId u = b; u != top;) {
    const BusId p = *grid.parent(u);
    down.push_back(grid.find_line(p, u)->oriented_from(p));
    u = p;
  }
  up.insert(up.end(), down.rbegin(), down.rend());
  return up;
}

LaplacianInverse::LaplacianInverse(WeightKind kind, std::vector<BusId> ids, Eigen::MatrixXd entries)
    : kind_(kind), ids_(std::move(ids)), entries_(std::move(entries)) {
  for (std::size_t i = 0; i < ids_.size(); ++i) index_.emplace(ids_[i], i);
}

std::size_t LaplacianInverse::index_of(const BusId& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw UnknownBus(id);
  return it->second;
}

LaplacianInverse laplacian_inverse(const RadialGrid& grid, WeightKind kind) {
  if (!grid.rooted()) throw InvalidGrid("laplacian_inverse requires a rooted grid");
  if (!grid.is_tree()) throw InvalidGrid("laplacian_inverse requires a tree");
  auto ids = grid.non_substation_ids();
  const auto n = static_cast<Eigen::Index>(ids.size());
  Eigen::MatrixXd h(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    h(i, i) = grid.depth_weight(ids[i], kind);
    for (Eigen::Index j = 0; j < i; ++j) h(i, j) = h(j, i) = grid.depth_weight(grid.lca(ids[i], ids[j]), kind);
  }
  return LaplacianInverse(kind, std::move(ids), std::move(h));
}

double effective_distance(const RadialGrid& grid, const BusId& a, const BusId& b, WeightKind kind) {
  if (!grid.is_tree()) throw InvalidGrid("effective_distance requires a tree");
  return grid.depth_weight(a, kind) + grid.depth_weight(b, kind) - 2.0 * grid.depth_weight(grid.lca(a, b), kind);
}

RadialGrid kron_reduce_degree2(const RadialGrid& grid) {
  EditableTree t(grid);
  for (bool changed = true; changed;) {
    changed = false;
    for (const auto& [id, bus] : t.buses) {
      if (bus.observed || (grid.root() && id == *grid.root())) continue;
      if (t.adj[id].size() != 2) continue;
      t.merge_through(id);
      changed = true;
      break;
    }
  }
  std::vector<Bus> buses;
  for (const auto& b : grid.buses())
    if (t.buses.count(b.id)) buses.push_back(b);
  return RadialGrid(std::move(buses), t.lines(), grid.root());
}

RadialGrid observable_skeleton(const RadialGrid& grid) {
  EditableTree t(grid);
  for (bool changed = true; changed;) {
    changed = false;
    for (const auto& [id, bus] : t.buses) {
      if (bus.observed || t.adj[id].size() > 1 || t.buses.size() == 1) continue;
      t.remove(id);
      changed = true;
      break;
    }
  }
  for (bool changed = true; changed;) {
    changed = false;
    for (const auto& [id, bus] : t.buses) {
      if (bus.observed || t.adj[id].size() != 2) continue;
      t.merge_through(id);
      changed = true;
      break;
    }
  }
  std::vector<BusId> ids;
  std::vector<BusId> observed;
  for (const auto& [id, bus] : t.buses) {
    ids.push_back(id);
    if (bus.observed) observed.push_back(id);
  }
  std::optional<BusId> root;
  if (grid.root() && t.buses.count(*grid.root())) root = grid.root();
  return RadialGrid::from_lines(ids, t.lines(), root, observed);
}

namespace {

// Observed-descendant sets of every bus when each component is hung from `anchor` (or, for
// components not containing it, from their smallest id).
std::map<BusId, std::vector<BusId>> observed_descendants(const RadialGrid& g, const BusId& anchor) {
  std::map<BusId, std::vector<BusId>> desc;
  std::map<BusId, BusId> parent;
  std::vector<BusId> order;
  std::set<BusId> visited;
  auto bfs = [&](const BusId& start) {
    std::deque<BusId> queue{start};
    visited.insert(start);
    while (!queue.empty()) {
      auto u = queue.front();
      queue.pop_front();
      order.push_back(u);
      for (const auto& v : g.neighbors(u)) {
        if (visited.insert(v).second) {
          parent[v] = u;
          queue.push_back(v);
        }
      }
    }
  };
  if (g.contains(anchor)) bfs(anchor);
  for (const auto& id : g.bus_ids())
    if (!visited.count(id)) bfs(id);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    auto& mine = desc[*it];
    if (g.bus(*it).observed) mine.push_back(*it);
    std::sort(mine.begin(), mine.end());
    auto p = parent.find(*it);
    if (p != parent.end()) {
      auto& up = desc[p->second];
      up.insert(up.end(), mine.begin(), mine.end());
    }
  }
  return desc;
}

bool id_matchable(const Bus& b) { return b.observed || b.kind == BusKind::substation; }

}  // namespace

TreeMatch match_trees(const RadialGrid& first, const RadialGrid& second) {
  if (first.observed_ids() != second.observed_ids())
    throw PreconditionError("leaf label sets differ between the compared trees");

  std::optional<BusId> anchor;
  if (first.root() && second.root() && *first.root() == *second.root()) anchor = first.root();
  if (!anchor && !first.observed_ids().empty()) anchor = first.observed_ids().front();
  if (!anchor) {
    auto a = first.bus_ids();
    auto b = second.bus_ids();
    std::vector<BusId> common;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(common));
    anchor = common.empty() ? BusId{} : common.front();
  }

  TreeMatch match;
  std::set<BusId> matched_second;
  for (const auto& b : first.buses()) {
    if (!id_matchable(b) || !second.contains(b.id) || !id_matchable(second.bus(b.id))) continue;
    match.first_to_second[b.id] = b.id;
    matched_second.insert(b.id);
  }

  const auto desc1 = observed_descendants(first, *anchor);
  const auto desc2 = observed_descendants(second, *anchor);
  struct Candidate {
    double jaccard;
    BusId lo, hi, u, v;
  };
  std::vector<Candidate> candidates;
  for (const auto& u : first.buses()) {
    if (match.first_to_second.count(u.id)) continue;
    const auto& du = desc1.at(u.id);
    for (const auto& v : second.buses()) {
      if (matched_second.count(v.id)) continue;
      const auto& dv = desc2.at(v.id);
      std::vector<BusId> inter;
      std::set_intersection(du.begin(), du.end(), dv.begin(), dv.end(), std::back_inserter(inter));
      if (inter.empty()) continue;
      const double uni = static_cast<double>(du.size() + dv.size() - inter.size());
      candidates.push_back({static_cast<double>(inter.size()) / uni, std::min(u.id, v.id), std::max(u.id, v.id),
                            u.id, v.id});
    }
  }
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    if (a.jaccard != b.jaccard) return a.jaccard > b.jaccard;
    return std::tie(a.lo, a.hi, a.u) < std::tie(b.lo, b.hi, b.u);
  });
  for (const auto& c : candidates) {
    if (match.first_to_second.count(c.u) || matched_second.count(c.v)) continue;
    match.first_to_second[c.u] = c.v;
    matched_second.insert(c.v);
  }

  // Map every line of `first` into the label space of `second`; unmatched buses get private keys.
  auto key1 = [&](const BusId& id) {
    auto it = match.first_to_second.find(id);
    return it != match.first_to_second.end() ? "=" + it->second : "1:" + id;
  };
  auto key2 = [&](const BusId& id) { return matched_second.count(id) ? "=" + id : "2:" + id; };
  std::map<std::pair<BusId, BusId>, const Line*> lines1, lines2;
  for (const auto& l : first.lines()) lines1[ordered_pair(key1(l.a()), key1(l.b()))] = &l;
  for (const auto& l : second.lines()) lines2[ordered_pair(key2(l.a()), key2(l.b()))] = &l;
  std::size_t common = 0;
  for (const auto& [k, l] : lines1) {
    auto it = lines2.find(k);
    if (it == lines2.end()) continue;
    ++common;
    match.common_lines.emplace_back(*l, *it->second);
  }
  match.edge_difference = lines1.size() + lines2.size() - 2 * common;
  return match;
}

std::size_t tree_edit_distance(const RadialGrid& estimate, const RadialGrid& truth) {
  return match_trees(estimate, truth).edge_difference;
}

}  // namespace gridlearn
