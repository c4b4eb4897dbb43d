#include "gridlearn/moments.hpp"

#include "gridlearn/errors.hpp"
#include "gridlearn/powerflow.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace gridlearn {

namespace {

std::size_t position(const std::vector<BusId>& ids, const BusId& id) {
  auto it = std::lower_bound(ids.begin(), ids.end(), id);
  if (it == ids.end() || *it != id) throw UnknownBus(id);
  return static_cast<std::size_t>(it - ids.begin());
}

std::vector<BusId> sorted_unique(std::vector<BusId> ids) {
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

Eigen::MatrixXd pick(const Eigen::MatrixXd& m, const std::vector<Eigen::Index>& rows,
                     const std::vector<Eigen::Index>& cols) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols.size(); ++j)
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = m(rows[i], cols[j]);
  return out;
}

}  // namespace

std::size_t MomentSet::index_of(const BusId& id) const {
  auto it = std::lower_bound(nodes.begin(), nodes.end(), id);
  if (it == nodes.end() || *it != id) throw MaskError("bus " + id + " is not in the observed moment set");
  return static_cast<std::size_t>(it - nodes.begin());
}

bool MomentSet::contains(const BusId& id) const { return std::binary_search(nodes.begin(), nodes.end(), id); }

MomentSet MomentSet::subset(const std::vector<BusId>& keep) const {
  MomentSet out;
  out.nodes = sorted_unique(keep);
  std::vector<Eigen::Index> idx;
  for (const auto& id : out.nodes) idx.push_back(static_cast<Eigen::Index>(index_of(id)));
  out.vp = pick(vp, idx, idx);
  out.vq = pick(vq, idx, idx);
  out.vv = pick(vv, idx, idx);
  const auto n = static_cast<Eigen::Index>(idx.size());
  out.pp.resize(n);
  out.qq.resize(n);
  out.pq.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    out.pp(i) = pp(idx[static_cast<std::size_t>(i)]);
    out.qq(i) = qq(idx[static_cast<std::size_t>(i)]);
    out.pq(i) = pq(idx[static_cast<std::size_t>(i)]);
  }
  out.provenance = provenance;
  out.n_samples = n_samples;
  return out;
}

MomentAccumulator::MomentAccumulator(std::vector<BusId> nodes) : nodes_(sorted_unique(std::move(nodes))) {
  const auto n = static_cast<Eigen::Index>(nodes_.size());
  vp_ = vq_ = vv_ = Eigen::MatrixXd::Zero(n, n);
  pp_ = qq_ = pq_ = Eigen::VectorXd::Zero(n);
}

void MomentAccumulator::add(const SampleSet& samples) {
  const auto rows = static_cast<Eigen::Index>(samples.size());
  const auto n = static_cast<Eigen::Index>(nodes_.size());
  Eigen::MatrixXd v(rows, n), p(rows, n), q(rows, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto& id = nodes_[static_cast<std::size_t>(j)];
    v.col(j) = samples.column(Quantity::v, id);
    p.col(j) = samples.column(Quantity::p, id);
    q.col(j) = samples.column(Quantity::q, id);
  }
  vp_.noalias() += v.transpose() * p;
  vq_.noalias() += v.transpose() * q;
  vv_.noalias() += v.transpose() * v;
  pp_ += p.cwiseAbs2().colwise().sum().transpose();
  qq_ += q.cwiseAbs2().colwise().sum().transpose();
  pq_ += p.cwiseProduct(q).colwise().sum().transpose();
  n_ += samples.size();
}

MomentSet MomentAccumulator::moments() const {
  if (n_ < 2) throw InsufficientSamples("empirical moments need at least 2 samples, got " + std::to_string(n_));
  const double s = 1.0 / static_cast<double>(n_);
  MomentSet m;
  m.nodes = nodes_;
  m.vp = vp_ * s;
  m.vq = vq_ * s;
  m.vv = vv_ * s;
  m.pp = pp_ * s;
  m.qq = qq_ * s;
  m.pq = pq_ * s;
  m.provenance = Provenance::empirical;
  m.n_samples = n_;
  return m;
}

MomentSet empirical_moments(const SampleSet& samples) {
  MomentAccumulator acc(samples.observed());
  acc.add(samples);
  return acc.moments();
}

MomentSet analytic_moments(const RadialGrid& grid, const InjectionModel& model,
                           const std::optional<std::vector<BusId>>& observed) {
  model.check();
  const LcpfModel lc(grid);
  if (model.buses != lc.buses()) throw DimensionMismatch("injection model buses differ from the grid's non-substation buses");
  const auto& hr = lc.hr().matrix();
  const auto& hx = lc.hx().matrix();
  const Eigen::MatrixXd spp = model.sigma_pp();
  const Eigen::MatrixXd sqq = model.sigma_qq();
  const Eigen::MatrixXd spq = model.sigma_pq();

  const Eigen::MatrixXd vp = hr * spp + hx * spq.transpose();
  const Eigen::MatrixXd vq = hr * spq + hx * sqq;
  const Eigen::MatrixXd vv = analytic_voltage_covariance(grid, spp, sqq, spq);

  MomentSet m;
  m.nodes = sorted_unique(observed ? *observed : grid.leaf_ids());
  std::vector<Eigen::Index> idx;
  for (const auto& id : m.nodes) {
    if (grid.root() && id == *grid.root())
      throw PreconditionError("the substation is the voltage reference and cannot be a moment node");
    idx.push_back(static_cast<Eigen::Index>(lc.hr().index_of(id)));
  }
  m.vp = pick(vp, idx, idx);
  m.vq = pick(vq, idx, idx);
  m.vv = pick(vv, idx, idx);
  const auto n = static_cast<Eigen::Index>(idx.size());
  m.pp.resize(n);
  m.qq.resize(n);
  m.pq.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto k = idx[static_cast<std::size_t>(i)];
    m.pp(i) = spp(k, k);
    m.qq(i) = sqq(k, k);
    m.pq(i) = spq(k, k);
  }
  m.provenance = Provenance::analytic;
  return m;
}

MomentSet merge_independent(const MomentSet& first, const MomentSet& second) {
  std::vector<BusId> all = first.nodes;
  all.insert(all.end(), second.nodes.begin(), second.nodes.end());
  const auto merged = sorted_unique(all);
  if (merged.size() != all.size()) throw PreconditionError("merged moment sets share node ids");
  const auto n = static_cast<Eigen::Index>(merged.size());
  MomentSet m;
  m.nodes = merged;
  m.vp = m.vq = m.vv = Eigen::MatrixXd::Zero(n, n);
  m.pp = m.qq = m.pq = Eigen::VectorXd::Zero(n);
  for (const MomentSet* src : {&first, &second}) {
    for (std::size_t i = 0; i < src->nodes.size(); ++i) {
      const auto gi = static_cast<Eigen::Index>(position(merged, src->nodes[i]));
      const auto si = static_cast<Eigen::Index>(i);
      m.pp(gi) = src->pp(si);
      m.qq(gi) = src->qq(si);
      m.pq(gi) = src->pq(si);
      for (std::size_t j = 0; j < src->nodes.size(); ++j) {
        const auto gj = static_cast<Eigen::Index>(position(merged, src->nodes[j]));
        const auto sj = static_cast<Eigen::Index>(j);
        m.vp(gi, gj) = src->vp(si, sj);
        m.vq(gi, gj) = src->vq(si, sj);
        m.vv(gi, gj) = src->vv(si, sj);
      }
    }
  }
  m.provenance = first.provenance == Provenance::analytic && second.provenance == Provenance::analytic
                     ? Provenance::analytic
                     : Provenance::empirical;
  m.n_samples = std::min(first.n_samples, second.n_samples);
  return m;
}

double phi(const MomentSet& m, const BusId& a, const BusId& b) {
  const auto i = static_cast<Eigen::Index>(m.index_of(a));
  const auto j = static_cast<Eigen::Index>(m.index_of(b));
  if (i == j) return 0.0;
  return m.vv(i, i) + m.vv(j, j) - 2.0 * m.vv(i, j);
}

namespace {

// Column b of the estimated inverse-Laplacian blocks, for every row a.
void solve_column(const MomentSet& m, Eigen::Index b, double d_min, Eigen::MatrixXd& hr, Eigen::MatrixXd& hx) {
  const double spp = m.pp(b), sqq = m.qq(b), spq = m.pq(b);
  const double scale = spp * sqq;
  const double det = scale - spq * spq;
  if (!(scale > 0.0) || !(det > d_min * scale))
    throw IllConditioned(m.nodes[static_cast<std::size_t>(b)], det);
  hr.col(b) = (sqq * m.vp.col(b) - spq * m.vq.col(b)) / det;
  hx.col(b) = (spp * m.vq.col(b) - spq * m.vp.col(b)) / det;
}

}  // namespace

std::pair<double, double> estimate_h_inverse_entry(const MomentSet& m, const BusId& a, const BusId& b, double d_min) {
  const auto i = static_cast<Eigen::Index>(m.index_of(a));
  const auto j = static_cast<Eigen::Index>(m.index_of(b));
  const auto n = static_cast<Eigen::Index>(m.nodes.size());
  Eigen::MatrixXd hr = Eigen::MatrixXd::Zero(n, n), hx = Eigen::MatrixXd::Zero(n, n);
  solve_column(m, j, d_min, hr, hx);
  return {hr(i, j), hx(i, j)};
}

std::size_t DistanceMatrix::index_of(const BusId& id) const { return position(nodes, id); }

double DistanceMatrix::dr(const BusId& a, const BusId& b) const {
  return r(static_cast<Eigen::Index>(index_of(a)), static_cast<Eigen::Index>(index_of(b)));
}

double DistanceMatrix::dx(const BusId& a, const BusId& b) const {
  return x(static_cast<Eigen::Index>(index_of(a)), static_cast<Eigen::Index>(index_of(b)));
}

DistanceMatrix distance_matrix(const MomentSet& m, const std::optional<std::vector<BusId>>& nodes, double d_min) {
  const MomentSet sub = nodes ? m.subset(*nodes) : m;
  const auto n = static_cast<Eigen::Index>(sub.nodes.size());
  Eigen::MatrixXd hr(n, n), hx(n, n);
  for (Eigen::Index b = 0; b < n; ++b) solve_column(sub, b, d_min, hr, hx);
  DistanceMatrix d{sub.nodes, Eigen::MatrixXd::Zero(n, n), Eigen::MatrixXd::Zero(n, n)};
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index b = 0; b < n; ++b) {
      if (a == b) continue;
      d.r(a, b) = hr(a, a) + hr(b, b) - hr(a, b) - hr(b, a);
      d.x(a, b) = hx(a, a) + hx(b, b) - hx(a, b) - hx(b, a);
    }
  return d;
}

DistanceMatrix exact_distances(const RadialGrid& grid, const std::vector<BusId>& nodes) {
  const auto ids = sorted_unique(nodes);
  const auto n = static_cast<Eigen::Index>(ids.size());
  DistanceMatrix d{ids, Eigen::MatrixXd::Zero(n, n), Eigen::MatrixXd::Zero(n, n)};
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index b = a + 1; b < n; ++b) {
      const auto& ia = ids[static_cast<std::size_t>(a)];
      const auto& ib = ids[static_cast<std::size_t>(b)];
      d.r(a, b) = d.r(b, a) = effective_distance(grid, ia, ib, WeightKind::resistance);
      d.x(a, b) = d.x(b, a) = effective_distance(grid, ia, ib, WeightKind::reactance);
    }
  return d;
}

void write_distance_csv(const DistanceMatrix& d, const std::filesystem::path& file) {
  std::FILE* f = std::fopen(file.string().c_str(), "w");
  if (!f) throw FormatError("cannot write " + file.string());
  std::fputs("a,b,d_r,d_x\n", f);
  for (std::size_t i = 0; i < d.nodes.size(); ++i)
    for (std::size_t j = i + 1; j < d.nodes.size(); ++j)
      std::fprintf(f, "%s,%s,%.17g,%.17g\n", d.nodes[i].c_str(), d.nodes[j].c_str(),
                   d.r(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)),
                   d.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
  if (std::fclose(f) != 0) throw FormatError("error writing " + file.string());
}

}  // namespace gridlearn
