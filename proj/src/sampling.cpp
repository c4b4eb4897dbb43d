#include "gridlearn/sampling.hpp"

#include "gridlearn/errors.hpp"
#include "gridlearn/parallel.hpp"
#include "gridlearn/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace gridlearn {

const char* to_string(InjectionKind kind) {
  switch (kind) {
    case InjectionKind::gaussian: return "gaussian";
    case InjectionKind::uniform: return "uniform";
    case InjectionKind::replay: return "replay";
  }
  return "?";
}

InjectionKind injection_kind_from_string(const std::string& s) {
  if (s == "gaussian") return InjectionKind::gaussian;
  if (s == "uniform") return InjectionKind::uniform;
  if (s == "replay") return InjectionKind::replay;
  throw FormatError("unknown injection kind '" + s + "'");
}

const char* to_string(Solver solver) { return solver == Solver::lcpf ? "lcpf" : "acpf"; }

Solver solver_from_string(const std::string& s) {
  if (s == "lcpf") return Solver::lcpf;
  if (s == "acpf") return Solver::acpf;
  throw FormatError("unknown solver '" + s + "'");
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    cells.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_double(const std::string& cell, const std::string& where) {
  double value = 0.0;
  const char* end = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(cell.data(), end, value);
  if (cell.empty() || ec != std::errc() || ptr != end || !std::isfinite(value))
    throw FormatError("non-numeric cell '" + cell + "' at " + where);
  return value;
}

}  // namespace

ReplayLoads replay_real_loads(const std::filesystem::path& file, double power_factor, std::size_t n,
                              const std::vector<BusId>& leaves) {
  if (!(power_factor > 0.0 && power_factor <= 1.0))
    throw PreconditionError("power factor must lie in (0, 1]");
  std::ifstream in(file);
  if (!in) throw FormatError("cannot open " + file.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError(file.string() + ": empty replay file");
  const auto header = split_csv_line(line);
  std::map<std::string, std::size_t> column;
  for (std::size_t i = 0; i < header.size(); ++i) column[header[i]] = i;
  std::vector<std::size_t> picks;
  for (const auto& leaf : leaves) {
    auto it = column.find(leaf);
    if (it == column.end()) throw FormatError(file.string() + ": missing column for leaf '" + leaf + "'");
    picks.push_back(it->second);
  }

  ReplayLoads out;
  out.buses = leaves;
  out.p.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(leaves.size()));
  std::size_t row = 0;
  while (row < n && std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    for (std::size_t j = 0; j < picks.size(); ++j) {
      const std::string where = file.string() + " row " + std::to_string(row + 2) + " column " + leaves[j];
      if (picks[j] >= cells.size()) throw FormatError("missing cell at " + where);
      out.p(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(j)) = parse_double(cells[picks[j]], where);
    }
    ++row;
  }
  if (row < n)
    throw ReplayError("replay exhausted: " + file.string() + " has " + std::to_string(row) + " rows, " +
                      std::to_string(n) + " requested");
  if (n > 0) out.p.rowwise() -= out.p.colwise().mean();
  const double ratio = std::tan(std::acos(power_factor));
  out.q = out.p * ratio;
  if (power_factor == 1.0)
    out.warnings.push_back("power factor 1 gives q = 0 at every replayed leaf; the injection moment matrix is singular");
  else
    out.warnings.push_back("constant power factor makes q proportional to p at replayed leaves; "
                           "their injection moment matrices are singular");
  return out;
}

InjectionModel InjectionModel::isotropic(const RadialGrid& grid, double std_dev) {
  if (!(std_dev >= 0.0) || !std::isfinite(std_dev)) throw PreconditionError("injection std must be finite and >= 0");
  InjectionModel m;
  m.buses = grid.non_substation_ids();
  const auto n = static_cast<Eigen::Index>(m.buses.size());
  m.pp = Eigen::VectorXd::Constant(n, std_dev * std_dev);
  m.qq = Eigen::VectorXd::Constant(n, std_dev * std_dev);
  m.pq = Eigen::VectorXd::Zero(n);
  return m;
}

std::size_t InjectionModel::index_of(const BusId& id) const {
  auto it = std::lower_bound(buses.begin(), buses.end(), id);
  if (it == buses.end() || *it != id) {
    // buses are normally sorted; fall back to a scan for hand-built models
    auto lin = std::find(buses.begin(), buses.end(), id);
    if (lin == buses.end()) throw UnknownBus(id);
    return static_cast<std::size_t>(lin - buses.begin());
  }
  return static_cast<std::size_t>(it - buses.begin());
}

std::vector<std::string> InjectionModel::check(double d_min) const {
  const auto n = buses.size();
  if (static_cast<std::size_t>(pp.size()) != n || static_cast<std::size_t>(qq.size()) != n ||
      static_cast<std::size_t>(pq.size()) != n)
    throw DimensionMismatch("injection moment vectors must match the bus list");
  if (!(correlation >= 0.0 && correlation < 1.0)) throw PreconditionError("correlation must lie in [0, 1)");
  if (kind == InjectionKind::replay && !replay) throw PreconditionError("replay model without replay data");
  std::vector<std::string> warnings;
  for (std::size_t i = 0; i < n; ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    if (!std::isfinite(pp(k)) || !std::isfinite(qq(k)) || !std::isfinite(pq(k)) || pp(k) < 0.0 || qq(k) < 0.0)
      throw PreconditionError("invalid injection moments at bus " + buses[i]);
    const double bound = std::sqrt(pp(k) * qq(k));
    if (std::abs(pq(k)) > bound * (1.0 + 1e-12) + 1e-300)
      throw PreconditionError("injection moment matrix at bus " + buses[i] + " is not positive semidefinite");
    const double det = pp(k) * qq(k) - pq(k) * pq(k);
    if (pp(k) * qq(k) == 0.0 || det <= d_min * pp(k) * qq(k))
      warnings.push_back("injection moment determinant at bus " + buses[i] + " is " + std::to_string(det) +
                         "; distances through this bus are not identifiable");
  }
  if (replay)
    for (const auto& w : replay->warnings) warnings.push_back(w);
  return warnings;
}

namespace {

struct ReplayIndex {
  std::vector<long> column;  // per model bus: replay column or -1
};

ReplayIndex replay_index(const InjectionModel& m) {
  ReplayIndex idx{std::vector<long>(m.buses.size(), -1)};
  if (m.kind != InjectionKind::replay || !m.replay) return idx;
  for (std::size_t j = 0; j < m.replay->buses.size(); ++j) idx.column[m.index_of(m.replay->buses[j])] = static_cast<long>(j);
  return idx;
}

double rho(const InjectionModel& m, Eigen::Index i) {
  const double s = std::sqrt(m.pp(i) * m.qq(i));
  return s > 0.0 ? std::clamp(m.pq(i) / s, -1.0, 1.0) : 0.0;
}

}  // namespace

Eigen::MatrixXd InjectionModel::sigma_pp() const {
  const auto n = static_cast<Eigen::Index>(buses.size());
  const auto rep = replay_index(*this);
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(n, n);
  const double c = correlation;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      if (rep.column[i] >= 0 || rep.column[j] >= 0) continue;
      s(i, j) = std::sqrt(pp(i) * pp(j)) * (i == j ? 1.0 : c);
    }
  if (replay && kind == InjectionKind::replay) {
    const double t = static_cast<double>(replay->p.rows());
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        if (rep.column[i] >= 0 && rep.column[j] >= 0)
          s(i, j) = replay->p.col(rep.column[i]).dot(replay->p.col(rep.column[j])) / t;
  }
  return s;
}

Eigen::MatrixXd InjectionModel::sigma_qq() const {
  const auto n = static_cast<Eigen::Index>(buses.size());
  const auto rep = replay_index(*this);
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(n, n);
  const double c = correlation;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      if (rep.column[i] >= 0 || rep.column[j] >= 0) continue;
      s(i, j) = std::sqrt(qq(i) * qq(j)) * (i == j ? 1.0 : c);
    }
  if (replay && kind == InjectionKind::replay) {
    const double t = static_cast<double>(replay->q.rows());
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        if (rep.column[i] >= 0 && rep.column[j] >= 0)
          s(i, j) = replay->q.col(rep.column[i]).dot(replay->q.col(rep.column[j])) / t;
  }
  return s;
}

Eigen::MatrixXd InjectionModel::sigma_pq() const {
  const auto n = static_cast<Eigen::Index>(buses.size());
  const auto rep = replay_index(*this);
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(n, n);
  const double c = correlation;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      if (rep.column[i] >= 0 || rep.column[j] >= 0) continue;
      const double scale = std::sqrt(pp(i) * qq(j));
      s(i, j) = scale * (i == j ? c + (1.0 - c) * rho(*this, i) : c);
    }
  if (replay && kind == InjectionKind::replay) {
    const double t = static_cast<double>(replay->p.rows());
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        if (rep.column[i] >= 0 && rep.column[j] >= 0)
          s(i, j) = replay->p.col(rep.column[i]).dot(replay->q.col(rep.column[j])) / t;
  }
  return s;
}

InjectionDraw draw_injections(const InjectionModel& model, std::size_t n, std::uint64_t seed, std::size_t first) {
  model.check();
  const auto nb = static_cast<Eigen::Index>(model.buses.size());
  const auto rows = static_cast<Eigen::Index>(n);
  InjectionDraw out{model.buses, Eigen::MatrixXd(rows, nb), Eigen::MatrixXd(rows, nb)};
  const auto rep = replay_index(model);
  if (model.kind == InjectionKind::replay && first + n > static_cast<std::size_t>(model.replay->p.rows()))
    throw ReplayError("replay exhausted: " + std::to_string(model.replay->p.rows()) + " rows available, " +
                      std::to_string(first + n) + " requested");

  const double c = model.correlation;
  const double own = std::sqrt(1.0 - c);
  const double common = std::sqrt(c);
  const bool uniform = model.kind == InjectionKind::uniform;
  Eigen::VectorXd sp = model.pp.cwiseSqrt();
  Eigen::VectorXd sq = model.qq.cwiseSqrt();
  Eigen::VectorXd r(nb), rc(nb);
  for (Eigen::Index j = 0; j < nb; ++j) {
    r(j) = rho(model, j);
    rc(j) = std::sqrt(1.0 - r(j) * r(j));
  }

  for (Eigen::Index i = 0; i < rows; ++i) {
    PhiloxStream rng(seed, first + static_cast<std::size_t>(i));
    // U(-sqrt3, sqrt3) has unit variance, so both laws share second moments.
    auto draw = [&] { return uniform ? (2.0 * rng.uniform() - 1.0) * 1.7320508075688772 : rng.normal(); };
    const double w = draw();
    for (Eigen::Index j = 0; j < nb; ++j) {
      const double z1 = draw();
      const double z2 = draw();
      if (rep.column[static_cast<std::size_t>(j)] >= 0) {
        const auto col = rep.column[static_cast<std::size_t>(j)];
        out.p(i, j) = model.replay->p(static_cast<Eigen::Index>(first) + i, col);
        out.q(i, j) = model.replay->q(static_cast<Eigen::Index>(first) + i, col);
        continue;
      }
      out.p(i, j) = sp(j) * (own * z1 + common * w);
      out.q(i, j) = sq(j) * (own * (r(j) * z1 + rc(j) * z2) + common * w);
    }
  }
  return out;
}

SampleSet::SampleSet(std::vector<BusId> buses, Matrices data, std::vector<BusId> observed)
    : buses_(std::move(buses)), data_(std::move(data)), observed_(std::move(observed)) {
  const auto nb = static_cast<Eigen::Index>(buses_.size());
  const auto rows = data_.v.rows();
  for (const auto* m : {&data_.v, &data_.theta, &data_.p, &data_.q})
    if (m->rows() != rows || m->cols() != nb) throw DimensionMismatch("sample matrices must be samples x buses");
  std::sort(observed_.begin(), observed_.end());
  observed_.erase(std::unique(observed_.begin(), observed_.end()), observed_.end());
  for (const auto& id : observed_) {
    if (std::find(buses_.begin(), buses_.end(), id) == buses_.end()) throw UnknownBus(id);
    observed_set_.insert(id);
  }
}

std::size_t SampleSet::column_index(const BusId& id) const {
  auto it = std::find(buses_.begin(), buses_.end(), id);
  if (it == buses_.end()) throw UnknownBus(id);
  return static_cast<std::size_t>(it - buses_.begin());
}

const Eigen::MatrixXd& SampleSet::matrix(Quantity what) const {
  switch (what) {
    case Quantity::v: return data_.v;
    case Quantity::theta: return data_.theta;
    case Quantity::p: return data_.p;
    case Quantity::q: return data_.q;
  }
  return data_.v;
}

Eigen::VectorXd SampleSet::column(Quantity what, const BusId& id) const {
  const auto j = column_index(id);
  if (!is_observed(id)) throw MaskError("bus " + id + " is hidden by the observation mask");
  return matrix(what).col(static_cast<Eigen::Index>(j));
}

Eigen::MatrixXd SampleSet::observed_matrix(Quantity what) const {
  const auto& m = matrix(what);
  Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(observed_.size()));
  for (std::size_t k = 0; k < observed_.size(); ++k)
    out.col(static_cast<Eigen::Index>(k)) = m.col(static_cast<Eigen::Index>(column_index(observed_[k])));
  return out;
}

SampleSet SampleSet::head(std::size_t n) const {
  if (n > size()) throw InsufficientSamples("requested " + std::to_string(n) + " of " + std::to_string(size()) + " samples");
  const auto k = static_cast<Eigen::Index>(n);
  Matrices d{data_.v.topRows(k), data_.theta.topRows(k), data_.p.topRows(k), data_.q.topRows(k)};
  return SampleSet(buses_, std::move(d), observed_);
}

SampleSet SampleSet::with_mask(std::vector<BusId> observed) const { return SampleSet(buses_, data_, std::move(observed)); }

SampleSet SampleSet::observed_only() const {
  Matrices d{observed_matrix(Quantity::v), observed_matrix(Quantity::theta), observed_matrix(Quantity::p),
             observed_matrix(Quantity::q)};
  return SampleSet(observed_, std::move(d), observed_);
}

void SampleSet::append(const SampleSet& other) {
  if (other.buses_ != buses_ || other.observed_ != observed_)
    throw DimensionMismatch("appended samples must share buses and mask");
  auto cat = [](Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    Eigen::MatrixXd m(a.rows() + b.rows(), a.cols());
    m << a, b;
    a = std::move(m);
  };
  cat(data_.v, other.data_.v);
  cat(data_.theta, other.data_.theta);
  cat(data_.p, other.data_.p);
  cat(data_.q, other.data_.q);
}

SampleSet generate_samples(const RadialGrid& grid, const InjectionModel& model, std::size_t n, Solver solver,
                           std::uint64_t seed, std::size_t first, const std::optional<std::vector<BusId>>& observed,
                           const SimulationOptions& options) {
  const auto buses = grid.non_substation_ids();
  if (model.buses != buses) throw DimensionMismatch("injection model buses differ from the grid's non-substation buses");
  auto draw = draw_injections(model, n, seed, first);
  SampleSet::Matrices d;
  d.p = std::move(draw.p);
  d.q = std::move(draw.q);
  if (solver == Solver::lcpf) {
    const LcpfModel lc(grid);
    d.v = d.p * lc.hr().matrix() + d.q * lc.hx().matrix();
    d.theta = d.p * lc.hx().matrix() - d.q * lc.hr().matrix();
  } else {
    const AcpfSolver ac(grid, options.acpf);
    d.v.resize(d.p.rows(), d.p.cols());
    d.theta.resize(d.p.rows(), d.p.cols());
    parallel_for(
        n,
        [&](std::size_t i) {
          const auto k = static_cast<Eigen::Index>(i);
          try {
            const auto res = ac.solve(d.p.row(k).transpose(), d.q.row(k).transpose());
            d.v.row(k) = res.state.v.transpose();
            d.theta.row(k) = res.state.theta.transpose();
          } catch (const ConvergenceError& e) {
            throw ConvergenceError("sample " + std::to_string(first + i) + ": " + e.what(), e.iterations(),
                                   e.final_mismatch());
          } catch (const SingularJacobian& e) {
            throw SingularJacobian("sample " + std::to_string(first + i) + ": " + e.what());
          }
        },
        options.threads);
  }
  return SampleSet(buses, std::move(d), observed ? *observed : grid.leaf_ids());
}

void write_samples_csv(const SampleSet& samples, const std::filesystem::path& file, bool include_hidden) {
  std::FILE* f = std::fopen(file.string().c_str(), "w");
  if (!f) throw FormatError("cannot write " + file.string());
  std::fputs("t,bus,v,theta,p,q\n", f);
  const auto& t = samples.truth();
  std::vector<std::pair<BusId, Eigen::Index>> cols;
  for (std::size_t j = 0; j < samples.buses().size(); ++j)
    if (include_hidden || samples.is_observed(samples.buses()[j]))
      cols.emplace_back(samples.buses()[j], static_cast<Eigen::Index>(j));
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(samples.size()); ++i)
    for (const auto& [id, j] : cols)
      std::fprintf(f, "%ld,%s,%.17g,%.17g,%.17g,%.17g\n", static_cast<long>(i), id.c_str(), t.v(i, j), t.theta(i, j),
                   t.p(i, j), t.q(i, j));
  if (std::fclose(f) != 0) throw FormatError("error writing " + file.string());
}

SampleSet read_samples_csv(const std::filesystem::path& file, const std::optional<std::vector<BusId>>& observed) {
  std::ifstream in(file);
  if (!in) throw FormatError("cannot open " + file.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError(file.string() + ": empty sample file");
  const auto header = split_csv_line(line);
  if (header != std::vector<std::string>{"t", "bus", "v", "theta", "p", "q"})
    throw FormatError(file.string() + ": expected header t,bus,v,theta,p,q");

  struct Row {
    long t;
    std::size_t bus;
    double vals[4];
  };
  std::vector<Row> rows;
  std::map<BusId, std::size_t> bus_index;
  std::vector<BusId> buses;
  long max_t = -1;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    const std::string where = file.string() + ":" + std::to_string(lineno);
    if (cells.size() != 6) throw FormatError("expected 6 cells at " + where);
    Row r{};
    const double t = parse_double(cells[0], where);
    if (t < 0 || t != std::floor(t)) throw FormatError("bad sample index at " + where);
    r.t = static_cast<long>(t);
    auto [it, inserted] = bus_index.emplace(cells[1], buses.size());
    if (inserted) buses.push_back(cells[1]);
    r.bus = it->second;
    for (int k = 0; k < 4; ++k) r.vals[k] = parse_double(cells[static_cast<std::size_t>(k) + 2], where);
    max_t = std::max(max_t, r.t);
    rows.push_back(r);
  }
  // Columns in sorted id order to match the grid convention.
  std::vector<BusId> sorted = buses;
  std::sort(sorted.begin(), sorted.end());
  std::vector<Eigen::Index> remap(buses.size());
  for (std::size_t i = 0; i < buses.size(); ++i)
    remap[i] = static_cast<Eigen::Index>(std::lower_bound(sorted.begin(), sorted.end(), buses[i]) - sorted.begin());
  const auto n = static_cast<Eigen::Index>(max_t + 1);
  const auto nb = static_cast<Eigen::Index>(sorted.size());
  SampleSet::Matrices d{Eigen::MatrixXd::Constant(n, nb, std::nan("")), Eigen::MatrixXd::Constant(n, nb, std::nan("")),
                        Eigen::MatrixXd::Constant(n, nb, std::nan("")), Eigen::MatrixXd::Constant(n, nb, std::nan(""))};
  for (const auto& r : rows) {
    const auto j = remap[r.bus];
    d.v(r.t, j) = r.vals[0];
    d.theta(r.t, j) = r.vals[1];
    d.p(r.t, j) = r.vals[2];
    d.q(r.t, j) = r.vals[3];
  }
  if (d.v.hasNaN()) throw FormatError(file.string() + ": some (sample, bus) rows are missing");
  return SampleSet(sorted, std::move(d), observed ? *observed : sorted);
}

}  // namespace gridlearn
