#include "gridlearn/pipeline.hpp"

#include "gridlearn/errors.hpp"
#include "gridlearn/parallel.hpp"
#include "gridlearn/powerflow.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace gridlearn {

EstimationResult run_alg3(const MomentSet& moments, const Alg3Config& config) {
  if (moments.nodes.size() < 2) throw PreconditionError("need at least two observed nodes");
  const DistanceMatrix d = distance_matrix(moments, moments.nodes, config.d_min);
  return to_estimation_result(run_rg(d, config.rg));
}

EstimationResult run_alg3(const SampleSet& samples, const Alg3Config& config) {
  return run_alg3(empirical_moments(samples), config);
}

std::vector<std::vector<BusId>> split_by_substation(const MomentSet& moments, double threshold) {
  const auto n = static_cast<std::size_t>(moments.nodes.size());
  std::vector<std::size_t> group(n);
  std::iota(group.begin(), group.end(), 0);
  auto find = [&](std::size_t x) {
    while (group[x] != x) x = group[x] = group[group[x]];
    return x;
  };
  for (std::size_t i = 0; i < n; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    for (std::size_t j = i + 1; j < n; ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      const double denom = std::sqrt(moments.vv(ii, ii) * moments.vv(jj, jj));
      if (!(denom > 0.0)) continue;
      if (std::abs(moments.vv(ii, jj)) / denom > threshold) {
        const auto a = find(i), b = find(j);
        group[std::max(a, b)] = std::min(a, b);
      }
    }
  }
  std::map<std::size_t, std::vector<BusId>> by_root;
  for (std::size_t i = 0; i < n; ++i) by_root[find(i)].push_back(moments.nodes[i]);
  std::vector<std::vector<BusId>> out;
  for (auto& [root, members] : by_root) {
    std::sort(members.begin(), members.end());
    out.push_back(std::move(members));
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::vector<BusId>> split_by_substation(const SampleSet& samples, double threshold) {
  if (samples.size() < 2) throw InsufficientSamples("substation split needs at least two samples");
  return split_by_substation(empirical_moments(samples), threshold);
}

std::vector<EstimationResult> run_alg3_grouped(const MomentSet& moments, const Alg3Config& config, double threshold,
                                               unsigned threads) {
  const auto groups = split_by_substation(moments, threshold);
  std::vector<std::optional<EstimationResult>> slots(groups.size());
  parallel_for(
      groups.size(),
      [&](std::size_t g) {
        if (groups[g].size() == 1) {
          EstimationResult single{RadialGrid::from_lines(groups[g], {}, std::nullopt, groups[g]), {}};
          single.diagnostics.warnings.push_back("isolated node " + groups[g].front());
          slots[g] = std::move(single);
          return;
        }
        slots[g] = run_alg3(moments.subset(groups[g]), config);
      },
      threads);
  std::vector<EstimationResult> out;
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

HiddenStateRecovery recover_hidden_states(const RadialGrid& grid, const SampleSet& samples) {
  if (!grid.rooted()) throw PreconditionError("hidden-state recovery needs a rooted grid");
  const LcpfModel model(grid);
  const auto& buses = model.buses();
  std::vector<Eigen::Index> obs, hid;
  HiddenStateRecovery out;
  for (std::size_t i = 0; i < buses.size(); ++i) {
    if (samples.is_observed(buses[i]))
      obs.push_back(static_cast<Eigen::Index>(i));
    else {
      hid.push_back(static_cast<Eigen::Index>(i));
      out.buses.push_back(buses[i]);
    }
  }
  for (const auto& id : samples.observed())
    if (!grid.contains(id)) throw UnknownBus(id);

  const Eigen::MatrixXd& hr = model.hr().matrix();
  const Eigen::MatrixXd& hx = model.hx().matrix();
  const auto no = static_cast<Eigen::Index>(obs.size());
  const auto nh = static_cast<Eigen::Index>(hid.size());
  const auto ns = static_cast<Eigen::Index>(samples.size());
  out.unknowns = 2 * nh;

  // Rows: v at observed buses, then theta. Columns: hidden p, then hidden q.
  Eigen::MatrixXd a(2 * no, 2 * nh);
  for (Eigen::Index i = 0; i < no; ++i)
    for (Eigen::Index j = 0; j < nh; ++j) {
      a(i, j) = hr(obs[i], hid[j]);
      a(i, nh + j) = hx(obs[i], hid[j]);
      a(no + i, j) = hx(obs[i], hid[j]);
      a(no + i, nh + j) = -hr(obs[i], hid[j]);
    }

  Eigen::MatrixXd po(ns, no), qo(ns, no), vo(ns, no), to(ns, no);
  for (Eigen::Index i = 0; i < no; ++i) {
    const BusId& id = buses[static_cast<std::size_t>(obs[i])];
    po.col(i) = samples.column(Quantity::p, id);
    qo.col(i) = samples.column(Quantity::q, id);
    vo.col(i) = samples.column(Quantity::v, id);
    to.col(i) = samples.column(Quantity::theta, id);
  }

  Eigen::MatrixXd hr_oo(no, no), hx_oo(no, no);
  for (Eigen::Index i = 0; i < no; ++i)
    for (Eigen::Index j = 0; j < no; ++j) {
      hr_oo(i, j) = hr(obs[i], obs[j]);
      hx_oo(i, j) = hx(obs[i], obs[j]);
    }
  // Right-hand side with the observed-injection contribution removed; one column per sample.
  Eigen::MatrixXd rhs(2 * no, ns);
  rhs.topRows(no) = (vo - po * hr_oo.transpose() - qo * hx_oo.transpose()).transpose();
  rhs.bottomRows(no) = (to - po * hx_oo.transpose() + qo * hr_oo.transpose()).transpose();

  Eigen::MatrixXd ph(ns, nh), qh(ns, nh);
  if (nh > 0) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
    qr.setThreshold(1e-10);
    out.rank = qr.rank();
    if (out.rank < out.unknowns)
      throw RankDeficient(static_cast<std::size_t>(out.rank), static_cast<std::size_t>(out.unknowns));
    const Eigen::MatrixXd sol = qr.solve(rhs);
    ph = sol.topRows(nh).transpose();
    qh = sol.bottomRows(nh).transpose();
    out.residual = ns > 0 ? (a * sol - rhs).cwiseAbs().maxCoeff() : 0.0;
  }

  const auto nb = static_cast<Eigen::Index>(buses.size());
  Eigen::MatrixXd p(ns, nb), q(ns, nb);
  for (Eigen::Index i = 0; i < no; ++i) {
    p.col(obs[i]) = po.col(i);
    q.col(obs[i]) = qo.col(i);
  }
  for (Eigen::Index j = 0; j < nh; ++j) {
    p.col(hid[j]) = ph.col(j);
    q.col(hid[j]) = qh.col(j);
  }
  const Eigen::MatrixXd v = p * hr.transpose() + q * hx.transpose();
  const Eigen::MatrixXd theta = p * hx.transpose() - q * hr.transpose();

  out.p = ph;
  out.q = qh;
  out.v.resize(ns, nh);
  out.theta.resize(ns, nh);
  for (Eigen::Index j = 0; j < nh; ++j) {
    out.v.col(j) = v.col(hid[j]);
    out.theta.col(j) = theta.col(hid[j]);
  }
  const double inv_n = ns > 0 ? 1.0 / static_cast<double>(ns) : 0.0;
  out.pp = ph.colwise().squaredNorm().transpose() * inv_n;
  out.qq = qh.colwise().squaredNorm().transpose() * inv_n;
  out.pq = (ph.cwiseProduct(qh)).colwise().sum().transpose() * inv_n;
  return out;
}

}  // namespace gridlearn
