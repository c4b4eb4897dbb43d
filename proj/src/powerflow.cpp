#include "gridlearn/powerflow.hpp"

#include "gridlearn/errors.hpp"

#include <cmath>

namespace gridlearn {

namespace {

void require_size(const Eigen::VectorXd& v, std::size_t n, const char* what) {
  if (static_cast<std::size_t>(v.size()) != n)
    throw DimensionMismatch(std::string(what) + " has " + std::to_string(v.size()) + " entries, expected " +
                            std::to_string(n));
}

void require_symmetric(const Eigen::MatrixXd& m, const char* what) {
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw PreconditionError(std::string(what) + " is not symmetric");
}

}  // namespace

LcpfModel::LcpfModel(const RadialGrid& grid)
    : hr_(laplacian_inverse(grid, WeightKind::resistance)), hx_(laplacian_inverse(grid, WeightKind::reactance)) {}

NodeState LcpfModel::solve(const Eigen::VectorXd& p, const Eigen::VectorXd& q) const {
  const auto n = hr_.ids().size();
  require_size(p, n, "p");
  require_size(q, n, "q");
  NodeState s{hr_.ids(), {}, {}, p, q};
  s.v = hr_.matrix() * p + hx_.matrix() * q;
  s.theta = hx_.matrix() * p - hr_.matrix() * q;
  return s;
}

NodeState lcpf_solve(const RadialGrid& grid, const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
  return LcpfModel(grid).solve(p, q);
}

BusBalance lcpf_balance(const RadialGrid& grid, const Eigen::VectorXd& v, const Eigen::VectorXd& theta) {
  const auto inner = grid.non_substation_ids();
  require_size(v, inner.size(), "v");
  require_size(theta, inner.size(), "theta");
  std::map<BusId, std::pair<double, double>> state;  // (v, theta)
  for (std::size_t i = 0; i < inner.size(); ++i)
    state[inner[i]] = {v(static_cast<Eigen::Index>(i)), theta(static_cast<Eigen::Index>(i))};
  if (grid.root()) state[*grid.root()] = {0.0, 0.0};

  BusBalance out{grid.bus_ids(), Eigen::VectorXd::Zero(static_cast<Eigen::Index>(grid.buses().size())),
                 Eigen::VectorXd::Zero(static_cast<Eigen::Index>(grid.buses().size()))};
  std::map<BusId, Eigen::Index> pos;
  for (std::size_t i = 0; i < out.buses.size(); ++i) pos[out.buses[i]] = static_cast<Eigen::Index>(i);
  for (const auto& l : grid.lines()) {
    const auto [va, ta] = state.at(l.a());
    const auto [vb, tb] = state.at(l.b());
    const double dv = va - vb;
    const double dt = ta - tb;
    out.p(pos[l.a()]) += l.beta() * dt + l.g() * dv;
    out.q(pos[l.a()]) += l.beta() * dv - l.g() * dt;
    out.p(pos[l.b()]) -= l.beta() * dt + l.g() * dv;
    out.q(pos[l.b()]) -= l.beta() * dv - l.g() * dt;
  }
  return out;
}

Eigen::MatrixXd analytic_voltage_covariance(const RadialGrid& grid, const Eigen::MatrixXd& sigma_pp,
                                            const Eigen::MatrixXd& sigma_qq, const Eigen::MatrixXd& sigma_pq) {
  const auto hr = laplacian_inverse(grid, WeightKind::resistance);
  const auto hx = laplacian_inverse(grid, WeightKind::reactance);
  const auto n = static_cast<Eigen::Index>(hr.ids().size());
  for (const auto* m : {&sigma_pp, &sigma_qq, &sigma_pq})
    if (m->rows() != n || m->cols() != n)
      throw DimensionMismatch("injection covariance must be " + std::to_string(n) + "x" + std::to_string(n));
  require_symmetric(sigma_pp, "E[pp^T]");
  require_symmetric(sigma_qq, "E[qq^T]");
  const auto& r = hr.matrix();
  const auto& x = hx.matrix();
  Eigen::MatrixXd cov = r * sigma_pp * r + x * sigma_qq * x + r * sigma_pq * x + x * sigma_pq.transpose() * r;
  return 0.5 * (cov + cov.transpose());
}

AcpfSolver::AcpfSolver(const RadialGrid& grid, AcpfOptions options)
    : buses_(grid.non_substation_ids()), options_(options) {
  if (!grid.rooted() || !grid.is_tree()) throw InvalidGrid("AC power flow requires a rooted radial grid");
  const auto n = static_cast<Eigen::Index>(buses_.size());
  std::map<BusId, Eigen::Index> pos;
  for (Eigen::Index i = 0; i < n; ++i) pos[buses_[static_cast<std::size_t>(i)]] = i;
  pos[*grid.root()] = n;
  g_ = Eigen::MatrixXd::Zero(n + 1, n + 1);
  b_ = Eigen::MatrixXd::Zero(n + 1, n + 1);
  // Series admittance y = 1/z = g - j*beta.
  for (const auto& l : grid.lines()) {
    const auto i = pos.at(l.a());
    const auto k = pos.at(l.b());
    g_(i, i) += l.g();
    g_(k, k) += l.g();
    g_(i, k) -= l.g();
    g_(k, i) -= l.g();
    b_(i, i) -= l.beta();
    b_(k, k) -= l.beta();
    b_(i, k) += l.beta();
    b_(k, i) += l.beta();
  }
}

void AcpfSolver::injections(const Eigen::VectorXd& vmag, const Eigen::VectorXd& angle, Eigen::VectorXd& p_out,
                            Eigen::VectorXd& q_out) const {
  const auto n = static_cast<Eigen::Index>(buses_.size());
  p_out.setZero(n);
  q_out.setZero(n);
  auto vm = [&](Eigen::Index k) { return k == n ? 1.0 : vmag(k); };
  auto va = [&](Eigen::Index k) { return k == n ? 0.0 : angle(k); };
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k <= n; ++k) {
      const double gik = g_(i, k);
      const double bik = b_(i, k);
      if (gik == 0.0 && bik == 0.0) continue;
      const double t = va(i) - va(k);
      const double c = std::cos(t);
      const double s = std::sin(t);
      const double vv = vm(i) * vm(k);
      p_out(i) += vv * (gik * c + bik * s);
      q_out(i) += vv * (gik * s - bik * c);
    }
  }
}

Eigen::VectorXd AcpfSolver::mismatch(const Eigen::VectorXd& vmag, const Eigen::VectorXd& angle,
                                     const Eigen::VectorXd& p, const Eigen::VectorXd& q) const {
  const auto n = static_cast<Eigen::Index>(buses_.size());
  Eigen::VectorXd pc, qc;
  injections(vmag, angle, pc, qc);
  Eigen::VectorXd f(2 * n);
  f.head(n) = pc - p;
  f.tail(n) = qc - q;
  return f;
}

Eigen::MatrixXd AcpfSolver::jacobian(const Eigen::VectorXd& vmag, const Eigen::VectorXd& angle) const {
  const auto n = static_cast<Eigen::Index>(buses_.size());
  Eigen::VectorXd pc, qc;
  injections(vmag, angle, pc, qc);
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < n; ++k) {
      if (k == i) continue;
      const double gik = g_(i, k);
      const double bik = b_(i, k);
      if (gik == 0.0 && bik == 0.0) continue;
      const double t = angle(i) - angle(k);
      const double c = std::cos(t);
      const double s = std::sin(t);
      j(i, k) = vmag(i) * vmag(k) * (gik * s - bik * c);
      j(i, n + k) = vmag(i) * (gik * c + bik * s);
      j(n + i, k) = -vmag(i) * vmag(k) * (gik * c + bik * s);
      j(n + i, n + k) = vmag(i) * (gik * s - bik * c);
    }
    const double vi = vmag(i);
    j(i, i) = -qc(i) - b_(i, i) * vi * vi;
    j(i, n + i) = pc(i) / vi + g_(i, i) * vi;
    j(n + i, i) = pc(i) - g_(i, i) * vi * vi;
    j(n + i, n + i) = qc(i) / vi - b_(i, i) * vi;
  }
  return j;
}

AcpfResult AcpfSolver::solve(const Eigen::VectorXd& p, const Eigen::VectorXd& q) const {
  const auto n = static_cast<Eigen::Index>(buses_.size());
  require_size(p, buses_.size(), "p");
  require_size(q, buses_.size(), "q");
  Eigen::VectorXd vmag = Eigen::VectorXd::Ones(n);
  Eigen::VectorXd angle = Eigen::VectorXd::Zero(n);
  for (int it = 1;; ++it) {
    const Eigen::VectorXd f = mismatch(vmag, angle, p, q);
    const double norm = n == 0 ? 0.0 : f.cwiseAbs().maxCoeff();
    if (!std::isfinite(norm))
      throw ConvergenceError("AC power flow diverged", it, norm);
    if (norm <= options_.tol) {
      AcpfResult r{{buses_, vmag.array() - 1.0, angle, p, q}, it, norm};
      return r;
    }
    if (it >= options_.max_iter)
      throw ConvergenceError("AC power flow did not converge in " + std::to_string(it) + " iterations (mismatch " +
                                 std::to_string(norm) + ")",
                             it, norm);
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(jacobian(vmag, angle));
    if (!(lu.rcond() > 1e-14)) throw SingularJacobian("AC power flow Jacobian is singular");
    const Eigen::VectorXd dx = lu.solve(-f);
    angle += dx.head(n);
    vmag += dx.tail(n);
  }
}

AcpfResult acpf_solve(const RadialGrid& grid, const Eigen::VectorXd& p, const Eigen::VectorXd& q,
                      AcpfOptions options) {
  return AcpfSolver(grid, options).solve(p, q);
}

}  // namespace gridlearn
