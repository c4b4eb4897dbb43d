#pragma once

#include "gridlearn/grid.hpp"

#include <Eigen/Dense>

#include <vector>

namespace gridlearn {

/// Voltage-magnitude deviation v, phase deviation theta and injections p, q over the non-substation
/// buses, in LaplacianInverse index order.
struct NodeState {
  std::vector<BusId> buses;
  Eigen::VectorXd v;
  Eigen::VectorXd theta;
  Eigen::VectorXd p;
  Eigen::VectorXd q;
};

/// Linear coupled power flow: v = Hr p + Hx q, theta = Hx p - Hr q, where Hr, Hx are the inverse
/// reduced Laplacians with 1/r and 1/x weights.
class LcpfModel {
 public:
  explicit LcpfModel(const RadialGrid& grid);

  const std::vector<BusId>& buses() const { return hr_.ids(); }
  const LaplacianInverse& hr() const { return hr_; }
  const LaplacianInverse& hx() const { return hx_; }

  NodeState solve(const Eigen::VectorXd& p, const Eigen::VectorXd& q) const;

 private:
  LaplacianInverse hr_;
  LaplacianInverse hx_;
};

NodeState lcpf_solve(const RadialGrid& grid, const Eigen::VectorXd& p, const Eigen::VectorXd& q);

/// Injections implied by the linearized branch equations at every bus (root included), ordered as
/// grid.bus_ids(). Voltage inputs are over non-substation buses; the root sits at v = theta = 0.
struct BusBalance {
  std::vector<BusId> buses;
  Eigen::VectorXd p;
  Eigen::VectorXd q;
};
BusBalance lcpf_balance(const RadialGrid& grid, const Eigen::VectorXd& v, const Eigen::VectorXd& theta);

/// E[v v^T] = Hr Spp Hr + Hx Sqq Hx + Hr Spq Hx + Hx Spq^T Hr for injection covariances over the
/// non-substation buses (Spq = E[p q^T]).
Eigen::MatrixXd analytic_voltage_covariance(const RadialGrid& grid, const Eigen::MatrixXd& sigma_pp,
                                            const Eigen::MatrixXd& sigma_qq, const Eigen::MatrixXd& sigma_pq);

struct AcpfOptions {
  double tol = 1e-8;
  int max_iter = 50;
};

struct AcpfResult {
  NodeState state;  // deviations from the flat zero-injection solution
  int iterations = 0;
  double mismatch = 0.0;
};

/// Newton-Raphson AC power flow in polar form; the root is the slack bus at 1.0 p.u., 0 rad and every
/// other bus is PQ. Iterations count mismatch evaluations, so a converged flat start reports one.
class AcpfSolver {
 public:
  explicit AcpfSolver(const RadialGrid& grid, AcpfOptions options = {});

  const std::vector<BusId>& buses() const { return buses_; }
  AcpfResult solve(const Eigen::VectorXd& p, const Eigen::VectorXd& q) const;

  /// Complex power mismatch (P, Q stacked) of a full voltage solution; magnitudes are absolute
  /// (1 + deviation), angles in radians, both over the non-substation buses.
  Eigen::VectorXd mismatch(const Eigen::VectorXd& vmag, const Eigen::VectorXd& angle, const Eigen::VectorXd& p,
                           const Eigen::VectorXd& q) const;
  /// Analytic Jacobian of the stacked mismatch w.r.t. (angle, vmag).
  Eigen::MatrixXd jacobian(const Eigen::VectorXd& vmag, const Eigen::VectorXd& angle) const;

 private:
  void injections(const Eigen::VectorXd& vmag, const Eigen::VectorXd& angle, Eigen::VectorXd& p_out,
                  Eigen::VectorXd& q_out) const;

  std::vector<BusId> buses_;
  AcpfOptions options_;
  // Bus admittance over non-substation buses plus the slack as the last index.
  Eigen::MatrixXd g_;
  Eigen::MatrixXd b_;
};

AcpfResult acpf_solve(const RadialGrid& grid, const Eigen::VectorXd& p, const Eigen::VectorXd& q,
                      AcpfOptions options = {});

}  // namespace gridlearn
