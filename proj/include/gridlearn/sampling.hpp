#pragma once

#include "gridlearn/grid.hpp"
#include "gridlearn/powerflow.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace gridlearn {

enum class InjectionKind { gaussian, uniform, replay };
enum class Solver { lcpf, acpf };

const char* to_string(InjectionKind kind);
InjectionKind injection_kind_from_string(const std::string& s);
const char* to_string(Solver solver);
Solver solver_from_string(const std::string& s);

/// Mean-subtracted active-power traces for a set of leaves (rows are timestamps) and the constant
/// power factor used to derive reactive power.
struct ReplayLoads {
  std::vector<BusId> buses;
  Eigen::MatrixXd p;
  Eigen::MatrixXd q;
  std::vector<std::string> warnings;
};

/// Reads a real-load CSV (header row of bus ids, one row per timestamp), keeps the first `n` rows
/// of the requested leaf columns, subtracts each column's mean and sets q = p tan(acos(pf)).
ReplayLoads replay_real_loads(const std::filesystem::path& file, double power_factor, std::size_t n,
                              const std::vector<BusId>& leaves);

/// Zero-mean injection law over the non-substation buses. Per-bus second moments pp = E[p^2],
/// qq = E[q^2], pq = E[pq]; `correlation` adds a common factor shared by every p and q so that the
/// normalized joint covariance is (1 - c) I + c 1 (with the per-bus p-q coupling on the diagonal
/// blocks). Replay buses take their p, q rows from `replay`; the rest follow the Gaussian law.
struct InjectionModel {
  std::vector<BusId> buses;
  Eigen::VectorXd pp;
  Eigen::VectorXd qq;
  Eigen::VectorXd pq;
  InjectionKind kind = InjectionKind::gaussian;
  double correlation = 0.0;
  std::optional<ReplayLoads> replay;

  /// Independent injections with E[p^2] = E[q^2] = std^2 and E[pq] = 0 at every bus.
  static InjectionModel isotropic(const RadialGrid& grid, double std_dev);

  std::size_t index_of(const BusId& id) const;
  /// Throws PreconditionError on malformed parameters; returns conditioning warnings (per-bus
  /// moment determinant below `d_min`, relative to E[p^2]E[q^2]).
  std::vector<std::string> check(double d_min = 1e-8) const;
  /// E[p p^T], E[q q^T], E[p q^T] over `buses` (replay buses use their empirical moments).
  Eigen::MatrixXd sigma_pp() const;
  Eigen::MatrixXd sigma_qq() const;
  Eigen::MatrixXd sigma_pq() const;
};

struct InjectionDraw {
  std::vector<BusId> buses;
  Eigen::MatrixXd p;  // samples x buses
  Eigen::MatrixXd q;
};

/// Draws samples [first, first + n). Sample i uses Philox stream i under `seed`, so any range is a
/// slice of the same infinite sequence.
InjectionDraw draw_injections(const InjectionModel& model, std::size_t n, std::uint64_t seed,
                              std::size_t first = 0);

enum class Quantity { v, theta, p, q };

/// Per-sample node states (rows are samples, columns buses in non-substation order) with an
/// observation mask. Masked accessors refuse hidden buses; `truth()` is the explicit escape hatch
/// for simulation and evaluation code.
class SampleSet {
 public:
  struct Matrices {
    Eigen::MatrixXd v, theta, p, q;
  };

  SampleSet() = default;
  SampleSet(std::vector<BusId> buses, Matrices data, std::vector<BusId> observed);

  std::size_t size() const { return static_cast<std::size_t>(data_.v.rows()); }
  const std::vector<BusId>& buses() const { return buses_; }
  const std::vector<BusId>& observed() const { return observed_; }
  bool is_observed(const BusId& id) const { return observed_set_.count(id) > 0; }

  /// Column of one observed bus; MaskError for hidden buses, UnknownBus for absent ones.
  Eigen::VectorXd column(Quantity what, const BusId& id) const;
  /// samples x observed matrix in observed() order.
  Eigen::MatrixXd observed_matrix(Quantity what) const;

  const Matrices& truth() const { return data_; }

  SampleSet head(std::size_t n) const;
  SampleSet with_mask(std::vector<BusId> observed) const;
  /// Drops hidden columns entirely.
  SampleSet observed_only() const;
  /// Rows of `other` appended (same buses and mask required).
  void append(const SampleSet& other);

 private:
  std::size_t column_index(const BusId& id) const;
  const Eigen::MatrixXd& matrix(Quantity what) const;

  std::vector<BusId> buses_;
  Matrices data_;
  std::vector<BusId> observed_;
  std::set<BusId> observed_set_;
};

struct SimulationOptions {
  AcpfOptions acpf{};
  unsigned threads = 0;
};

/// Injections for samples [first, first + n) pushed through the chosen power flow. The mask is the
/// leaf set unless `observed` is given.
SampleSet generate_samples(const RadialGrid& grid, const InjectionModel& model, std::size_t n, Solver solver,
                           std::uint64_t seed, std::size_t first = 0,
                           const std::optional<std::vector<BusId>>& observed = std::nullopt,
                           const SimulationOptions& options = {});

/// Long-form CSV "t,bus,v,theta,p,q" at round-trip precision; observed buses only unless
/// `include_hidden`.
void write_samples_csv(const SampleSet& samples, const std::filesystem::path& file, bool include_hidden = false);
/// Every bus present in the file is observed unless `observed` narrows the mask.
SampleSet read_samples_csv(const std::filesystem::path& file,
                           const std::optional<std::vector<BusId>>& observed = std::nullopt);

}  // namespace gridlearn
