#pragma once

#include "gridlearn/grid.hpp"
#include "gridlearn/rg.hpp"
#include "gridlearn/sampling.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace gridlearn {

/// r and x drawn independently and uniformly from [lo, hi].
struct ImpedanceLaw {
  double lo = 0.1;
  double hi = 0.2;
};

/// Random radial grid on n buses with ids "b00".."bNN". The root (substation) is a random
/// internal bus and the leaves are the observed set. Without enforcement the tree comes from a
/// uniform Pruefer sequence, rejected until no degree exceeds max_degree. With enforcement every
/// internal bus gets degree 3..max_degree: a random degree sequence is drawn first and the
/// Pruefer sequence is a shuffle of it.
RadialGrid gen_random_grid(std::size_t n, std::size_t max_degree, ImpedanceLaw law, std::uint64_t seed,
                           bool enforce_hidden_degree3);

/// Tree with exactly `internal` internal buses (degrees 3..max_degree), relabelled as substation
/// "sub", hidden buses "nNN" and leaves "LNN".
RadialGrid gen_feeder(std::size_t n, std::size_t internal, std::size_t max_degree, ImpedanceLaw law,
                      std::uint64_t seed);

/// Deterministic stand-ins for the 33- and 56-bus test feeders: 20 leaves + 12 hidden + substation,
/// and 33 leaves + 22 hidden + substation.
RadialGrid feeder_fixture(const std::string& name);

/// Extra lines between random non-adjacent bus pairs, impedances from `law`.
std::vector<Line> decoy_lines(const RadialGrid& grid, std::size_t count, ImpedanceLaw law, std::uint64_t seed);

/// Experiment description; see README for the JSON layout.
struct ExperimentSpec {
  struct GridSource {
    std::string type = "random";  // random | file | feeder33 | feeder56
    std::size_t n = 10;
    std::size_t max_degree = 5;
    ImpedanceLaw law{};
    bool enforce_hidden_degree3 = true;
    std::filesystem::path file;
  } grid;

  struct Injection {
    InjectionKind kind = InjectionKind::gaussian;
    double std_dev = 1.0;
    /// When set, each bus draws its own p and q standard deviations from this range.
    std::optional<std::pair<double, double>> std_range;
    double correlation = 0.0;
    std::filesystem::path replay_file;
    double power_factor = 0.95;
  } injection;

  Solver solver = Solver::lcpf;
  /// Sample counts, strictly increasing; empty means analytic moments.
  std::vector<std::size_t> samples;
  std::string algorithm = "alg3";  // alg3 | alg1
  RgConfig rg{};
  /// Tolerance grid: epsilon for alg3, tau1 = tau2 for alg1.
  std::vector<double> tolerances{1e-8};
  double d_min = 1e-8;
  std::size_t decoys = 50;
  std::size_t trials = 1;
  std::uint64_t seed = 1;
  unsigned threads = 0;

  void check() const;
};

ExperimentSpec experiment_from_json(const nlohmann::json& doc);
nlohmann::json experiment_to_json(const ExperimentSpec& spec);

struct TrialRow {
  std::size_t trial = 0;
  std::size_t n_samples = 0;  // 0 for analytic moments
  double tolerance = 0.0;
  bool exact = false;
  std::size_t edge_difference = 0;
  double impedance_error = 0.0;  // NaN unless exact
  bool partial = false;
  std::string error;  // failed trials count as inexact with every truth edge wrong
};

struct SummaryRow {
  std::size_t n_samples = 0;
  double tolerance = 0.0;
  std::size_t trials = 0;
  std::size_t failures = 0;
  double accuracy = 0.0, accuracy_se = 0.0;
  double edge_difference = 0.0, edge_difference_se = 0.0;
  double impedance_error = 0.0, impedance_error_se = 0.0;  // over exact trials only
};

struct ExperimentResult {
  std::vector<TrialRow> trials;  // sorted by (n_samples, tolerance, trial)
  std::vector<SummaryRow> summary;
};

/// Metrics for one estimate against the identifiable part of the truth.
struct Evaluation {
  bool exact = false;
  std::size_t edge_difference = 0;
  double impedance_error = 0.0;
};
Evaluation evaluate_estimate(const RadialGrid& estimate, const RadialGrid& truth);

/// Grid and injection law of one trial.
RadialGrid experiment_grid(const ExperimentSpec& spec, std::size_t trial);
InjectionModel experiment_injections(const ExperimentSpec& spec, const RadialGrid& grid, std::size_t trial);

ExperimentResult run_experiment(const ExperimentSpec& spec);
std::vector<SummaryRow> summarize(const std::vector<TrialRow>& rows);

/// trials.csv, summary.csv and long.csv (one metric per row) in `dir`.
void write_experiment(const ExperimentResult& result, const std::filesystem::path& dir);

struct SweepPoint {
  std::size_t size = 0;
  std::optional<std::size_t> n_star;  // empty when the target was not reached under the cap; 0 for analytic
  double accuracy = 0.0;             // at n_star
};

struct SweepResult {
  std::vector<SweepPoint> points;
  /// Least-squares slope of log n* against log |V| over the points that reached the target.
  std::optional<double> slope;
};

struct SweepOptions {
  double target = 0.9;
  std::size_t n_start = 250;
  std::size_t n_cap = 1'000'000;
  /// Bisection stops when the bracket ratio falls below this.
  double resolution = 1.15;
};

/// Smallest sample count reaching `target` exact-recovery accuracy for each grid size. The
/// template's first tolerance is used; its grid type must be random. A template without sample
/// counts runs on analytic moments and reports n* = 0 ("exact") where the target is met.
SweepResult sample_complexity_sweep(const std::vector<std::size_t>& sizes, const ExperimentSpec& templ,
                                    const SweepOptions& options = {});
void write_sweep(const SweepResult& result, const std::filesystem::path& dir);

}  // namespace gridlearn
