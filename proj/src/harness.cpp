#include "gridlearn/harness.hpp"

#include "gridlearn/alg1.hpp"
#include "gridlearn/errors.hpp"
#include "gridlearn/grid_io.hpp"
#include "gridlearn/moments.hpp"
#include "gridlearn/parallel.hpp"
#include "gridlearn/pipeline.hpp"
#include "gridlearn/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <queue>
#include <set>
#include <tuple>

namespace gridlearn {

namespace {

std::size_t uniform_index(PhiloxStream& rng, std::size_t n) {
  return std::min(n - 1, static_cast<std::size_t>(rng.uniform() * static_cast<double>(n)));
}

template <class T>
void shuffle(std::vector<T>& v, PhiloxStream& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[uniform_index(rng, i)]);
}

double draw(const ImpedanceLaw& law, PhiloxStream& rng) { return law.lo + (law.hi - law.lo) * rng.uniform(); }

void check_law(const ImpedanceLaw& law) {
  if (!(law.lo > 0.0 && law.hi >= law.lo && std::isfinite(law.hi)))
    throw PreconditionError("impedance law needs 0 < lo <= hi");
}

// Edges of the labelled tree encoded by a Pruefer sequence over labels 0..n-1.
std::vector<std::pair<std::size_t, std::size_t>> pruefer_decode(const std::vector<std::size_t>& seq, std::size_t n) {
  std::vector<std::size_t> degree(n, 1);
  for (auto s : seq) ++degree[s];
  std::priority_queue<std::size_t, std::vector<std::size_t>, std::greater<>> leaves;
  for (std::size_t i = 0; i < n; ++i)
    if (degree[i] == 1) leaves.push(i);
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (auto s : seq) {
    const auto leaf = leaves.top();
    leaves.pop();
    edges.emplace_back(leaf, s);
    if (--degree[s] == 1) leaves.push(s);
  }
  const auto u = leaves.top();
  leaves.pop();
  edges.emplace_back(u, leaves.top());
  return edges;
}

// Pruefer sequence whose internal labels have degrees in [3, max_degree]; `internal` fixes their
// count, otherwise it is drawn uniformly from the feasible range.
std::vector<std::size_t> constrained_sequence(std::size_t n, std::optional<std::size_t> internal,
                                              std::size_t max_degree, PhiloxStream& rng,
                                              std::vector<std::size_t>& internal_labels) {
  const std::size_t len = n - 2;
  if (max_degree < 3) throw PreconditionError("hidden degree 3 needs max_degree >= 3");
  const std::size_t lo = (len + max_degree - 2) / (max_degree - 1);
  const std::size_t hi = len / 2;
  if (len == 0 || lo > hi)
    throw PreconditionError("no tree on " + std::to_string(n) + " buses has every internal bus of degree 3.." +
                            std::to_string(max_degree));
  std::size_t k = internal ? *internal : lo + uniform_index(rng, hi - lo + 1);
  if (k < lo || k > hi)
    throw PreconditionError("no tree on " + std::to_string(n) + " buses has " + std::to_string(k) +
                            " internal buses of degree 3.." + std::to_string(max_degree));
  std::vector<std::size_t> count(k, 2);
  std::size_t left = len - 2 * k;
  while (left > 0) {
    const auto i = uniform_index(rng, k);
    if (count[i] + 1 >= max_degree) continue;
    ++count[i];
    --left;
  }
  std::vector<std::size_t> labels(n);
  std::iota(labels.begin(), labels.end(), 0);
  shuffle(labels, rng);
  internal_labels.assign(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(k));
  std::vector<std::size_t> seq;
  for (std::size_t i = 0; i < k; ++i) seq.insert(seq.end(), count[i], internal_labels[i]);
  shuffle(seq, rng);
  return seq;
}

std::string padded(const std::string& prefix, std::size_t i, std::size_t n) {
  const auto width = std::to_string(n > 0 ? n - 1 : 0).size();
  std::string digits = std::to_string(i);
  if (digits.size() < std::max<std::size_t>(width, 2)) digits.insert(0, std::max<std::size_t>(width, 2) - digits.size(), '0');
  return prefix + digits;
}

RadialGrid assemble(const std::vector<std::pair<std::size_t, std::size_t>>& edges, const std::vector<BusId>& names,
                    std::size_t root, const ImpedanceLaw& law, PhiloxStream& rng) {
  std::vector<Line> lines;
  for (const auto& [u, v] : edges) {
    const double r = draw(law, rng);
    const double x = draw(law, rng);
    lines.emplace_back(names[std::min(u, v)], names[std::max(u, v)], r, x);
  }
  std::sort(lines.begin(), lines.end(), [](const Line& a, const Line& b) {
    return std::tie(a.a(), a.b()) < std::tie(b.a(), b.b());
  });
  return RadialGrid::from_lines(names, std::move(lines), names[root]);
}

}  // namespace

RadialGrid gen_random_grid(std::size_t n, std::size_t max_degree, ImpedanceLaw law, std::uint64_t seed,
                           bool enforce_hidden_degree3) {
  if (n < 3) throw PreconditionError("random grids need at least 3 buses");
  if (max_degree < 2) throw PreconditionError("max_degree must be at least 2");
  check_law(law);
  PhiloxStream rng(seed, 0);
  std::vector<BusId> names;
  for (std::size_t i = 0; i < n; ++i) names.push_back(padded("b", i, n));

  std::vector<std::pair<std::size_t, std::size_t>> edges;
  std::vector<std::size_t> internal;
  if (enforce_hidden_degree3) {
    edges = pruefer_decode(constrained_sequence(n, std::nullopt, max_degree, rng, internal), n);
  } else {
    constexpr int attempts = 100000;
    for (int a = 0;; ++a) {
      if (a == attempts) throw PreconditionError("could not draw a tree within the degree bound");
      std::vector<std::size_t> seq(n - 2);
      for (auto& s : seq) s = uniform_index(rng, n);
      std::vector<std::size_t> degree(n, 1);
      for (auto s : seq) ++degree[s];
      if (*std::max_element(degree.begin(), degree.end()) > max_degree) continue;
      edges = pruefer_decode(seq, n);
      internal.clear();
      for (std::size_t i = 0; i < n; ++i)
        if (degree[i] > 1) internal.push_back(i);
      break;
    }
  }
  std::sort(internal.begin(), internal.end());
  const auto root = internal[uniform_index(rng, internal.size())];
  return assemble(edges, names, root, law, rng);
}

RadialGrid gen_feeder(std::size_t n, std::size_t internal, std::size_t max_degree, ImpedanceLaw law,
                      std::uint64_t seed) {
  if (n < 4) throw PreconditionError("feeders need at least 4 buses");
  check_law(law);
  PhiloxStream rng(seed, 0);
  std::vector<std::size_t> internal_labels;
  const auto edges = pruefer_decode(constrained_sequence(n, internal, max_degree, rng, internal_labels), n);
  std::sort(internal_labels.begin(), internal_labels.end());
  const auto root = internal_labels[uniform_index(rng, internal_labels.size())];
  std::set<std::size_t> inner(internal_labels.begin(), internal_labels.end());
  std::vector<BusId> names(n);
  std::size_t hidden = 0, leaves = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (i == root)
      names[i] = "sub";
    else if (inner.count(i))
      names[i] = padded("n", ++hidden, internal);
    else
      names[i] = padded("L", ++leaves, n - internal + 1);
  }
  return assemble(edges, names, root, law, rng);
}

RadialGrid feeder_fixture(const std::string& name) {
  if (name == "feeder33" || name == "33") return gen_feeder(33, 13, 5, {}, 33);
  if (name == "feeder56" || name == "56") return gen_feeder(56, 23, 5, {}, 56);
  throw PreconditionError("unknown feeder fixture '" + name + "'");
}

std::vector<Line> decoy_lines(const RadialGrid& grid, std::size_t count, ImpedanceLaw law, std::uint64_t seed) {
  check_law(law);
  const auto ids = grid.bus_ids();
  const std::size_t n = ids.size();
  const std::size_t available = n * (n - 1) / 2 - grid.lines().size();
  if (count > available)
    throw PreconditionError("only " + std::to_string(available) + " non-adjacent pairs for " + std::to_string(count) +
                            " decoys");
  PhiloxStream rng(seed, 0);
  std::set<std::pair<BusId, BusId>> used;
  std::vector<Line> out;
  while (out.size() < count) {
    const auto i = uniform_index(rng, n), j = uniform_index(rng, n);
    if (i == j) continue;
    const auto key = std::minmax(ids[i], ids[j]);
    if (grid.find_line(key.first, key.second) || !used.insert(key).second) continue;
    const double r = draw(law, rng);
    const double x = draw(law, rng);
    out.emplace_back(key.first, key.second, r, x);
  }
  return out;
}

void ExperimentSpec::check() const {
  if (trials < 1) throw PreconditionError("trials must be >= 1");
  for (std::size_t i = 1; i < samples.size(); ++i)
    if (samples[i] <= samples[i - 1]) throw PreconditionError("sample counts must be strictly increasing");
  if (!samples.empty() && samples.front() < 2) throw PreconditionError("sample counts must be >= 2");
  if (tolerances.empty()) throw PreconditionError("tolerance grid is empty");
  if (algorithm != "alg1" && algorithm != "alg3") throw PreconditionError("algorithm must be alg1 or alg3");
  if (grid.type != "random" && grid.type != "file" && grid.type != "feeder33" && grid.type != "feeder56")
    throw PreconditionError("unknown grid type '" + grid.type + "'");
  if (injection.kind == InjectionKind::replay && injection.replay_file.empty())
    throw PreconditionError("replay injections need a file");
  rg.check();
}

ExperimentSpec experiment_from_json(const nlohmann::json& doc) {
  ExperimentSpec s;
  try {
    if (doc.contains("grid")) {
      const auto& g = doc.at("grid");
      s.grid.type = g.value("type", s.grid.type);
      s.grid.n = g.value("n", s.grid.n);
      s.grid.max_degree = g.value("max_degree", s.grid.max_degree);
      if (g.contains("impedance")) {
        s.grid.law.lo = g.at("impedance").at(0).get<double>();
        s.grid.law.hi = g.at("impedance").at(1).get<double>();
      }
      s.grid.enforce_hidden_degree3 = g.value("enforce_hidden_degree3", s.grid.enforce_hidden_degree3);
      s.grid.file = g.value("file", std::string{});
    }
    if (doc.contains("injection")) {
      const auto& i = doc.at("injection");
      s.injection.kind = injection_kind_from_string(i.value("kind", std::string("gaussian")));
      s.injection.std_dev = i.value("std", s.injection.std_dev);
      if (i.contains("std_range"))
        s.injection.std_range = std::make_pair(i.at("std_range").at(0).get<double>(), i.at("std_range").at(1).get<double>());
      s.injection.correlation = i.value("correlation", s.injection.correlation);
      s.injection.replay_file = i.value("file", std::string{});
      s.injection.power_factor = i.value("power_factor", s.injection.power_factor);
    }
    s.solver = solver_from_string(doc.value("solver", std::string("lcpf")));
    if (doc.contains("samples")) {
      const auto& n = doc.at("samples");
      if (n.is_string()) {
        if (n.get<std::string>() != "analytic") throw FormatError("samples must be a list or \"analytic\"");
      } else {
        s.samples = n.get<std::vector<std::size_t>>();
      }
    }
    s.algorithm = doc.value("algorithm", s.algorithm);
    if (doc.contains("rg")) {
      const auto& r = doc.at("rg");
      s.rg.mode = rg_mode_from_string(r.value("mode", std::string(to_string(s.rg.mode))));
      if (r.contains("tau") && !r.at("tau").is_null()) s.rg.tau = r.at("tau").get<double>();
      s.rg.alpha = r.value("alpha", s.rg.alpha);
      s.rg.epsilon_cap_factor = r.value("epsilon_cap_factor", s.rg.epsilon_cap_factor);
    }
    if (doc.contains("tolerances")) s.tolerances = doc.at("tolerances").get<std::vector<double>>();
    s.d_min = doc.value("d_min", s.d_min);
    s.decoys = doc.value("decoys", s.decoys);
    s.trials = doc.value("trials", s.trials);
    s.seed = doc.value("seed", s.seed);
    s.threads = doc.value("threads", s.threads);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("experiment spec: ") + e.what());
  }
  if (!s.tolerances.empty()) s.rg.epsilon = s.tolerances.front();
  s.check();
  return s;
}

nlohmann::json experiment_to_json(const ExperimentSpec& s) {
  nlohmann::json doc;
  doc["grid"] = {{"type", s.grid.type},
                 {"n", s.grid.n},
                 {"max_degree", s.grid.max_degree},
                 {"impedance", {s.grid.law.lo, s.grid.law.hi}},
                 {"enforce_hidden_degree3", s.grid.enforce_hidden_degree3},
                 {"file", s.grid.file.string()}};
  doc["injection"] = {{"kind", to_string(s.injection.kind)},
                      {"std", s.injection.std_dev},
                      {"correlation", s.injection.correlation},
                      {"file", s.injection.replay_file.string()},
                      {"power_factor", s.injection.power_factor}};
  if (s.injection.std_range) doc["injection"]["std_range"] = {s.injection.std_range->first, s.injection.std_range->second};
  doc["solver"] = to_string(s.solver);
  if (s.samples.empty())
    doc["samples"] = "analytic";
  else
    doc["samples"] = s.samples;
  doc["algorithm"] = s.algorithm;
  doc["rg"] = {{"mode", to_string(s.rg.mode)}, {"alpha", s.rg.alpha}, {"epsilon_cap_factor", s.rg.epsilon_cap_factor}};
  doc["rg"]["tau"] = std::isinf(s.rg.tau) ? nlohmann::json(nullptr) : nlohmann::json(s.rg.tau);
  doc["tolerances"] = s.tolerances;
  doc["d_min"] = s.d_min;
  doc["decoys"] = s.decoys;
  doc["trials"] = s.trials;
  doc["seed"] = s.seed;
  doc["threads"] = s.threads;
  return doc;
}

Evaluation evaluate_estimate(const RadialGrid& estimate, const RadialGrid& truth) {
  const RadialGrid target = observable_skeleton(truth);
  const TreeMatch m = match_trees(estimate, target);
  Evaluation e;
  e.edge_difference = m.edge_difference;
  e.exact = m.edge_difference == 0;
  if (e.exact) {
    double sum = 0.0;
    for (const auto& [est, tru] : m.common_lines)
      sum += std::abs(tru.r() - est.r()) / tru.r() + std::abs(tru.x() - est.x()) / tru.x();
    e.impedance_error = target.lines().empty() ? 0.0 : sum / (2.0 * static_cast<double>(target.lines().size()));
  } else {
    e.impedance_error = std::nan("");
  }
  return e;
}

RadialGrid experiment_grid(const ExperimentSpec& spec, std::size_t trial) {
  const auto seed = derive_seed(derive_seed(spec.seed, trial), 0);
  if (spec.grid.type == "random")
    return gen_random_grid(spec.grid.n, spec.grid.max_degree, spec.grid.law, seed, spec.grid.enforce_hidden_degree3);
  if (spec.grid.type == "file") return load_grid(spec.grid.file);
  return feeder_fixture(spec.grid.type);
}

InjectionModel experiment_injections(const ExperimentSpec& spec, const RadialGrid& grid, std::size_t trial) {
  InjectionModel m = InjectionModel::isotropic(grid, spec.injection.std_dev);
  if (spec.injection.std_range) {
    PhiloxStream rng(derive_seed(derive_seed(spec.seed, trial), 1), 0);
    const auto [lo, hi] = *spec.injection.std_range;
    for (Eigen::Index i = 0; i < m.pp.size(); ++i) {
      const double sp = lo + (hi - lo) * rng.uniform();
      const double sq = lo + (hi - lo) * rng.uniform();
      m.pp(i) = sp * sp;
      m.qq(i) = sq * sq;
    }
  }
  m.correlation = spec.injection.correlation;
  if (spec.injection.kind == InjectionKind::replay) {
    const std::size_t rows = spec.samples.empty() ? 0 : spec.samples.back();
    m.replay = replay_real_loads(spec.injection.replay_file, spec.injection.power_factor, rows, grid.leaf_ids());
    m.kind = InjectionKind::replay;
  } else {
    m.kind = spec.injection.kind;
  }
  return m;
}

namespace {

EstimationResult estimate(const ExperimentSpec& spec, const MomentSet& moments, const RadialGrid& truth,
                          double tolerance, std::size_t trial) {
  if (spec.algorithm == "alg1") {
    Alg1Config cfg;
    cfg.tau1 = tolerance;
    cfg.tau2 = tolerance;
    cfg.permissible = truth.lines();
    const auto decoys = decoy_lines(truth, spec.decoys, spec.grid.law, derive_seed(derive_seed(spec.seed, trial), 3));
    cfg.permissible.insert(cfg.permissible.end(), decoys.begin(), decoys.end());
    cfg.root = truth.root();
    return run_alg1(moments, cfg);
  }
  Alg3Config cfg;
  cfg.rg = spec.rg;
  cfg.rg.epsilon = tolerance;
  cfg.d_min = spec.d_min;
  return run_alg3(moments, cfg);
}

std::vector<TrialRow> run_trial(const ExperimentSpec& spec, std::size_t trial) {
  std::vector<TrialRow> rows;
  auto fail_all = [&](std::size_t from_n_index, const std::string& what, std::size_t edges) {
    const std::size_t count = spec.samples.empty() ? 1 : spec.samples.size();
    for (std::size_t k = from_n_index; k < count; ++k)
      for (double tol : spec.tolerances) {
        TrialRow r;
        r.trial = trial;
        r.n_samples = spec.samples.empty() ? 0 : spec.samples[k];
        r.tolerance = tol;
        r.edge_difference = edges;
        r.impedance_error = std::nan("");
        r.error = what;
        rows.push_back(r);
      }
  };
  auto evaluate_all = [&](const MomentSet& moments, const RadialGrid& truth, std::size_t n) {
    const std::size_t truth_edges = observable_skeleton(truth).lines().size();
    for (double tol : spec.tolerances) {
      TrialRow r;
      r.trial = trial;
      r.n_samples = n;
      r.tolerance = tol;
      try {
        const auto est = estimate(spec, moments, truth, tol, trial);
        const auto ev = evaluate_estimate(est.grid, truth);
        r.exact = ev.exact && !est.diagnostics.partial;
        r.edge_difference = ev.edge_difference;
        r.impedance_error = r.exact ? ev.impedance_error : std::nan("");
        r.partial = est.diagnostics.partial;
      } catch (const std::exception& e) {
        r.edge_difference = truth_edges;
        r.impedance_error = std::nan("");
        r.error = e.what();
      }
      rows.push_back(r);
    }
  };

  RadialGrid truth;
  std::optional<InjectionModel> model;
  try {
    truth = experiment_grid(spec, trial);
    model = experiment_injections(spec, truth, trial);
  } catch (const std::exception& e) {
    fail_all(0, e.what(), 0);
    return rows;
  }

  const auto observed = truth.leaf_ids();
  if (spec.samples.empty()) {
    try {
      evaluate_all(analytic_moments(truth, *model, observed), truth, 0);
    } catch (const std::exception& e) {
      fail_all(0, e.what(), observable_skeleton(truth).lines().size());
    }
    return rows;
  }

  const auto sample_seed = derive_seed(derive_seed(spec.seed, trial), 2);
  MomentAccumulator acc(observed);
  SimulationOptions opts;
  opts.threads = 1;
  constexpr std::size_t chunk = 20000;
  for (std::size_t k = 0; k < spec.samples.size(); ++k) {
    try {
      while (acc.count() < spec.samples[k]) {
        const std::size_t take = std::min(chunk, spec.samples[k] - acc.count());
        acc.add(generate_samples(truth, *model, take, spec.solver, sample_seed, acc.count(), observed, opts));
      }
    } catch (const std::exception& e) {
      fail_all(k, e.what(), observable_skeleton(truth).lines().size());
      return rows;
    }
    evaluate_all(acc.moments(), truth, spec.samples[k]);
  }
  return rows;
}

std::pair<double, double> mean_se(const std::vector<double>& xs) {
  if (xs.empty()) return {std::nan(""), std::nan("")};
  const double n = static_cast<double>(xs.size());
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  if (xs.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / (n - 1.0) / n)};
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c == '\n' ? ' ' : c;
  }
  return out + "\"";
}

std::ofstream open_out(const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw Error("cannot write " + file.string());
  return out;
}

}  // namespace

std::vector<SummaryRow> summarize(const std::vector<TrialRow>& rows) {
  std::map<std::pair<std::size_t, double>, std::vector<const TrialRow*>> groups;
  for (const auto& r : rows) groups[{r.n_samples, r.tolerance}].push_back(&r);
  std::vector<SummaryRow> out;
  for (const auto& [key, group] : groups) {
    SummaryRow s;
    s.n_samples = key.first;
    s.tolerance = key.second;
    s.trials = group.size();
    std::vector<double> acc, diff, imp;
    for (const auto* r : group) {
      if (!r->error.empty()) ++s.failures;
      acc.push_back(r->exact ? 1.0 : 0.0);
      diff.push_back(static_cast<double>(r->edge_difference));
      if (r->exact) imp.push_back(r->impedance_error);
    }
    std::tie(s.accuracy, s.accuracy_se) = mean_se(acc);
    std::tie(s.edge_difference, s.edge_difference_se) = mean_se(diff);
    std::tie(s.impedance_error, s.impedance_error_se) = mean_se(imp);
    out.push_back(s);
  }
  return out;
}

ExperimentResult run_experiment(const ExperimentSpec& spec) {
  spec.check();
  std::vector<std::vector<TrialRow>> per_trial(spec.trials);
  parallel_for(spec.trials, [&](std::size_t t) { per_trial[t] = run_trial(spec, t); }, spec.threads);
  ExperimentResult result;
  for (auto& rows : per_trial) result.trials.insert(result.trials.end(), rows.begin(), rows.end());
  std::sort(result.trials.begin(), result.trials.end(), [](const TrialRow& a, const TrialRow& b) {
    return std::tie(a.n_samples, a.tolerance, a.trial) < std::tie(b.n_samples, b.tolerance, b.trial);
  });
  result.summary = summarize(result.trials);
  return result;
}

void write_experiment(const ExperimentResult& result, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    auto out = open_out(dir / "trials.csv");
    out << "n_samples,tolerance,trial,exact,edge_difference,impedance_error,partial,error\n";
    for (const auto& r : result.trials)
      out << r.n_samples << ',' << fmt(r.tolerance) << ',' << r.trial << ',' << (r.exact ? 1 : 0) << ','
          << r.edge_difference << ',' << fmt(r.impedance_error) << ',' << (r.partial ? 1 : 0) << ','
          << csv_escape(r.error) << '\n';
  }
  {
    auto out = open_out(dir / "summary.csv");
    out << "n_samples,tolerance,trials,failures,accuracy,accuracy_se,edge_difference,edge_difference_se,"
           "impedance_error,impedance_error_se\n";
    for (const auto& s : result.summary)
      out << s.n_samples << ',' << fmt(s.tolerance) << ',' << s.trials << ',' << s.failures << ',' << fmt(s.accuracy)
          << ',' << fmt(s.accuracy_se) << ',' << fmt(s.edge_difference) << ',' << fmt(s.edge_difference_se) << ','
          << fmt(s.impedance_error) << ',' << fmt(s.impedance_error_se) << '\n';
  }
  {
    auto out = open_out(dir / "long.csv");
    out << "n_samples,tolerance,metric,mean,stderr\n";
    for (const auto& s : result.summary) {
      const auto prefix = std::to_string(s.n_samples) + ',' + fmt(s.tolerance) + ',';
      out << prefix << "accuracy," << fmt(s.accuracy) << ',' << fmt(s.accuracy_se) << '\n';
      out << prefix << "edge_difference," << fmt(s.edge_difference) << ',' << fmt(s.edge_difference_se) << '\n';
      out << prefix << "impedance_error," << fmt(s.impedance_error) << ',' << fmt(s.impedance_error_se) << '\n';
    }
  }
}

SweepResult sample_complexity_sweep(const std::vector<std::size_t>& sizes, const ExperimentSpec& templ,
                                    const SweepOptions& options) {
  if (sizes.size() < 2) throw PreconditionError("a sweep needs at least two grid sizes");
  if (templ.grid.type != "random") throw PreconditionError("sweeps need random grids");
  if (!(options.resolution > 1.0)) throw PreconditionError("sweep resolution must exceed 1");
  SweepResult result;
  for (std::size_t size : sizes) {
    ExperimentSpec spec = templ;
    spec.grid.n = size;
    spec.tolerances = {templ.tolerances.front()};
    std::map<std::size_t, double> cache;
    auto accuracy = [&](std::size_t n) {
      auto it = cache.find(n);
      if (it != cache.end()) return it->second;
      spec.samples = {n};
      const double a = run_experiment(spec).summary.front().accuracy;
      cache[n] = a;
      return a;
    };
    SweepPoint point;
    point.size = size;
    if (templ.samples.empty()) {
      // Analytic moments: no sample count to search for.
      spec.samples.clear();
      point.accuracy = run_experiment(spec).summary.front().accuracy;
      if (point.accuracy >= options.target) point.n_star = 0;
      result.points.push_back(point);
      continue;
    }
    std::size_t lo = 0, hi = options.n_start;
    while (accuracy(hi) < options.target) {
      lo = hi;
      if (hi >= options.n_cap) break;
      hi = std::min(options.n_cap, 2 * hi);
    }
    if (accuracy(hi) >= options.target) {
      if (lo == 0) {
        while (hi / 2 >= 2 && accuracy(hi / 2) >= options.target) hi /= 2;
        lo = hi / 2;
      }
      while (lo >= 2 && static_cast<double>(hi) / static_cast<double>(lo) > options.resolution) {
        const auto mid = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(lo) * hi)));
        if (mid <= lo || mid >= hi) break;
        (accuracy(mid) >= options.target ? hi : lo) = mid;
      }
      point.n_star = hi;
      point.accuracy = accuracy(hi);
    } else {
      point.accuracy = accuracy(hi);
    }
    result.points.push_back(point);
  }
  std::vector<double> xs, ys;
  for (const auto& p : result.points)
    if (p.n_star && *p.n_star > 0) {
      xs.push_back(std::log(static_cast<double>(p.size)));
      ys.push_back(std::log(static_cast<double>(*p.n_star)));
    }
  if (xs.size() >= 2) {
    const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
    const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / static_cast<double>(ys.size());
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      sxy += (xs[i] - mx) * (ys[i] - my);
      sxx += (xs[i] - mx) * (xs[i] - mx);
    }
    if (sxx > 0.0) result.slope = sxy / sxx;
  }
  return result;
}

void write_sweep(const SweepResult& result, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto out = open_out(dir / "sweep.csv");
  out << "size,n_star,accuracy\n";
  for (const auto& p : result.points)
    out << p.size << ',' << (p.n_star ? (*p.n_star == 0 ? std::string("exact") : std::to_string(*p.n_star)) : "unreached") << ',' << fmt(p.accuracy) << '\n';
  auto slope = open_out(dir / "sweep_fit.csv");
  slope << "slope\n" << (result.slope ? fmt(*result.slope) : "nan") << '\n';
}

}  // namespace gridlearn
