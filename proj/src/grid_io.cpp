#include "gridlearn/grid_io.hpp"

#include "gridlearn/errors.hpp"

#include <fstream>

namespace gridlearn {

using nlohmann::json;

namespace {

json edge_to_json(const EdgeEstimate& e) { return {{"a", e.a}, {"b", e.b}, {"r", e.r}, {"x", e.x}}; }

EdgeEstimate edge_from_json(const json& j) {
  return {j.at("a").get<std::string>(), j.at("b").get<std::string>(), j.at("r").get<double>(),
          j.at("x").get<double>()};
}

}  // namespace

json lines_to_json(const std::vector<Line>& lines) {
  json out = json::array();
  for (const auto& l : lines) out.push_back({{"a", l.a()}, {"b", l.b()}, {"r", l.r()}, {"x", l.x()}});
  return out;
}

json grid_to_json(const RadialGrid& grid) {
  json buses = json::array();
  for (const auto& b : grid.buses()) buses.push_back({{"id", b.id}, {"kind", to_string(b.kind)}, {"observed", b.observed}});
  json doc;
  doc["buses"] = std::move(buses);
  doc["lines"] = lines_to_json(grid.lines());
  doc["root"] = grid.root() ? json(*grid.root()) : json(nullptr);
  return doc;
}

std::vector<Line> lines_from_json(const json& doc) {
  try {
    std::vector<Line> lines;
    for (const auto& l : doc.at("lines"))
      lines.emplace_back(l.at("a").get<std::string>(), l.at("b").get<std::string>(), l.at("r").get<double>(),
                         l.at("x").get<double>());
    return lines;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed line list: ") + e.what());
  }
}

RadialGrid grid_from_json(const json& doc) {
  try {
    std::vector<Bus> buses;
    for (const auto& b : doc.at("buses")) {
      Bus bus{b.at("id").get<std::string>(), bus_kind_from_string(b.at("kind").get<std::string>()), false};
      bus.observed = b.contains("observed") ? b.at("observed").get<bool>() : bus.kind == BusKind::leaf;
      buses.push_back(std::move(bus));
    }
    std::optional<BusId> root;
    if (doc.contains("root") && !doc.at("root").is_null()) root = doc.at("root").get<std::string>();
    return RadialGrid(std::move(buses), lines_from_json(doc), std::move(root));
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed grid document: ") + e.what());
  }
}

json read_json(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw FormatError("cannot open " + file.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(file.string() + ": " + e.what());
  }
}

void write_json(const json& doc, const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw FormatError("cannot write " + file.string());
  out << doc.dump(2) << '\n';
}

RadialGrid load_grid(const std::filesystem::path& file) { return grid_from_json(read_json(file)); }

void save_grid(const RadialGrid& grid, const std::filesystem::path& file) { write_json(grid_to_json(grid), file); }

std::vector<Line> load_lines(const std::filesystem::path& file) { return lines_from_json(read_json(file)); }

json result_to_json(const EstimationResult& result) {
  json doc = grid_to_json(result.grid);
  const auto& d = result.diagnostics;
  json diag;
  diag["tolerances_used"] = d.tolerances_used;
  diag["epsilon_escalations"] = d.epsilon_escalations;
  diag["metric_switches"] = d.metric_switches;
  diag["iterations"] = d.iterations;
  diag["collapsed_parents"] = d.collapsed_parents;
  diag["partial"] = d.partial;
  diag["unresolved"] = d.unresolved;
  diag["warnings"] = d.warnings;
  diag["quarantined"] = json::array();
  for (const auto& e : d.quarantined) diag["quarantined"].push_back(edge_to_json(e));
  doc["diagnostics"] = std::move(diag);
  return doc;
}

EstimationResult result_from_json(const json& doc) {
  EstimationResult r{grid_from_json(doc), {}};
  if (!doc.contains("diagnostics")) return r;
  try {
    const auto& j = doc.at("diagnostics");
    auto& d = r.diagnostics;
    d.tolerances_used = j.value("tolerances_used", std::vector<double>{});
    d.epsilon_escalations = j.value("epsilon_escalations", 0);
    d.metric_switches = j.value("metric_switches", 0);
    d.iterations = j.value("iterations", 0);
    d.collapsed_parents = j.value("collapsed_parents", 0);
    d.partial = j.value("partial", false);
    d.unresolved = j.value("unresolved", std::vector<std::string>{});
    d.warnings = j.value("warnings", std::vector<std::string>{});
    if (j.contains("quarantined"))
      for (const auto& e : j.at("quarantined")) d.quarantined.push_back(edge_from_json(e));
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed diagnostics block: ") + e.what());
  }
  return r;
}

}  // namespace gridlearn
