#pragma once

#include "gridlearn/grid.hpp"
#include "gridlearn/result.hpp"

#include <json.hpp>

#include <filesystem>
#include <vector>

namespace gridlearn {

// Grid documents: {"buses": [{"id", "kind", "observed"?}], "lines": [{"a", "b", "r", "x"}], "root": id|null}.
// Doubles are written with round-trip precision.
nlohmann::json grid_to_json(const RadialGrid& grid);
RadialGrid grid_from_json(const nlohmann::json& doc);

RadialGrid load_grid(const std::filesystem::path& file);
void save_grid(const RadialGrid& grid, const std::filesystem::path& file);

/// Permissible-edge documents use the grid line schema with no tree constraint; only "lines" is read.
std::vector<Line> lines_from_json(const nlohmann::json& doc);
std::vector<Line> load_lines(const std::filesystem::path& file);
nlohmann::json lines_to_json(const std::vector<Line>& lines);

/// Grid schema plus a "diagnostics" block.
nlohmann::json result_to_json(const EstimationResult& result);
EstimationResult result_from_json(const nlohmann::json& doc);

nlohmann::json read_json(const std::filesystem::path& file);
void write_json(const nlohmann::json& doc, const std::filesystem::path& file);

}  // namespace gridlearn
