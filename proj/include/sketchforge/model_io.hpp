#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "sketchforge/primitives.hpp"

namespace sketchforge {

// Interchange format between the optimiser and the exporters:
// {canvas: {w, h}, background: [..],
//  primitives: [{kind, points: [[x, y], ...], sigma, colour: [..], learn_geo, learn_col}]}
nlohmann::json model_to_json(const SketchModel& model);
SketchModel model_from_json(const nlohmann::json& j);

/// Writes the model with a fixed key order and round-trip double precision.
std::string dump_model(const SketchModel& model);
void save_model(const SketchModel& model, const std::filesystem::path& path);
SketchModel load_model(const std::filesystem::path& path);

/// Whole-file helpers shared by the CLI and tests.
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace sketchforge
