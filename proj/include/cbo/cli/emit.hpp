#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

#include "cbo/cid.hpp"

namespace cbo::cli {

// 17 significant digits, enough to round-trip any double.
std::string format_double(double v);

// Writes to a sibling temporary file and renames it over `path`, so readers
// never observe a partial file. Throws IoError.
void write_atomic(const std::filesystem::path& path, std::string_view content);

// Creates the directory if needed and checks that a file can be created in
// it. Throws IoError.
void ensure_writable_dir(const std::filesystem::path& dir);

// Header step,objective,grad_norm,tracking_error,inner_grad_norm,wall_ms.
// wall_ms is written as 0 unless timing is on.
std::string metrics_csv(const cid::RunMetrics& metrics, bool timing);
nlohmann::json metrics_json(const cid::RunMetrics& metrics, bool timing);

void write_json(const std::filesystem::path& path, const nlohmann::json& doc);

}  // namespace cbo::cli
