#include "cbo/cli/emit.hpp"

#include <cstdio>
#include <fstream>
#include <system_error>

#include <unistd.h>

#include "cbo/errors.hpp"

namespace cbo::cli {

std::string format_double(double v) {
  char buf[32];
  const int n = std::snprintf(buf, sizeof buf, "%.17g", v);
  return std::string(buf, static_cast<std::size_t>(n));
}

void write_atomic(const std::filesystem::path& path, std::string_view content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot create " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) {
      std::error_code ignored;
      std::filesystem::remove(tmp, ignored);
      throw IoError("failed writing " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::error_code ignored;
    std::filesystem::remove(tmp, ignored);
    throw IoError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
  }
}

void ensure_writable_dir(const std::filesystem::path& dir) {
  if (dir.empty()) throw IoError("no output directory given (use --out <dir>)");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    throw IoError("cannot create output directory " + dir.string() +
                  (ec ? ": " + ec.message() : std::string()));
  }
  const std::filesystem::path probe = dir / (".cbo_probe." + std::to_string(::getpid()));
  {
    std::ofstream out(probe, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("output directory " + dir.string() + " is not writable");
  }
  std::filesystem::remove(probe, ec);
}

std::string metrics_csv(const cid::RunMetrics& metrics, bool timing) {
  std::string out = "step,objective,grad_norm,tracking_error,inner_grad_norm,wall_ms\n";
  for (const cid::StepRecord& r : metrics.records) {
    out += std::to_string(r.step);
    for (double v : {r.objective, r.grad_norm, r.tracking_error, r.inner_grad_norm,
                     timing ? r.wall_ms : 0.0}) {
      out += ',';
      out += format_double(v);
    }
    out += '\n';
  }
  return out;
}

nlohmann::json metrics_json(const cid::RunMetrics& metrics, bool timing) {
  nlohmann::json rows = nlohmann::json::array();
  for (const cid::StepRecord& r : metrics.records) {
    rows.push_back({{"step", r.step},
                    {"objective", r.objective},
                    {"grad_norm", r.grad_norm},
                    {"tracking_error", r.tracking_error},
                    {"inner_grad_norm", r.inner_grad_norm},
                    {"min_margin", r.min_margin},
                    {"r", r.r},
                    {"wall_ms", timing ? r.wall_ms : 0.0}});
  }
  return rows;
}

void write_json(const std::filesystem::path& path, const nlohmann::json& doc) {
  write_atomic(path, doc.dump(2) + "\n");
}

}  // namespace cbo::cli
