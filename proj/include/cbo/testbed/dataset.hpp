#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "cbo/linalg.hpp"

namespace cbo::testbed {

struct SyntheticDataset {
  Matrix features;  // N x p, every entry in [0, 1]
  std::vector<std::size_t> labels;
  std::size_t num_classes = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return features.cols(); }
  std::span<const double> x(std::size_t i) const { return features.row(i); }
  std::vector<std::size_t> class_counts() const;
  // min / max over the class counts.
  double imbalance_ratio() const;
};

struct BlobOptions {
  std::size_t N = 1000;
  std::size_t C = 5;
  std::size_t p = 2;
  double imbalance_ratio = 1.0;
  // Standard deviation of the cluster centers relative to unit noise.
  double separation = 3.0;
  // Draws with the same seed and a different stream share the cluster
  // centers but not the samples; use it for held-out splits.
  std::uint64_t stream = 0;
};

// Gaussian clusters squashed into [0.1, 0.9]^p. Class c gets a count
// proportional to imbalance_ratio^(c / (C - 1)), so class 0 is the largest.
// Throws ConfigError when N < C or the ratio is outside (0, 1].
SyntheticDataset make_gaussian_blobs(std::uint64_t seed, const BlobOptions& options);

// Largest-remainder split of N into C geometric counts.
std::vector<std::size_t> geometric_class_counts(std::size_t N, std::size_t C, double ratio);

// Returns a copy with every feature clamped into [margin, 1 - margin].
SyntheticDataset clip_features(const SyntheticDataset& data, double margin);

// CSV with header label,f0,...,f{p-1}; features at 17 significant digits.
void write_dataset_csv(const SyntheticDataset& data, const std::filesystem::path& path);
SyntheticDataset read_dataset_csv(const std::filesystem::path& path);

}  // namespace cbo::testbed
