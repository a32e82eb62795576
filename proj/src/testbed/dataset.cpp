#include "cbo/testbed/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>
#include <string>

#include "cbo/errors.hpp"

namespace cbo::testbed {

std::vector<std::size_t> SyntheticDataset::class_counts() const {
  std::vector<std::size_t> counts(num_classes, 0);
  for (std::size_t y : labels) ++counts[y];
  return counts;
}

double SyntheticDataset::imbalance_ratio() const {
  const auto counts = class_counts();
  if (counts.empty()) return 0.0;
  const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
  return *hi == 0 ? 0.0 : static_cast<double>(*lo) / static_cast<double>(*hi);
}

std::vector<std::size_t> geometric_class_counts(std::size_t N, std::size_t C, double ratio) {
  if (C == 0) throw ConfigError("dataset needs at least one class");
  if (N < C) {
    throw ConfigError("dataset size N = " + std::to_string(N) + " is smaller than C = " +
                      std::to_string(C));
  }
  if (!(ratio > 0.0 && ratio <= 1.0)) {
    throw ConfigError("imbalance_ratio must lie in (0, 1]");
  }
  std::vector<double> share(C, 1.0);
  if (C > 1) {
    for (std::size_t c = 0; c < C; ++c) {
      share[c] = std::pow(ratio, static_cast<double>(c) / static_cast<double>(C - 1));
    }
  }
  double total = 0.0;
  for (double s : share) total += s;
  std::vector<std::size_t> counts(C);
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < C; ++c) {
    const double exact = static_cast<double>(N) * share[c] / total;
    counts[c] = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(exact)));
    assigned += counts[c];
    remainders.emplace_back(exact - std::floor(exact), c);
  }
  // Stable order: larger remainder first, then lower class index.
  std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  for (std::size_t k = 0; assigned < N; k = (k + 1) % C) {
    ++counts[remainders[k].second];
    ++assigned;
  }
  // Tiny classes were lifted to one sample; take those back from the largest.
  while (assigned > N) {
    --*std::max_element(counts.begin(), counts.end());
    --assigned;
  }
  return counts;
}

SyntheticDataset make_gaussian_blobs(std::uint64_t seed, const BlobOptions& options) {
  if (options.p == 0) throw ConfigError("dataset feature dimension must be >= 1");
  if (!(options.separation > 0.0)) throw ConfigError("blob separation must be > 0");
  const std::vector<std::size_t> counts =
      geometric_class_counts(options.N, options.C, options.imbalance_ratio);

  std::mt19937_64 center_rng(seed);
  std::normal_distribution<double> center_draw(0.0, options.separation);
  Matrix centers(options.C, options.p);
  for (double& v : centers.data()) v = center_draw(center_rng);

  std::seed_seq sample_seed{static_cast<std::uint32_t>(seed),
                            static_cast<std::uint32_t>(seed >> 32),
                            static_cast<std::uint32_t>(options.stream), 0x5eedu};
  std::mt19937_64 rng(sample_seed);
  std::normal_distribution<double> noise(0.0, 1.0);

  SyntheticDataset data;
  data.num_classes = options.C;
  data.features = Matrix(options.N, options.p);
  data.labels.reserve(options.N);
  std::size_t row = 0;
  for (std::size_t c = 0; c < options.C; ++c) {
    for (std::size_t n = 0; n < counts[c]; ++n, ++row) {
      for (std::size_t k = 0; k < options.p; ++k) {
        const double z = centers(c, k) + noise(rng);
        data.features(row, k) = 0.1 + 0.8 / (1.0 + std::exp(-0.5 * z));
      }
      data.labels.push_back(c);
    }
  }

  // Fisher-Yates with rejection-sampled indices so the order does not depend
  // on the standard library's shuffle.
  for (std::size_t i = options.N; i > 1; --i) {
    const std::uint64_t bound = i;
    const std::uint64_t threshold = (0 - bound) % bound;
    std::uint64_t r = rng();
    while (r < threshold) r = rng();
    const std::size_t j = static_cast<std::size_t>(r % bound);
    if (j != i - 1) {
      std::swap(data.labels[j], data.labels[i - 1]);
      std::swap_ranges(data.features.row(j).begin(), data.features.row(j).end(),
                       data.features.row(i - 1).begin());
    }
  }
  return data;
}

SyntheticDataset clip_features(const SyntheticDataset& data, double margin) {
  if (!(margin >= 0.0 && margin < 0.5)) throw ConfigError("clip margin must lie in [0, 0.5)");
  SyntheticDataset out = data;
  for (double& v : out.features.data()) v = std::clamp(v, margin, 1.0 - margin);
  return out;
}

void write_dataset_csv(const SyntheticDataset& data, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "label";
  for (std::size_t k = 0; k < data.dim(); ++k) out << ",f" << k;
  out << '\n' << std::setprecision(17);
  for (std::size_t i = 0; i < data.size(); ++i) {
    out << data.labels[i];
    for (double v : data.x(i)) out << ',' << v;
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

SyntheticDataset read_dataset_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("label", 0) != 0) {
    throw IoError(path.string() + ": missing header 'label,f0,...'");
  }
  const std::size_t p = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
  if (p == 0) throw IoError(path.string() + ": header has no feature columns");

  SyntheticDataset data;
  std::vector<double> values;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream fields(line);
    std::string cell;
    std::size_t col = 0;
    while (std::getline(fields, cell, ',')) {
      const char* first = cell.data();
      const char* last = cell.data() + cell.size();
      if (col == 0) {
        std::size_t label = 0;
        const auto res = std::from_chars(first, last, label);
        if (res.ec != std::errc() || res.ptr != last) {
          throw IoError(path.string() + ":" + std::to_string(line_no) + ": bad label '" +
                        cell + "'");
        }
        data.labels.push_back(label);
        data.num_classes = std::max(data.num_classes, label + 1);
      } else {
        double v = 0.0;
        const auto res = std::from_chars(first, last, v);
        if (res.ec != std::errc() || res.ptr != last || !(v >= 0.0 && v <= 1.0)) {
          throw IoError(path.string() + ":" + std::to_string(line_no) +
                        ": feature must be a number in [0, 1], got '" + cell + "'");
        }
        values.push_back(v);
      }
      ++col;
    }
    if (col != p + 1) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                    std::to_string(p + 1) + " columns, found " + std::to_string(col));
    }
  }
  data.features = Matrix(data.labels.size(), p);
  std::copy(values.begin(), values.end(), data.features.data().begin());
  return data;
}

}  // namespace cbo::testbed
