#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <algorithm>
#include <random>
#include <span>
#include <string>
#include <unistd.h>
#include <vector>

#include "proxtree/table.hpp"

namespace testing {

// Fresh scratch directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("proxtree-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::vector<std::string> make_ids(std::size_t n) {
  std::vector<std::string> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = "r" + std::to_string(i);
  return ids;
}

// Table with p columns named x0..x{p-1}. Even columns are continuous
// uniforms, odd columns small integers (to produce ties).
inline proxtree::FeatureTable random_table(std::size_t n, std::size_t p, std::mt19937_64& rng,
                                           bool with_outcome = true) {
  proxtree::FeatureTable t(make_ids(n));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> d(0, 4);
  for (std::size_t j = 0; j < p; ++j) {
    std::vector<double> col(n);
    for (auto& v : col) v = (j % 2 == 0) ? u(rng) : static_cast<double>(d(rng));
    t.add_column("x" + std::to_string(j), std::move(col));
  }
  if (with_outcome) {
    std::normal_distribution<double> e(0.0, 1.0);
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = 2.0 * t.column(0)[i] + e(rng);
    t.set_outcome(std::move(y));
  }
  return t;
}

// y = 1 + 2 x0 - x1 + 0.5 x2 + N(0, sd^2); columns x0..x{p-1} ~ U(0, 1).
inline proxtree::FeatureTable linear_table(std::size_t n, std::size_t p, std::mt19937_64& rng, double sd = 0.5) {
  proxtree::FeatureTable t(make_ids(n));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> e(0.0, sd);
  for (std::size_t j = 0; j < p; ++j) {
    std::vector<double> col(n);
    for (auto& v : col) v = u(rng);
    t.add_column("x" + std::to_string(j), std::move(col));
  }
  const double w[3] = {2.0, -1.0, 0.5};
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = 1.0 + e(rng);
    for (std::size_t j = 0; j < std::min<std::size_t>(p, 3); ++j) y[i] += w[j] * t.column(j)[i];
  }
  t.set_outcome(std::move(y));
  return t;
}

inline double mse(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

inline std::vector<std::vector<double>> columns_of(const proxtree::FeatureTable& t) {
  std::vector<std::vector<double>> x;
  for (std::size_t j = 0; j < t.cols(); ++j) x.emplace_back(t.column(j).begin(), t.column(j).end());
  return x;
}

}  // namespace testing
