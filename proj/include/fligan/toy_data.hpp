#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "fligan/random.hpp"
#include "fligan/tabular.hpp"

namespace fligan {

/// Class-conditional Gaussian mixture with a few categorical columns whose
/// value frequencies depend on the class. Used for demos and end-to-end tests.
struct MixtureSpec {
  int n_rows = 6000;
  int n_classes = 3;
  int n_continuous = 6;
  int n_categorical = 2;
  int categories_per_column = 4;
  int components_per_class = 2;
  double separation = 1.0;   // scale of component means
  double noise = 1.0;        // per-dimension standard deviation
  double categorical_signal = 0.5;  // mass on the class-preferred category
};

inline TableSchema mixture_schema(const MixtureSpec& spec) {
  TableSchema s;
  for (int i = 0; i < spec.n_continuous; ++i) {
    s.column_names.push_back("x" + std::to_string(i));
    s.continuous_cols.push_back("x" + std::to_string(i));
  }
  for (int i = 0; i < spec.n_categorical; ++i) {
    s.column_names.push_back("c" + std::to_string(i));
    s.categorical_cols.push_back("c" + std::to_string(i));
  }
  s.column_names.push_back("label");
  s.target_col = "label";
  return s;
}

inline std::string mixture_label(int k) { return "class_" + std::to_string(k); }

/// Balanced classes (row counts differ by at most one); rows in class order.
inline Dataset make_mixture_dataset(const MixtureSpec& spec, std::uint64_t seed) {
  Rng rng(derive_seed(seed, {0x70e}));
  std::normal_distribution<double> n01(0.0, 1.0);
  const auto nc = static_cast<std::size_t>(spec.n_classes);
  const auto comps = static_cast<std::size_t>(spec.components_per_class);
  const auto dim = static_cast<std::size_t>(spec.n_continuous);

  std::vector<std::vector<std::vector<double>>> means(nc, std::vector<std::vector<double>>(comps, std::vector<double>(dim)));
  for (auto& cls : means)
    for (auto& comp : cls)
      for (auto& m : comp) m = spec.separation * n01(rng);

  std::vector<int> preferred(nc * static_cast<std::size_t>(spec.n_categorical));
  for (auto& p : preferred) p = std::uniform_int_distribution<int>(0, spec.categories_per_column - 1)(rng);

  Dataset data{mixture_schema(spec), {}};
  for (int row = 0; row < spec.n_rows; ++row) {
    const auto k = static_cast<std::size_t>(row * spec.n_classes / spec.n_rows);
    const auto comp = std::uniform_int_distribution<std::size_t>(0, comps - 1)(rng);
    Row r;
    for (std::size_t d = 0; d < dim; ++d) r.emplace_back(means[k][comp][d] + spec.noise * n01(rng));
    for (int c = 0; c < spec.n_categorical; ++c) {
      int v = uniform01(rng) < spec.categorical_signal
                  ? preferred[k * static_cast<std::size_t>(spec.n_categorical) + static_cast<std::size_t>(c)]
                  : std::uniform_int_distribution<int>(0, spec.categories_per_column - 1)(rng);
      r.emplace_back("v" + std::to_string(v));
    }
    r.emplace_back(mixture_label(static_cast<int>(k)));
    data.rows.push_back(std::move(r));
  }
  return data;
}

}  // namespace fligan
