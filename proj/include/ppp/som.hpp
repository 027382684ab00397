#pragma once

#include "ppp/core.hpp"

#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace ppp {

/// Rectangular self-organizing map schedule and shape.
struct SomConfig {
  std::size_t grid_rows = 0;  // 0 = pick from data size (see default_grid)
  std::size_t grid_cols = 0;
  std::size_t epochs = 10;
  double alpha_start = 0.5;
  double alpha_end = 0.01;
  double sigma_start = 0.0;  // 0 = half the larger grid side, at least 1
  double sigma_end = 0.2;
  // Rows whose BMU distance is above this quantile get no hit. 1.0 disables the cut.
  double hit_quantile = 1.0;
  RandomSeed seed{};

  std::size_t units() const { return grid_rows * grid_cols; }

  void validate() const {
    if (units() < 2) throw ConfigError("SOM needs at least 2 units (K >= 2)");
    if (epochs < 1) throw ConfigError("SOM epochs must be >= 1");
    if (!(alpha_end > 0.0) || !(alpha_start >= alpha_end) || alpha_start > 1.0)
      throw ConfigError("SOM learning rate must satisfy 1 >= alpha_start >= alpha_end > 0");
    if (!(sigma_end > 0.0) || !(sigma_start >= sigma_end))
      throw ConfigError("SOM radius must satisfy sigma_start >= sigma_end > 0");
    if (!(hit_quantile > 0.0) || hit_quantile > 1.0) throw ConfigError("hit_quantile must be in (0, 1]");
  }
};

/// Default grid: 8x8 for N >= 1000, otherwise about sqrt(N) units laid out near-square.
inline std::pair<std::size_t, std::size_t> default_grid(std::size_t n_instances) {
  if (n_instances >= 1000) return {8, 8};
  const auto target = std::max<std::size_t>(2, static_cast<std::size_t>(std::ceil(std::sqrt(double(n_instances)))));
  auto rows = static_cast<std::size_t>(std::ceil(std::sqrt(double(target))));
  auto cols = (target + rows - 1) / rows;
  while (rows * cols > std::max<std::size_t>(2, n_instances) && cols > 1) --cols;
  if (rows * cols < 2) cols = 2;
  return {rows, cols};
}

/// Fills grid shape and sigma_start when left at zero.
inline SomConfig resolve_som_config(SomConfig c, std::size_t n_instances) {
  if (c.grid_rows == 0 || c.grid_cols == 0) std::tie(c.grid_rows, c.grid_cols) = default_grid(n_instances);
  if (c.sigma_start <= 0.0)
    c.sigma_start = std::max({1.0, double(std::max(c.grid_rows, c.grid_cols)) / 2.0, c.sigma_end});
  return c;
}

struct GridCoord {
  int row = 0;
  int col = 0;
};

struct SomModel {
  Matrix codebook;  // K x d, one unit per row
  std::vector<GridCoord> grid;
  std::vector<std::size_t> hit_counts;
  SomConfig config;
  double final_qe = 0.0;

  std::size_t units() const { return static_cast<std::size_t>(codebook.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(codebook.cols()); }
};

/// Nearest instance per unit plus the unit priors.
struct CodebookMatchSet {
  std::vector<std::size_t> matched_instance_ids;  // row index into the data the SOM was matched against
  Matrix matched_vectors;                         // K x d
  Vector priors;                                  // sums to 1

  std::size_t size() const { return matched_instance_ids.size(); }
};

struct Bmu {
  std::size_t unit = 0;
  double squared_distance = 0.0;
};

namespace detail {

inline double grid_sqdist(const GridCoord& a, const GridCoord& b) {
  const double dr = a.row - b.row, dc = a.col - b.col;
  return dr * dr + dc * dc;
}

inline double lerp_schedule(double start, double end, std::size_t t, std::size_t total) {
  if (total <= 1) return start;
  return start + (end - start) * double(t) / double(total - 1);
}

template <typename Row>
Bmu find_bmu_impl(const Matrix& codebook, const Row& x) {
  Bmu best{0, std::numeric_limits<double>::infinity()};
  for (Eigen::Index k = 0; k < codebook.rows(); ++k) {
    const double d = (codebook.row(k) - x).squaredNorm();
    if (d < best.squared_distance) best = {static_cast<std::size_t>(k), d};
  }
  return best;
}

}  // namespace detail

/// Codebook sampled from data rows without replacement; grid laid out row-major.
inline SomModel init_som(const SomConfig& config, const DesignMatrix& data) {
  config.validate();
  const std::size_t k = config.units();
  const std::size_t n = data.n_instances();
  if (k > n) log::warn("SOM has " + std::to_string(k) + " units for " + std::to_string(n) + " rows");

  SomModel som;
  som.config = config;
  som.codebook.resize(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(data.n_features()));
  som.grid.resize(k);
  som.hit_counts.assign(k, 0);

  Rng rng = make_rng(derive_seed(config.seed, "som-init"));
  std::vector<std::size_t> pool(n);
  for (std::size_t i = 0; i < n; ++i) pool[i] = i;
  // Partial Fisher-Yates; once the pool is exhausted, extra units reuse rows.
  for (std::size_t u = 0; u < k; ++u) {
    std::size_t row;
    if (u < n) {
      const std::size_t j = u + uniform_index(rng, n - u);
      std::swap(pool[u], pool[j]);
      row = pool[u];
    } else {
      row = uniform_index(rng, n);
    }
    som.codebook.row(static_cast<Eigen::Index>(u)) = data.values().row(static_cast<Eigen::Index>(row));
    som.grid[u] = {static_cast<int>(u / config.grid_cols), static_cast<int>(u % config.grid_cols)};
  }
  return som;
}

/// Winner by squared Euclidean distance; ties go to the lowest unit index.
inline Bmu find_bmu(const SomModel& som, const Vector& x) {
  if (static_cast<std::size_t>(x.size()) != som.dim())
    throw DimensionError("BMU query of dimension " + std::to_string(x.size()) + " vs codebook " +
                         std::to_string(som.dim()));
  return detail::find_bmu_impl(som.codebook, x.transpose());
}

inline double alpha_at(const SomConfig& c, std::size_t t, std::size_t total) {
  return detail::lerp_schedule(c.alpha_start, c.alpha_end, t, total);
}

inline double sigma_at(const SomConfig& c, std::size_t t, std::size_t total) {
  return detail::lerp_schedule(c.sigma_start, c.sigma_end, t, total);
}

/// Gaussian kernel h(c, i) = alpha(t) exp(-|r_c - r_i|^2 / (2 sigma(t)^2)).
inline double neighborhood_weight(const SomModel& som, std::size_t c, std::size_t i, std::size_t t,
                                  std::size_t total_steps) {
  const double a = alpha_at(som.config, t, total_steps);
  const double s = sigma_at(som.config, t, total_steps);
  return a * std::exp(-detail::grid_sqdist(som.grid[c], som.grid[i]) / (2.0 * s * s));
}

inline double quantization_error(const SomModel& som, const DesignMatrix& data) {
  if (data.n_features() != som.dim()) throw DimensionError("quantization_error: dimension mismatch");
  double sum = 0.0;
  for (Eigen::Index i = 0; i < data.values().rows(); ++i)
    sum += detail::find_bmu_impl(som.codebook, data.values().row(i)).squared_distance;
  return sum / double(data.n_instances());
}

/// Counts BMU hits per unit. Rows past the hit_quantile distance cut are left unassigned.
inline void assign_hits(SomModel& som, const DesignMatrix& data) {
  const std::size_t n = data.n_instances();
  std::vector<Bmu> bmus(n);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    bmus[i] = detail::find_bmu_impl(som.codebook, data.values().row(static_cast<Eigen::Index>(i)));
    sum += bmus[i].squared_distance;
  }
  double cutoff = std::numeric_limits<double>::infinity();
  if (som.config.hit_quantile < 1.0) {
    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i) d[i] = bmus[i].squared_distance;
    std::sort(d.begin(), d.end());
    cutoff = d[static_cast<std::size_t>(std::floor(som.config.hit_quantile * double(n - 1)))];
  }
  som.hit_counts.assign(som.units(), 0);
  for (const auto& b : bmus)
    if (b.squared_distance <= cutoff) ++som.hit_counts[b.unit];
  som.final_qe = sum / double(n);
}

/// Sequential online training: epochs x N seeded draws, kernel update of every unit, then a hit pass.
inline SomModel train_som(SomModel som, const DesignMatrix& data) {
  som.config.validate();
  if (data.n_features() != som.dim()) throw DimensionError("train_som: dimension mismatch");
  const std::size_t n = data.n_instances();
  const std::size_t k = som.units();
  const std::size_t total = som.config.epochs * n;
  Rng rng = make_rng(derive_seed(som.config.seed, "som-train"));
  const Matrix& x = data.values();

  std::vector<double> lut(k * k);
  for (std::size_t c = 0; c < k; ++c)
    for (std::size_t i = 0; i < k; ++i) lut[c * k + i] = detail::grid_sqdist(som.grid[c], som.grid[i]);

  for (std::size_t t = 0; t < total; ++t) {
    const auto row = static_cast<Eigen::Index>(uniform_index(rng, n));
    const std::size_t c = detail::find_bmu_impl(som.codebook, x.row(row)).unit;
    const double a = alpha_at(som.config, t, total);
    const double s = sigma_at(som.config, t, total);
    const double inv = 1.0 / (2.0 * s * s);
    for (std::size_t i = 0; i < k; ++i) {
      const double h = a * std::exp(-lut[c * k + i] * inv);
      if (h < 1e-300) continue;
      auto unit = som.codebook.row(static_cast<Eigen::Index>(i));
      unit += h * (x.row(row) - unit);
    }
  }
  assign_hits(som, data);
  return som;
}

/// Per-unit kernel factor for the prior: the kernel at the unit's own grid position
/// under the final schedule, h(k, k) = alpha_end.
inline Vector prior_kernel_factors(const SomModel& som) {
  return Vector::Constant(static_cast<Eigen::Index>(som.units()), som.config.alpha_end);
}

/// Prior of each unit's matched vector: hits times kernel factor, normalized.
inline Vector codebook_priors(const SomModel& som) {
  const std::size_t k = som.units();
  const Vector factors = prior_kernel_factors(som);
  Vector p(static_cast<Eigen::Index>(k));
  for (std::size_t u = 0; u < k; ++u) p(static_cast<Eigen::Index>(u)) = double(som.hit_counts[u]) * factors(u);
  const double total = p.sum();
  if (!(total > 0.0)) {
    log::warn("SOM has no hits; using a uniform prior");
    return Vector::Constant(static_cast<Eigen::Index>(k), 1.0 / double(k));
  }
  return p / total;
}

/// For each unit, the nearest data row (ties to the lowest row index).
inline CodebookMatchSet codebook_match(const SomModel& som, const DesignMatrix& data) {
  if (data.n_features() != som.dim()) throw DimensionError("codebook_match: dimension mismatch");
  const std::size_t k = som.units();
  CodebookMatchSet m;
  m.matched_instance_ids.resize(k);
  m.matched_vectors.resize(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(som.dim()));
  for (std::size_t u = 0; u < k; ++u) {
    const auto unit = som.codebook.row(static_cast<Eigen::Index>(u));
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < data.values().rows(); ++i) {
      const double d = (data.values().row(i) - unit).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = static_cast<std::size_t>(i);
      }
    }
    m.matched_instance_ids[u] = best;
    m.matched_vectors.row(static_cast<Eigen::Index>(u)) = data.values().row(static_cast<Eigen::Index>(best));
  }
  m.priors = codebook_priors(som);
  return m;
}

/// CSV: unit_row, unit_col, hit_count, prior, then the codebook entries.
inline void write_codebook_csv(std::ostream& os, const SomModel& som) {
  const Vector priors = codebook_priors(som);
  os << "unit_row,unit_col,hit_count,prior";
  for (std::size_t j = 0; j < som.dim(); ++j) os << ",v" << j;
  os << '\n' << std::setprecision(17);
  for (std::size_t u = 0; u < som.units(); ++u) {
    os << som.grid[u].row << ',' << som.grid[u].col << ',' << som.hit_counts[u] << ','
       << priors(static_cast<Eigen::Index>(u));
    for (std::size_t j = 0; j < som.dim(); ++j)
      os << ',' << som.codebook(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(j));
    os << '\n';
  }
}

}  // namespace ppp
