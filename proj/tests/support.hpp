#pragma once

#include "ppp/core.hpp"


namespace ppp::test {

inline Matrix random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = n(rng);
  return m;
}

inline DesignMatrix random_design(Rng& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
  return DesignMatrix(random_matrix(rng, rows, cols, scale));
}

inline IndexSet random_subset(Rng& rng, std::size_t universe) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < universe; ++i)
    if (uniform_index(rng, 2) == 1) out.push_back(i);
  if (out.empty()) out.push_back(uniform_index(rng, universe));
  return IndexSet(std::move(out), universe);
}

}  // namespace ppp::test

#include "ppp/gmm.hpp"

namespace ppp::test {

/// Random K-component mixture in d dimensions with well-conditioned covariances.
inline GaussianMixture random_mixture(Rng& rng, std::size_t k, Eigen::Index d,
                                      CovarianceMode mode = CovarianceMode::full, double reg = 1e-6) {
  std::uniform_real_distribution<double> u(0.2, 1.0);
  GaussianMixture g;
  g.covariance_mode = mode;
  g.reg_epsilon = reg;
  double total = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    GaussianComponent comp;
    comp.weight = u(rng);
    total += comp.weight;
    comp.mean = random_matrix(rng, d, 1, 2.0).col(0);
    if (mode == CovarianceMode::full) {
      Matrix a = random_matrix(rng, d, d, 0.5);
      comp.covariance = a * a.transpose() + 0.1 * Matrix::Identity(d, d);
    } else {
      comp.covariance = Matrix::Zero(d, d);
      for (Eigen::Index j = 0; j < d; ++j) comp.covariance(j, j) = u(rng);
    }
    g.components.push_back(std::move(comp));
  }
  for (auto& c : g.components) c.weight /= total;
  return g;
}

/// Mixture initialized on k random data rows with unit-ish covariances.
inline GaussianMixture mixture_on_rows(Rng& rng, const DesignMatrix& data, std::size_t k,
                                       CovarianceMode mode = CovarianceMode::full) {
  CodebookMatchSet m;
  m.matched_vectors.resize(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(data.n_features()));
  m.priors = Vector::Constant(static_cast<Eigen::Index>(k), 1.0 / double(k));
  for (std::size_t c = 0; c < k; ++c) {
    const auto r = uniform_index(rng, data.n_instances());
    m.matched_instance_ids.push_back(r);
    m.matched_vectors.row(static_cast<Eigen::Index>(c)) = data.values().row(static_cast<Eigen::Index>(r));
  }
  return init_gmm_from_codebook(m, data, mode, default_reg_epsilon(data));
}

}  // namespace ppp::test
