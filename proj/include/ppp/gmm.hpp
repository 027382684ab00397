#pragma once

#include "ppp/core.hpp"
#include "ppp/som.hpp"

#include <boost/math/special_functions/gamma.hpp>

namespace ppp {

enum class CovarianceMode { full, diagonal };

inline const char* to_string(CovarianceMode m) { return m == CovarianceMode::full ? "full" : "diag"; }

struct GaussianComponent {
  double weight = 0.0;
  Vector mean;
  Matrix covariance;  // symmetric; off-diagonal entries are zero in diagonal mode
};

struct GaussianMixture {
  std::vector<GaussianComponent> components;
  CovarianceMode covariance_mode = CovarianceMode::full;
  double reg_epsilon = 1e-6;

  std::size_t size() const { return components.size(); }
  std::size_t dim() const { return components.empty() ? 0 : static_cast<std::size_t>(components[0].mean.size()); }

  Vector weights() const {
    Vector w(static_cast<Eigen::Index>(components.size()));
    for (std::size_t k = 0; k < components.size(); ++k) w(static_cast<Eigen::Index>(k)) = components[k].weight;
    return w;
  }
};

struct MixtureScores {
  Vector log_density;
  Vector density;     // exp(log_density); may underflow to 0 in high dimension
  Vector normalized;  // density / max density, computed in log space
  Vector typicality;  // chi-square tail of the squared Mahalanobis distance to the row's MAP component
};

/// Default covariance mode for a node of the given dimension.
inline CovarianceMode default_covariance_mode(std::size_t dim) {
  return dim > 50 ? CovarianceMode::diagonal : CovarianceMode::full;
}

/// 1e-6 times the mean column variance, floored so constant data stays non-singular.
inline double default_reg_epsilon(const DesignMatrix& data) {
  return std::max(1e-6 * column_variances(data.values()).mean(), 1e-10);
}

namespace detail {

inline constexpr double kLog2Pi = 1.8378770664093454836;

/// Precomputed normalizer and whitening factor of one component.
struct ComponentFactor {
  bool diagonal = false;
  Matrix chol;  // lower Cholesky factor (full mode)
  Vector inv_var;
  double log_norm = 0.0;  // -(d/2) ln 2pi - 1/2 ln|Sigma|
};

inline ComponentFactor factorize(const GaussianComponent& c, CovarianceMode mode) {
  const auto d = c.mean.size();
  if (c.covariance.rows() != d || c.covariance.cols() != d) throw DimensionError("covariance shape mismatch");
  ComponentFactor f;
  double log_det = 0.0;
  if (mode == CovarianceMode::diagonal) {
    f.diagonal = true;
    f.inv_var.resize(d);
    for (Eigen::Index j = 0; j < d; ++j) {
      const double v = c.covariance(j, j);
      if (!(v > 0.0) || !std::isfinite(v)) throw SingularCovariance("non-positive variance in diagonal covariance");
      f.inv_var(j) = 1.0 / v;
      log_det += std::log(v);
    }
  } else {
    Eigen::LLT<Matrix> llt(c.covariance);
    if (llt.info() != Eigen::Success) throw SingularCovariance("covariance is not positive definite");
    f.chol = llt.matrixL();
    for (Eigen::Index j = 0; j < d; ++j) {
      const double l = f.chol(j, j);
      if (!(l > 0.0) || !std::isfinite(l)) throw SingularCovariance("covariance is not positive definite");
      log_det += 2.0 * std::log(l);
    }
  }
  f.log_norm = -0.5 * double(d) * kLog2Pi - 0.5 * log_det;
  return f;
}

inline double mahalanobis_sq(const ComponentFactor& f, const Vector& diff) {
  if (f.diagonal) return (diff.array().square() * f.inv_var.array()).sum();
  return f.chol.triangularView<Eigen::Lower>().solve(diff).squaredNorm();
}

/// Squared Mahalanobis distance of every row of x to one component.
inline Vector component_mahalanobis_rows(const GaussianComponent& c, const ComponentFactor& f, const Matrix& x) {
  Matrix diff = x.rowwise() - c.mean.transpose();
  if (f.diagonal) return (diff.array().square().rowwise() * f.inv_var.transpose().array()).rowwise().sum();
  Matrix t = diff.transpose();
  f.chol.triangularView<Eigen::Lower>().solveInPlace(t);
  return t.colwise().squaredNorm().transpose();
}

/// N x 1 log-densities of every row of x under one component.
inline Vector component_logpdf_rows(const GaussianComponent& c, const ComponentFactor& f, const Matrix& x) {
  return (f.log_norm - 0.5 * component_mahalanobis_rows(c, f, x).array()).matrix();
}

inline double log_sum_exp(const Eigen::Ref<const Vector>& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

/// N x K matrix of ln pi_k + ln N(x_i | k).
inline Matrix weighted_log_densities(const GaussianMixture& g, const Matrix& x) {
  if (static_cast<std::size_t>(x.cols()) != g.dim()) throw DimensionError("mixture/data dimension mismatch");
  Matrix out(x.rows(), static_cast<Eigen::Index>(g.size()));
  for (std::size_t k = 0; k < g.size(); ++k) {
    const auto& c = g.components[k];
    const auto f = factorize(c, g.covariance_mode);
    const double lw = c.weight > 0.0 ? std::log(c.weight) : -std::numeric_limits<double>::infinity();
    out.col(static_cast<Eigen::Index>(k)) = (component_logpdf_rows(c, f, x).array() + lw).matrix();
  }
  return out;
}

/// Eigenvalue floor: the constrained ML covariance over {Sigma >= eps I}.
inline Matrix floor_eigenvalues(const Matrix& s, double eps) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(s);
  Vector lambda = es.eigenvalues().cwiseMax(eps);
  Matrix out = es.eigenvectors() * lambda.asDiagonal() * es.eigenvectors().transpose();
  return 0.5 * (out + out.transpose());
}

}  // namespace detail

/// Full log-density, -(f/2) ln 2pi - 1/2 ln|Sigma| - 1/2 (x-mu)' Sigma^-1 (x-mu).
inline double component_logpdf(const GaussianComponent& comp, const Vector& x,
                               CovarianceMode mode = CovarianceMode::full) {
  if (x.size() != comp.mean.size()) throw DimensionError("component_logpdf: dimension mismatch");
  const auto f = detail::factorize(comp, mode);
  return f.log_norm - 0.5 * detail::mahalanobis_sq(f, x - comp.mean);
}

inline double mixture_log_pdf(const GaussianMixture& g, const Vector& x) {
  if (static_cast<std::size_t>(x.size()) != g.dim()) throw DimensionError("mixture_pdf: dimension mismatch");
  const Matrix lw = detail::weighted_log_densities(g, x.transpose());
  return detail::log_sum_exp(lw.row(0).transpose());
}

/// Sum_k pi_k N(x | mu_k, Sigma_k), evaluated with a max shift.
inline double mixture_pdf(const GaussianMixture& g, const Vector& x) { return std::exp(mixture_log_pdf(g, x)); }

/// Per-row mixture log-densities.
inline Vector mixture_log_pdf_rows(const GaussianMixture& g, const Matrix& x) {
  const Matrix lw = detail::weighted_log_densities(g, x);
  Vector out(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) out(i) = detail::log_sum_exp(lw.row(i).transpose());
  return out;
}

inline double log_likelihood(const GaussianMixture& g, const DesignMatrix& data) {
  return mixture_log_pdf_rows(g, data.values()).sum();
}

/// Components centered on the matched vectors, weighted by the unit priors.
/// Zero-prior units are dropped; covariances start at the data's per-feature variance plus reg_epsilon.
inline GaussianMixture init_gmm_from_codebook(const CodebookMatchSet& match, const DesignMatrix& data,
                                              CovarianceMode mode, double reg_epsilon) {
  if (match.size() == 0) throw DegenerateModel("empty codebook match set");
  if (static_cast<std::size_t>(match.matched_vectors.cols()) != data.n_features())
    throw DimensionError("codebook match / data dimension mismatch");
  if (reg_epsilon < 0.0) throw ConfigError("reg_epsilon must be non-negative");
  double total = 0.0;
  for (Eigen::Index k = 0; k < match.priors.size(); ++k)
    if (match.priors(k) > 0.0) total += match.priors(k);
  if (!(total > 0.0)) throw DegenerateModel("all codebook priors are zero");

  const Vector var = column_variances(data.values());
  Matrix cov = Matrix::Zero(var.size(), var.size());
  cov.diagonal() = var.array() + reg_epsilon;

  GaussianMixture g;
  g.covariance_mode = mode;
  g.reg_epsilon = reg_epsilon;
  for (Eigen::Index k = 0; k < match.priors.size(); ++k) {
    if (!(match.priors(k) > 0.0)) continue;
    g.components.push_back({match.priors(k) / total, match.matched_vectors.row(k).transpose(), cov});
  }
  return g;
}

/// Responsibilities r_ik and the data log-likelihood under g.
struct EStep {
  Matrix responsibilities;  // N x K, rows sum to 1
  double log_likelihood = 0.0;
};

inline EStep expectation(const GaussianMixture& g, const Matrix& x) {
  EStep e;
  e.responsibilities = detail::weighted_log_densities(g, x);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    auto row = e.responsibilities.row(i);
    const double lse = detail::log_sum_exp(row.transpose());
    e.log_likelihood += lse;
    row = (row.array() - lse).exp().matrix();
    row /= row.sum();
  }
  return e;
}

struct MStepResult {
  GaussianMixture mixture;
  std::size_t dropped = 0;
};

/// Weighted moments. Components whose responsibility mass is below 1e-12 are dropped.
inline MStepResult maximization(const GaussianMixture& g, const Matrix& x, const Matrix& r) {
  MStepResult out;
  out.mixture.covariance_mode = g.covariance_mode;
  out.mixture.reg_epsilon = g.reg_epsilon;
  const double n = double(x.rows());
  for (Eigen::Index k = 0; k < r.cols(); ++k) {
    const Vector rk = r.col(k);
    const double nk = rk.sum();
    if (nk < 1e-12) {
      ++out.dropped;
      continue;
    }
    GaussianComponent c;
    c.weight = nk / n;
    c.mean = (x.transpose() * rk) / nk;
    const Matrix diff = x.rowwise() - c.mean.transpose();
    if (g.covariance_mode == CovarianceMode::diagonal) {
      const Vector var = (diff.array().square().colwise() * rk.array()).colwise().sum().transpose() / nk;
      c.covariance = Matrix::Zero(x.cols(), x.cols());
      c.covariance.diagonal() = var.cwiseMax(g.reg_epsilon);
    } else {
      const Matrix weighted = diff.array().colwise() * rk.array().sqrt();
      Matrix s = (weighted.transpose() * weighted) / nk;
      c.covariance = detail::floor_eigenvalues(s, g.reg_epsilon);
    }
    out.mixture.components.push_back(std::move(c));
  }
  if (out.mixture.components.empty()) throw DegenerateModel("every mixture component lost its responsibility mass");
  if (out.dropped > 0) {
    double total = 0.0;
    for (const auto& c : out.mixture.components) total += c.weight;
    for (auto& c : out.mixture.components) c.weight /= total;
    log::info("EM dropped " + std::to_string(out.dropped) + " empty component(s)");
  }
  return out;
}

struct EmStepResult {
  GaussianMixture mixture;
  double log_likelihood = 0.0;
  std::size_t dropped = 0;
};

/// One E-step + M-step; returns the updated mixture and its log-likelihood.
inline EmStepResult em_step(const GaussianMixture& g, const DesignMatrix& data) {
  const auto e = expectation(g, data.values());
  auto m = maximization(g, data.values(), e.responsibilities);
  const double ll = log_likelihood(m.mixture, data);
  return {std::move(m.mixture), ll, m.dropped};
}

struct EmFit {
  GaussianMixture mixture;
  std::vector<double> ll_trace;  // log-likelihood after each step
  std::size_t iterations = 0;
  bool converged = false;
  std::size_t dropped = 0;
};

/// Runs EM until |delta ll| < tol (1 + |ll|) or max_iter steps.
inline EmFit fit_em(GaussianMixture g, const DesignMatrix& data, double tol = 1e-6, std::size_t max_iter = 100) {
  if (!(tol > 0.0)) throw ConfigError("EM tolerance must be positive");
  if (max_iter < 1) throw ConfigError("EM max_iter must be >= 1");
  const Matrix& x = data.values();
  EmFit fit;
  EStep e = expectation(g, x);
  double prev = e.log_likelihood;
  for (std::size_t it = 1; it <= max_iter; ++it) {
    auto m = maximization(g, x, e.responsibilities);
    fit.dropped += m.dropped;
    g = std::move(m.mixture);
    e = expectation(g, x);
    fit.ll_trace.push_back(e.log_likelihood);
    fit.iterations = it;
    if (std::abs(e.log_likelihood - prev) < tol * (1.0 + std::abs(e.log_likelihood))) {
      fit.converged = true;
      break;
    }
    prev = e.log_likelihood;
  }
  fit.mixture = std::move(g);
  return fit;
}

/// P(chi2_d >= m): the share of a d-dimensional Gaussian's mass lying farther out than
/// squared Mahalanobis distance m.
inline double chi_square_tail(double m, std::size_t d) {
  if (!(m > 0.0)) return 1.0;
  if (!std::isfinite(m)) return 0.0;
  return boost::math::gamma_q(0.5 * double(d), 0.5 * m);
}

/// Per-row density, density relative to the best-scoring row, and typicality.
inline MixtureScores mixture_scores(const GaussianMixture& g, const DesignMatrix& data) {
  const Matrix& x = data.values();
  if (static_cast<std::size_t>(x.cols()) != g.dim()) throw DimensionError("mixture/data dimension mismatch");
  const auto n = x.rows();
  const auto k = static_cast<Eigen::Index>(g.size());
  Matrix maha(n, k), lw(n, k);
  for (Eigen::Index c = 0; c < k; ++c) {
    const auto& comp = g.components[static_cast<std::size_t>(c)];
    const auto f = detail::factorize(comp, g.covariance_mode);
    maha.col(c) = detail::component_mahalanobis_rows(comp, f, x);
    const double logw = comp.weight > 0.0 ? std::log(comp.weight) : -std::numeric_limits<double>::infinity();
    lw.col(c) = (f.log_norm + logw - 0.5 * maha.col(c).array()).matrix();
  }
  MixtureScores s;
  s.log_density.resize(n);
  s.typicality.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index best = 0;
    lw.row(i).maxCoeff(&best);
    s.log_density(i) = detail::log_sum_exp(lw.row(i).transpose());
    s.typicality(i) = chi_square_tail(maha(i, best), g.dim());
  }
  s.density = s.log_density.array().exp().matrix();
  const double top = s.log_density.maxCoeff();
  s.normalized = (s.log_density.array() - top).exp().matrix();
  return s;
}

}  // namespace ppp
