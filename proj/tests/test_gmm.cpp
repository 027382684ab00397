#include "support.hpp"

#include <gtest/gtest.h>

using namespace ppp;

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

GaussianComponent standard(Eigen::Index d) { return {1.0, Vector::Zero(d), Matrix::Identity(d, d)}; }

CodebookMatchSet match_of(const Matrix& vectors, const Vector& priors) {
  CodebookMatchSet m;
  m.matched_vectors = vectors;
  m.priors = priors;
  for (Eigen::Index k = 0; k < vectors.rows(); ++k) m.matched_instance_ids.push_back(static_cast<std::size_t>(k));
  return m;
}

double naive_pdf(const GaussianMixture& g, const Vector& x) {
  double s = 0.0;
  for (const auto& c : g.components) {
    const auto d = static_cast<double>(x.size());
    const Vector diff = x - c.mean;
    const double q = diff.dot(c.covariance.inverse() * diff);
    s += c.weight * std::exp(-0.5 * q) / std::sqrt(std::pow(2.0 * M_PI, d) * c.covariance.determinant());
  }
  return s;
}

}  // namespace

TEST(ComponentLogpdf, Oracles) {
  for (Eigen::Index d : {1, 3, 7}) EXPECT_NEAR(component_logpdf(standard(d), Vector::Zero(d)), -double(d) * kHalfLog2Pi, 1e-14);
  EXPECT_NEAR(component_logpdf(standard(1), Vector::Ones(1)), -1.41894, 1e-5);
  EXPECT_NEAR(component_logpdf(standard(1), Vector::Ones(1)), -kHalfLog2Pi - 0.5, 1e-15);
  EXPECT_THROW(component_logpdf(standard(2), Vector::Ones(3)), DimensionError);
}

TEST(ComponentLogpdf, SingularCovariance) {
  GaussianComponent c{1.0, Vector::Zero(2), Matrix::Zero(2, 2)};
  c.covariance(0, 0) = 1.0;
  EXPECT_THROW(component_logpdf(c, Vector::Zero(2)), SingularCovariance);
  EXPECT_THROW(component_logpdf(c, Vector::Zero(2), CovarianceMode::diagonal), SingularCovariance);
}

TEST(ComponentLogpdf, MeanGradientMatchesFiniteDifferences) {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    auto g = test::random_mixture(rng, 1, 4);
    auto comp = g.components[0];
    const Vector x = test::random_matrix(rng, 4, 1).col(0);
    const Vector analytic = comp.covariance.ldlt().solve(x - comp.mean);
    for (Eigen::Index j = 0; j < 4; ++j) {
      const double h = 1e-6 * std::max(1.0, std::abs(comp.mean(j)));
      auto plus = comp, minus = comp;
      plus.mean(j) += h;
      minus.mean(j) -= h;
      const double fd = (component_logpdf(plus, x) - component_logpdf(minus, x)) / (2.0 * h);
      EXPECT_LT(std::abs(fd - analytic(j)), 1e-5 * std::max(1.0, std::abs(analytic(j))));
    }
  }
}

TEST(MixturePdf, SingleAndDuplicatedComponents) {
  Rng rng(22);
  auto g = test::random_mixture(rng, 1, 3);
  const Vector x = test::random_matrix(rng, 3, 1).col(0);
  EXPECT_NEAR(mixture_pdf(g, x), std::exp(component_logpdf(g.components[0], x)), 1e-15);

  auto twin = g;
  twin.components.push_back(g.components[0]);
  twin.components[0].weight = twin.components[1].weight = 0.5;
  EXPECT_NEAR(mixture_pdf(twin, x) / mixture_pdf(g, x), 1.0, 1e-14);
  EXPECT_THROW(mixture_pdf(g, Vector::Zero(2)), DimensionError);
}

TEST(MixturePdf, LogSpaceMatchesNaiveSum) {
  Rng rng(23);
  for (int trial = 0; trial < 200; ++trial) {
    auto g = test::random_mixture(rng, 3, 3);
    const Vector x = test::random_matrix(rng, 3, 1, 2.0).col(0);
    const double naive = naive_pdf(g, x);
    if (naive < 1e-250) continue;
    EXPECT_NEAR(mixture_pdf(g, x) / naive, 1.0, 1e-10);
    EXPECT_GT(mixture_pdf(g, x), 0.0);
  }
}

TEST(LogLikelihood, Oracles) {
  GaussianMixture g;
  g.components.push_back(standard(3));
  DesignMatrix one(Matrix::Zero(1, 3));
  EXPECT_NEAR(log_likelihood(g, one), -3.0 * kHalfLog2Pi, 1e-14);

  Rng rng(24);
  auto r = test::random_mixture(rng, 3, 2);
  Matrix row = test::random_matrix(rng, 1, 2);
  Matrix twice(2, 2);
  twice << row, row;
  EXPECT_DOUBLE_EQ(log_likelihood(r, DesignMatrix(twice)), 2.0 * log_likelihood(r, DesignMatrix(row)));

  auto d = test::random_design(rng, 15, 2);
  double oracle = 0.0;
  for (std::size_t i = 0; i < 15; ++i) oracle += std::log(naive_pdf(r, d.row(i)));
  EXPECT_NEAR(log_likelihood(r, d), oracle, 1e-9 * std::abs(oracle));
}

TEST(InitGmm, FromCodebook) {
  Rng rng(25);
  auto data = test::random_design(rng, 20, 2);
  Matrix v = data.values().topRows(3);

  auto g1 = init_gmm_from_codebook(match_of(v.topRows(1), Vector::Ones(1)), data, CovarianceMode::full, 1e-6);
  ASSERT_EQ(g1.size(), 1u);
  EXPECT_EQ(g1.components[0].weight, 1.0);
  EXPECT_EQ(g1.components[0].mean, Vector(v.row(0).transpose()));
  const Vector var = column_variances(data.values());
  EXPECT_NEAR(g1.components[0].covariance(0, 0), var(0) + 1e-6, 1e-15);
  EXPECT_EQ(g1.components[0].covariance(0, 1), 0.0);

  auto g2 = init_gmm_from_codebook(match_of(v.topRows(2), Vector::Constant(2, 0.5)), data, CovarianceMode::full, 1e-6);
  ASSERT_EQ(g2.size(), 2u);
  EXPECT_EQ(g2.components[0].weight, g2.components[1].weight);

  Vector p(3);
  p << 0.3, 0.0, 0.3;
  auto g3 = init_gmm_from_codebook(match_of(v, p), data, CovarianceMode::full, 1e-6);
  ASSERT_EQ(g3.size(), 2u);
  EXPECT_NEAR(g3.weights().sum(), 1.0, 1e-15);
  EXPECT_EQ(g3.components[1].mean, Vector(v.row(2).transpose()));

  EXPECT_THROW(init_gmm_from_codebook(match_of(v, Vector::Zero(3)), data, CovarianceMode::full, 1e-6), DegenerateModel);
}

TEST(EmStep, SingleComponentGivesSampleMoments) {
  Rng rng(26);
  auto data = test::random_design(rng, 50, 3);
  auto g = test::mixture_on_rows(rng, data, 1);
  auto s = em_step(g, data);
  const Vector mean = data.values().colwise().mean().transpose();
  const Matrix c = data.values().rowwise() - mean.transpose();
  const Matrix cov = c.transpose() * c / 50.0;
  EXPECT_TRUE(s.mixture.components[0].mean.isApprox(mean, 1e-12));
  EXPECT_TRUE(s.mixture.components[0].covariance.isApprox(cov, 1e-9));
  EXPECT_NEAR(s.mixture.components[0].weight, 1.0, 1e-15);
  EXPECT_NEAR(s.log_likelihood, log_likelihood(s.mixture, data), 1e-9);
}

TEST(EmStep, SeparatedCloudsClaimTheirPoints) {
  Rng rng(27);
  Matrix x(40, 2);
  std::normal_distribution<double> n(0.0, 0.05);
  for (int i = 0; i < 40; ++i) x(i, 0) = (i < 20 ? 0.0 : 20.0) + n(rng), x(i, 1) = n(rng);
  DesignMatrix data(x);
  Matrix starts(2, 2);
  starts << x.row(0), x.row(39);
  auto g = init_gmm_from_codebook(match_of(starts, Vector::Constant(2, 0.5)), data, CovarianceMode::full, 1e-8);
  for (int it = 0; it < 20; ++it) g = em_step(g, data).mixture;
  auto e = expectation(g, x);
  for (int i = 0; i < 40; ++i) EXPECT_GE(e.responsibilities(i, i < 20 ? 0 : 1), 0.999);
}

TEST(EmStep, IdenticalRowsCollapseToFloor) {
  Matrix x = Matrix::Ones(10, 2);
  DesignMatrix data(x);
  Matrix starts(2, 2);
  starts << 0, 0, 2, 2;
  const double eps = 1e-6;
  auto g = init_gmm_from_codebook(match_of(starts, Vector::Constant(2, 0.5)), data, CovarianceMode::full, eps);
  for (auto& c : g.components) c.covariance = Matrix::Identity(2, 2);
  auto s = em_step(g, data);
  for (const auto& c : s.mixture.components) {
    EXPECT_TRUE(c.mean.isApprox(Vector::Ones(2), 1e-12));
    EXPECT_TRUE(c.covariance.isApprox(eps * Matrix::Identity(2, 2), 1e-6));
  }
}

TEST(EmStep, WeightsStayProbabilityVectorAndLlMonotone) {
  Rng rng(28);
  for (int trial = 0; trial < 30; ++trial) {
    auto data = test::random_design(rng, 60, 3);
    const auto mode = trial % 2 ? CovarianceMode::diagonal : CovarianceMode::full;
    auto g = test::mixture_on_rows(rng, data, 4, mode);
    double ll = log_likelihood(g, data);
    for (int step = 0; step < 15; ++step) {
      auto s = em_step(g, data);
      EXPECT_GE(s.log_likelihood, ll - 1e-8);
      EXPECT_NEAR(s.mixture.weights().sum(), 1.0, 1e-12);
      EXPECT_GE(s.mixture.weights().minCoeff(), 0.0);
      for (const auto& c : s.mixture.components) {
        EXPECT_TRUE(c.covariance.isApprox(c.covariance.transpose()));
        EXPECT_GE(Eigen::SelfAdjointEigenSolver<Matrix>(c.covariance).eigenvalues().minCoeff(),
                  s.mixture.reg_epsilon * (1 - 1e-9));
      }
      ll = s.log_likelihood;
      g = s.mixture;
    }
  }
}

TEST(EmStep, EmptyComponentIsDropped) {
  Matrix x(6, 1);
  x << 0, 0.1, 0.2, 0.3, 0.4, 0.5;
  DesignMatrix data(x);
  Matrix starts(2, 1);
  starts << 0.25, 1e4;
  auto g = init_gmm_from_codebook(match_of(starts, Vector::Constant(2, 0.5)), data, CovarianceMode::full, 1e-6);
  for (auto& c : g.components) c.covariance(0, 0) = 0.01;
  auto s = em_step(g, data);
  EXPECT_EQ(s.dropped, 1u);
  ASSERT_EQ(s.mixture.size(), 1u);
  EXPECT_EQ(s.mixture.components[0].weight, 1.0);
}

TEST(Expectation, RowsSumToOne) {
  Rng rng(29);
  for (int trial = 0; trial < 100; ++trial) {
    auto g = test::random_mixture(rng, 1 + uniform_index(rng, 6), 3);
    Matrix x = test::random_matrix(rng, 20, 3, 5.0);
    auto e = expectation(g, x);
    for (Eigen::Index i = 0; i < 20; ++i) ASSERT_NEAR(e.responsibilities.row(i).sum(), 1.0, 1e-12);
  }
}

TEST(FitEm, ConvergedStopsAfterOneIteration) {
  Rng rng(30);
  auto data = test::random_design(rng, 80, 2);
  auto g = test::mixture_on_rows(rng, data, 3);
  auto once = fit_em(g, data, 1e-10, 500);
  ASSERT_TRUE(once.converged);
  auto again = fit_em(once.mixture, data, 1e-6, 100);
  EXPECT_EQ(again.iterations, 1u);
  EXPECT_TRUE(again.converged);
}

TEST(FitEm, MaxIterOneIsOneStep) {
  Rng rng(31);
  auto data = test::random_design(rng, 50, 2);
  auto g = test::mixture_on_rows(rng, data, 3);
  auto f = fit_em(g, data, 1e-6, 1);
  auto s = em_step(g, data);
  EXPECT_EQ(f.iterations, 1u);
  ASSERT_EQ(f.mixture.size(), s.mixture.size());
  for (std::size_t k = 0; k < s.mixture.size(); ++k)
    EXPECT_TRUE(f.mixture.components[k].mean.isApprox(s.mixture.components[k].mean, 1e-14));
  EXPECT_THROW(fit_em(g, data, 0.0, 5), ConfigError);
  EXPECT_THROW(fit_em(g, data, 1e-6, 0), ConfigError);
}

TEST(FitEm, TraceMonotoneOnBlobs) {
  Rng rng(32);
  Matrix x = test::random_matrix(rng, 90, 2, 0.5);
  for (int i = 0; i < 90; ++i) x(i, 0) += 5.0 * (i % 3);
  DesignMatrix data(x);
  auto f = fit_em(test::mixture_on_rows(rng, data, 3), data);
  for (std::size_t i = 1; i < f.ll_trace.size(); ++i) EXPECT_GE(f.ll_trace[i], f.ll_trace[i - 1] - 1e-8);
}

TEST(MixtureScores, Normalization) {
  GaussianMixture g;
  g.components.push_back(standard(2));
  DesignMatrix single(Matrix::Ones(1, 2));
  EXPECT_EQ(mixture_scores(g, single).normalized(0), 1.0);

  Matrix two(2, 2);
  two << 0, 0, 10, 0;
  auto s = mixture_scores(g, DesignMatrix(two));
  EXPECT_GT(s.normalized(0), s.normalized(1));
  EXPECT_GT(s.typicality(0), s.typicality(1));

  Rng rng(33);
  auto r = test::random_mixture(rng, 3, 3);
  auto d = test::random_design(rng, 25, 3);
  auto sc = mixture_scores(r, d);
  const double top = sc.density.maxCoeff();
  for (Eigen::Index i = 0; i < 25; ++i) {
    EXPECT_NEAR(sc.normalized(i), sc.density(i) / top, 1e-12);
    EXPECT_GE(sc.typicality(i), 0.0);
    EXPECT_LE(sc.typicality(i), 1.0);
  }
  EXPECT_EQ(sc.normalized.maxCoeff(), 1.0);
}

TEST(MixtureScores, TypicalityIsChiSquareTail) {
  // 1-D standard normal: P(chi2_1 >= 1) = 2 (1 - Phi(1)).
  EXPECT_NEAR(chi_square_tail(1.0, 1), 0.31731050786291415, 1e-12);
  // 2-D: P(chi2_2 >= m) = exp(-m/2).
  EXPECT_NEAR(chi_square_tail(3.0, 2), std::exp(-1.5), 1e-14);
  EXPECT_EQ(chi_square_tail(0.0, 4), 1.0);
}

TEST(CovarianceMode, DefaultsByDimension) {
  EXPECT_EQ(default_covariance_mode(50), CovarianceMode::full);
  EXPECT_EQ(default_covariance_mode(51), CovarianceMode::diagonal);
  DesignMatrix constant(Matrix::Ones(5, 3));
  EXPECT_GT(default_reg_epsilon(constant), 0.0);
}
