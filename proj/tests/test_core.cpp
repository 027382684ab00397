#include "support.hpp"

#include <gtest/gtest.h>

using namespace ppp;

TEST(IndexSet, SortsAndDeduplicates) {
  IndexSet s({5, 1, 3, 1}, 6);
  EXPECT_EQ(s.indices(), (std::vector<std::size_t>{1, 3, 5}));
  EXPECT_TRUE(s.contains(3));
  EXPECT_FALSE(s.contains(2));
  EXPECT_THROW(IndexSet({6}, 6), IndexOutOfBounds);
}

TEST(IndexSet, IntersectAndCompose) {
  IndexSet a({1, 2, 4, 7}, 8), b({2, 3, 7}, 8);
  EXPECT_EQ(a.intersect(b).indices(), (std::vector<std::size_t>{2, 7}));
  EXPECT_EQ(a.compose(IndexSet({0, 3}, 4)).indices(), (std::vector<std::size_t>{1, 7}));
  EXPECT_THROW(a.compose(IndexSet({4}, 5)), IndexOutOfBounds);
}

TEST(DesignMatrix, RejectsNonFiniteAndBadLabels) {
  Matrix m(2, 2);
  m << 1, 2, 3, std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(DesignMatrix{m}, ValidationError);
  Matrix ok = Matrix::Ones(2, 2);
  EXPECT_THROW(DesignMatrix(ok, {"a", "a"}), ValidationError);
  EXPECT_THROW(DesignMatrix(ok, {}, {"x"}), ValidationError);
  EXPECT_NO_THROW(DesignMatrix(ok, {"a", "b"}, {"x", "y"}));
}

TEST(DesignMatrix, ClusterableNeedsTwoByTwo) {
  EXPECT_THROW(DesignMatrix(Matrix::Ones(5, 1)).require_clusterable(), ValidationError);
  EXPECT_THROW(DesignMatrix(Matrix::Ones(1, 5)).require_clusterable(), ValidationError);
  EXPECT_NO_THROW(DesignMatrix(Matrix::Ones(2, 2)).require_clusterable());
}

TEST(Submatrix, FullSelectionIsIdentity) {
  Rng rng(1);
  auto m = test::random_design(rng, 7, 4);
  EXPECT_EQ(submatrix(m, IndexSet::all(7), IndexSet::all(4)), m);
}

TEST(Submatrix, DirectSelection) {
  Matrix v(3, 3);
  v << 0, 1, 2, 3, 4, 5, 6, 7, 8;
  DesignMatrix m(v, {"a", "b", "c"}, {"x", "y", "z"});
  auto s = submatrix(m, IndexSet({0, 2}, 3), IndexSet({1}, 3));
  ASSERT_EQ(s.n_instances(), 2u);
  ASSERT_EQ(s.n_features(), 1u);
  EXPECT_EQ(s(0, 0), 1.0);
  EXPECT_EQ(s(1, 0), 7.0);
  EXPECT_EQ(s.instance_ids(), (std::vector<std::string>{"a", "c"}));
  EXPECT_EQ(s.feature_ids(), (std::vector<std::string>{"y"}));
}

TEST(Submatrix, Errors) {
  DesignMatrix m(Matrix::Ones(3, 3));
  EXPECT_THROW(submatrix(m, IndexSet::empty(3), IndexSet::all(3)), DegenerateSelection);
  EXPECT_THROW(submatrix(m, IndexSet::all(3), IndexSet::empty(3)), DegenerateSelection);
  EXPECT_THROW(submatrix(m, IndexSet({3}, 4), IndexSet::all(3)), IndexOutOfBounds);
}

TEST(Submatrix, MatchesLoopOracle) {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    auto m = test::random_design(rng, 10, 6);
    auto rows = test::random_subset(rng, 10), cols = test::random_subset(rng, 6);
    auto s = submatrix(m, rows, cols);
    for (std::size_t r = 0; r < rows.size(); ++r)
      for (std::size_t c = 0; c < cols.size(); ++c) ASSERT_EQ(s(r, c), m(rows[r], cols[c]));
  }
}

TEST(Submatrix, ComposesWithNestedRestriction) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    auto m = test::random_design(rng, 10, 6);
    auto r1 = test::random_subset(rng, 10), c1 = test::random_subset(rng, 6);
    auto r2 = test::random_subset(rng, r1.size()), c2 = test::random_subset(rng, c1.size());
    EXPECT_EQ(submatrix(submatrix(m, r1, c1), r2, c2), submatrix(m, r1.compose(r2), c1.compose(c2)));
  }
}

TEST(ColumnVectors, IdentityPattern) {
  DesignMatrix m(Matrix::Identity(2, 2));
  auto v = column_vectors(m);
  ASSERT_EQ(v.size(), 2u);
  EXPECT_EQ(v[0], Vector::Unit(2, 0));
  EXPECT_EQ(v[1], Vector::Unit(2, 1));
}

TEST(ColumnVectors, SingleColumn) {
  Matrix c(3, 1);
  c << 4, 5, 6;
  auto v = column_vectors(DesignMatrix(c));
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0], Vector(c.col(0)));
}

TEST(ColumnVectors, TransposeOracleAndRestriction) {
  Rng rng(4);
  auto m = test::random_design(rng, 8, 5);
  Matrix t = m.values().transpose();
  auto v = column_vectors(m);
  for (Eigen::Index j = 0; j < 5; ++j) EXPECT_EQ(v[j], Vector(t.row(j).transpose()));

  auto rows = test::random_subset(rng, 8), cols = test::random_subset(rng, 5);
  auto sv = column_vectors(submatrix(m, rows, cols));
  for (std::size_t j = 0; j < cols.size(); ++j)
    for (std::size_t r = 0; r < rows.size(); ++r) EXPECT_EQ(sv[j](r), m(rows[r], cols[j]));
}

TEST(Seeds, DerivationIsDeterministicAndTagSensitive) {
  RandomSeed s{42};
  EXPECT_EQ(derive_seed(s, "a", {1}), derive_seed(s, "a", {1}));
  EXPECT_NE(derive_seed(s, "a", {1}), derive_seed(s, "a", {2}));
  EXPECT_NE(derive_seed(s, "a"), derive_seed(s, "b"));
  EXPECT_NE(derive_seed(RandomSeed{1}, "a"), derive_seed(RandomSeed{2}, "a"));
}

TEST(Seeds, UniformIndexInRange) {
  Rng rng(5);
  std::vector<int> hist(7, 0);
  for (int i = 0; i < 7000; ++i) ++hist[uniform_index(rng, 7)];
  for (int h : hist) EXPECT_GT(h, 800);
  EXPECT_THROW(uniform_index(rng, 0), ConfigError);
}
