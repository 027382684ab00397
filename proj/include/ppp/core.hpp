#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

namespace ppp {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

#define PPP_DEFINE_ERROR(Name) \
  struct Name : Error {        \
    using Error::Error;        \
  }

PPP_DEFINE_ERROR(DegenerateSelection);
PPP_DEFINE_ERROR(IndexOutOfBounds);
PPP_DEFINE_ERROR(ConfigError);
PPP_DEFINE_ERROR(DimensionError);
PPP_DEFINE_ERROR(SingularCovariance);
PPP_DEFINE_ERROR(DegenerateModel);
PPP_DEFINE_ERROR(DegenerateSplit);
PPP_DEFINE_ERROR(ValidationError);
PPP_DEFINE_ERROR(FormatError);

#undef PPP_DEFINE_ERROR

struct ParseError : Error {
  ParseError(std::size_t row, std::size_t column, const std::string& what)
      : Error("parse error at (" + std::to_string(row) + "," + std::to_string(column) + "): " + what),
        row(row),
        column(column) {}
  std::size_t row;
  std::size_t column;
};

// ---------------------------------------------------------------------------
// Logging (level from PPP_LOG: error, warn, info, debug; default warn)
// ---------------------------------------------------------------------------

namespace log {

enum class Level { error = 0, warn = 1, info = 2, debug = 3 };

inline Level level() {
  static const Level lvl = [] {
    const char* env = std::getenv("PPP_LOG");
    if (env == nullptr) return Level::warn;
    std::string_view v(env);
    if (v == "error") return Level::error;
    if (v == "info") return Level::info;
    if (v == "debug") return Level::debug;
    return Level::warn;
  }();
  return lvl;
}

inline void write(Level lvl, std::string_view tag, const std::string& msg) {
  if (static_cast<int>(lvl) <= static_cast<int>(level())) std::cerr << "[ppp " << tag << "] " << msg << '\n';
}

inline void warn(const std::string& msg) { write(Level::warn, "warn", msg); }
inline void info(const std::string& msg) { write(Level::info, "info", msg); }
inline void debug(const std::string& msg) { write(Level::debug, "debug", msg); }

}  // namespace log

// ---------------------------------------------------------------------------
// Seeds
// ---------------------------------------------------------------------------

/// Explicit seed for every randomized operation. There is no global RNG.
struct RandomSeed {
  std::uint64_t value = 0;

  friend bool operator==(const RandomSeed&, const RandomSeed&) = default;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

/// Mixes a parent seed with a sequence of integer tags into a fresh stream seed.
inline RandomSeed derive_seed(RandomSeed parent, std::initializer_list<std::uint64_t> tags) {
  std::uint64_t h = detail::splitmix64(parent.value);
  for (auto t : tags) h = detail::splitmix64(h ^ detail::splitmix64(t + 0x632be59bd9b4e019ULL));
  return RandomSeed{h};
}

inline RandomSeed derive_seed(RandomSeed parent, std::string_view tag, std::initializer_list<std::uint64_t> tags = {}) {
  RandomSeed s = derive_seed(parent, {detail::fnv1a(tag)});
  return tags.size() == 0 ? s : derive_seed(s, tags);
}

using Rng = std::mt19937_64;

inline Rng make_rng(RandomSeed seed) { return Rng(seed.value); }

/// Uniform integer in [0, n). Rejection sampling keeps the draw platform-independent.
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  if (n == 0) throw ConfigError("uniform_index over empty range");
  const std::uint64_t range = n;
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % range;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return static_cast<std::size_t>(x % range);
}

// ---------------------------------------------------------------------------
// IndexSet
// ---------------------------------------------------------------------------

/// Sorted, duplicate-free set of indices drawn from [0, universe_size).
class IndexSet {
 public:
  IndexSet() = default;

  IndexSet(std::vector<std::size_t> indices, std::size_t universe_size) : universe_size_(universe_size) {
    std::sort(indices.begin(), indices.end());
    indices.erase(std::unique(indices.begin(), indices.end()), indices.end());
    if (!indices.empty() && indices.back() >= universe_size)
      throw IndexOutOfBounds("index " + std::to_string(indices.back()) + " outside universe of size " +
                             std::to_string(universe_size));
    indices_ = std::move(indices);
  }

  static IndexSet all(std::size_t n) {
    IndexSet s;
    s.universe_size_ = n;
    s.indices_.resize(n);
    for (std::size_t i = 0; i < n; ++i) s.indices_[i] = i;
    return s;
  }

  static IndexSet empty(std::size_t universe_size) { return IndexSet({}, universe_size); }

  std::size_t size() const { return indices_.size(); }
  bool empty() const { return indices_.empty(); }
  std::size_t universe_size() const { return universe_size_; }
  std::size_t operator[](std::size_t i) const { return indices_[i]; }
  const std::vector<std::size_t>& indices() const { return indices_; }
  auto begin() const { return indices_.begin(); }
  auto end() const { return indices_.end(); }

  bool contains(std::size_t i) const { return std::binary_search(indices_.begin(), indices_.end(), i); }

  IndexSet intersect(const IndexSet& other) const {
    std::vector<std::size_t> out;
    std::set_intersection(indices_.begin(), indices_.end(), other.indices_.begin(), other.indices_.end(),
                          std::back_inserter(out));
    return IndexSet(std::move(out), std::max(universe_size_, other.universe_size_));
  }

  /// Maps local positions through this set: result[j] = (*this)[local[j]].
  IndexSet compose(const IndexSet& local) const {
    std::vector<std::size_t> out;
    out.reserve(local.size());
    for (auto j : local) {
      if (j >= indices_.size()) throw IndexOutOfBounds("compose: local index out of range");
      out.push_back(indices_[j]);
    }
    return IndexSet(std::move(out), universe_size_);
  }

  friend bool operator==(const IndexSet& a, const IndexSet& b) { return a.indices_ == b.indices_; }

 private:
  std::vector<std::size_t> indices_;
  std::size_t universe_size_ = 0;
};

// ---------------------------------------------------------------------------
// DesignMatrix
// ---------------------------------------------------------------------------

/// N x f table: rows are instances, columns are features. Immutable after construction.
class DesignMatrix {
 public:
  DesignMatrix() = default;

  explicit DesignMatrix(Matrix values, std::vector<std::string> instance_ids = {},
                        std::vector<std::string> feature_ids = {})
      : values_(std::move(values)), instance_ids_(std::move(instance_ids)), feature_ids_(std::move(feature_ids)) {
    if (values_.rows() < 1 || values_.cols() < 1) throw ValidationError("design matrix must be non-empty");
    if (!values_.allFinite()) throw ValidationError("design matrix contains non-finite values");
    check_labels(instance_ids_, n_instances(), "instance_ids");
    check_labels(feature_ids_, n_features(), "feature_ids");
  }

  const Matrix& values() const { return values_; }
  std::size_t n_instances() const { return static_cast<std::size_t>(values_.rows()); }
  std::size_t n_features() const { return static_cast<std::size_t>(values_.cols()); }
  double operator()(std::size_t i, std::size_t j) const { return values_(i, j); }
  const std::vector<std::string>& instance_ids() const { return instance_ids_; }
  const std::vector<std::string>& feature_ids() const { return feature_ids_; }

  std::string feature_label(std::size_t j) const {
    return feature_ids_.empty() ? std::to_string(j) : feature_ids_[j];
  }

  Vector row(std::size_t i) const { return values_.row(static_cast<Eigen::Index>(i)).transpose(); }

  /// Clustering needs at least two instances and two features.
  void require_clusterable() const {
    if (n_instances() < 2 || n_features() < 2)
      throw ValidationError("need at least 2 instances and 2 features, got " + std::to_string(n_instances()) +
                            "x" + std::to_string(n_features()));
  }

  friend bool operator==(const DesignMatrix& a, const DesignMatrix& b) {
    return a.values_.rows() == b.values_.rows() && a.values_.cols() == b.values_.cols() &&
           a.values_ == b.values_ && a.instance_ids_ == b.instance_ids_ && a.feature_ids_ == b.feature_ids_;
  }

 private:
  static void check_labels(const std::vector<std::string>& ids, std::size_t n, const char* what) {
    if (ids.empty()) return;
    if (ids.size() != n)
      throw ValidationError(std::string(what) + " length " + std::to_string(ids.size()) + " != " + std::to_string(n));
    std::unordered_set<std::string> seen(ids.begin(), ids.end());
    if (seen.size() != ids.size()) throw ValidationError(std::string(what) + " are not unique");
  }

  Matrix values_;
  std::vector<std::string> instance_ids_;
  std::vector<std::string> feature_ids_;
};

inline void check_selection(const IndexSet& s, std::size_t extent, const char* what) {
  if (s.empty()) throw DegenerateSelection(std::string("empty ") + what + " selection");
  if (s.indices().back() >= extent)
    throw IndexOutOfBounds(std::string(what) + " index " + std::to_string(s.indices().back()) + " >= " +
                           std::to_string(extent));
}

/// Restriction of m to the given rows and columns, order and labels preserved.
inline DesignMatrix submatrix(const DesignMatrix& m, const IndexSet& rows, const IndexSet& cols) {
  check_selection(rows, m.n_instances(), "row");
  check_selection(cols, m.n_features(), "column");
  Matrix out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c)
    for (std::size_t r = 0; r < rows.size(); ++r)
      out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = m(rows[r], cols[c]);
  std::vector<std::string> iids, fids;
  if (!m.instance_ids().empty())
    for (auto r : rows) iids.push_back(m.instance_ids()[r]);
  if (!m.feature_ids().empty())
    for (auto c : cols) fids.push_back(m.feature_ids()[c]);
  return DesignMatrix(std::move(out), std::move(iids), std::move(fids));
}

/// Features as points: vector j is column j (length N).
inline std::vector<Vector> column_vectors(const DesignMatrix& m) {
  std::vector<Vector> out;
  out.reserve(m.n_features());
  for (std::size_t j = 0; j < m.n_features(); ++j) out.emplace_back(m.values().col(static_cast<Eigen::Index>(j)));
  return out;
}

inline double squared_distance(const Vector& a, const Vector& b) { return (a - b).squaredNorm(); }

/// Per-column population variance.
inline Vector column_variances(const Matrix& x) {
  const Vector mean = x.colwise().mean().transpose();
  Vector var(x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) var(j) = (x.col(j).array() - mean(j)).square().mean();
  return var;
}

}  // namespace ppp
