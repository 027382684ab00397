#pragma once

#include "ppp/core.hpp"

#include <array>
#include <limits>

namespace ppp {

enum class KmeansInit { random, plus_plus };

using Centers = std::array<Vector, 2>;

struct KmeansResult {
  std::vector<int> assignment;  // 0 or 1 per point
  Centers centers;
  double objective = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  RandomSeed seed{};
  std::vector<double> objective_trace;  // after each Lloyd iteration
};

struct LloydStep {
  std::vector<int> assignment;
  Centers centers;
  double objective = 0.0;
};

/// f = sum over points of the squared distance to the nearer center.
inline double kmeans_objective(const Centers& centers, const std::vector<Vector>& points) {
  double f = 0.0;
  for (const auto& p : points) f += std::min(squared_distance(p, centers[0]), squared_distance(p, centers[1]));
  return f;
}

namespace detail {

inline std::vector<int> assign_nearest(const Centers& centers, const std::vector<Vector>& points) {
  std::vector<int> a(points.size());
  for (std::size_t i = 0; i < points.size(); ++i)
    a[i] = squared_distance(points[i], centers[1]) < squared_distance(points[i], centers[0]) ? 1 : 0;
  return a;
}

/// Moves the point farthest from its center into an empty cluster.
inline void repair_empty(std::vector<int>& a, const Centers& centers, const std::vector<Vector>& points) {
  for (int label = 0; label < 2; ++label) {
    if (std::find(a.begin(), a.end(), label) != a.end()) continue;
    std::size_t far = 0;
    double far_d = -1.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      const double d = squared_distance(points[i], centers[a[i]]);
      if (d > far_d) {
        far_d = d;
        far = i;
      }
    }
    a[far] = label;
  }
}

inline Centers cluster_means(const std::vector<int>& a, const std::vector<Vector>& points) {
  const auto d = points.front().size();
  Centers c{Vector::Zero(d), Vector::Zero(d)};
  std::array<std::size_t, 2> n{0, 0};
  for (std::size_t i = 0; i < points.size(); ++i) {
    c[a[i]] += points[i];
    ++n[a[i]];
  }
  for (int l = 0; l < 2; ++l)
    if (n[l] > 0) c[l] /= double(n[l]);
  return c;
}

inline bool all_identical(const std::vector<Vector>& points) {
  for (std::size_t i = 1; i < points.size(); ++i)
    if (points[i] != points[0]) return false;
  return true;
}

inline Centers initial_centers(const std::vector<Vector>& points, Rng& rng, KmeansInit init) {
  const std::size_t first = uniform_index(rng, points.size());
  if (init == KmeansInit::plus_plus) {
    std::vector<double> w(points.size());
    double total = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) total += w[i] = squared_distance(points[i], points[first]);
    std::uniform_real_distribution<double> u(0.0, total);
    double pick = u(rng);
    std::size_t second = points.size() - 1;
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (w[i] > 0.0 && pick < w[i]) {
        second = i;
        break;
      }
      pick -= w[i];
    }
    while (w[second] == 0.0) --second;
    return {points[first], points[second]};
  }
  std::vector<std::size_t> distinct;
  for (std::size_t i = 0; i < points.size(); ++i)
    if (points[i] != points[first]) distinct.push_back(i);
  return {points[first], points[distinct[uniform_index(rng, distinct.size())]]};
}

}  // namespace detail

/// One assignment pass (ties to label 0, empty cluster repaired) then a center update.
inline LloydStep lloyd_iterate(const Centers& centers, const std::vector<Vector>& points) {
  if (points.size() < 2) throw DegenerateSplit("need at least 2 points");
  LloydStep s;
  s.assignment = detail::assign_nearest(centers, points);
  detail::repair_empty(s.assignment, centers, points);
  s.centers = detail::cluster_means(s.assignment, points);
  s.objective = kmeans_objective(s.centers, points);
  return s;
}

/// Lloyd's 2-means from two seeded distinct starting points.
inline KmeansResult kmeans_bisect(const std::vector<Vector>& points, RandomSeed seed, std::size_t max_iter = 300,
                                  KmeansInit init = KmeansInit::random) {
  if (points.size() < 2) throw DegenerateSplit("need at least 2 points to bisect");
  for (const auto& p : points)
    if (p.size() != points.front().size()) throw DimensionError("points of unequal dimension");
  if (detail::all_identical(points)) throw DegenerateSplit("all points are identical");
  if (max_iter < 1) throw ConfigError("k-means max_iter must be >= 1");

  Rng rng = make_rng(derive_seed(seed, "kmeans-init"));
  KmeansResult r;
  r.seed = seed;
  r.centers = detail::initial_centers(points, rng, init);
  for (std::size_t it = 1; it <= max_iter; ++it) {
    auto step = lloyd_iterate(r.centers, points);
    r.iterations = it;
    r.objective_trace.push_back(step.objective);
    const bool stable = step.assignment == r.assignment;
    r.assignment = std::move(step.assignment);
    r.centers = std::move(step.centers);
    r.objective = step.objective;
    if (stable) {
      r.converged = true;
      break;
    }
  }
  if (!r.converged) log::info("k-means hit max_iter=" + std::to_string(max_iter) + " without a fixed point");
  return r;
}

/// Best (lowest objective) of several seeded restarts.
inline KmeansResult kmeans_bisect_best_of(const std::vector<Vector>& points, RandomSeed seed, std::size_t restarts,
                                          std::size_t max_iter = 300) {
  KmeansResult best;
  best.objective = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < restarts; ++r) {
    auto res = kmeans_bisect(points, derive_seed(seed, {r}), max_iter);
    if (res.objective < best.objective) best = std::move(res);
  }
  return best;
}

}  // namespace ppp
