#pragma once

#include "ppp/core.hpp"
#include "ppp/gmm.hpp"
#include "ppp/kmeans.hpp"
#include "ppp/som.hpp"

#include <future>
#include <map>

namespace ppp {

/// How child posteriors are normalized.
/// competitive: per matched vector across the two children, p1 + p2 = 1.
/// paper: each child's density-times-prior divided by that child's density sum over the K vectors.
enum class PosteriorMode { competitive, paper };

/// Rows used to cluster the feature columns: the node's gamma0 rows, or every node row.
enum class GammaRows { gamma0, all };

/// Which mixture value gamma0 thresholds.
/// typicality: chi-square tail of the row's Mahalanobis distance to its most responsible component.
/// normalized: density relative to the densest row. raw: the density itself.
enum class ScoreMode { typicality, normalized, raw };

enum class NodeStatus { internal, leaf_terminal, leaf_unsplittable };

inline const char* to_string(NodeStatus s) {
  switch (s) {
    case NodeStatus::internal: return "internal";
    case NodeStatus::leaf_terminal: return "leaf_terminal";
    case NodeStatus::leaf_unsplittable: return "leaf_unsplittable";
  }
  return "?";
}

inline const char* to_string(PosteriorMode m) { return m == PosteriorMode::competitive ? "competitive" : "paper"; }
inline const char* to_string(GammaRows g) { return g == GammaRows::gamma0 ? "gamma0" : "all"; }
inline const char* to_string(ScoreMode s) {
  return s == ScoreMode::typicality ? "typicality" : s == ScoreMode::normalized ? "normalized" : "raw";
}

struct EmConfig {
  double tol = 1e-6;
  std::size_t max_iter = 100;
  double reg_epsilon = 0.0;                   // 0 = 1e-6 x mean feature variance of the node
  std::optional<CovarianceMode> mode;         // unset = full up to 50 dims, diagonal above
};

struct PppConfig {
  SomConfig som;
  EmConfig em;
  std::size_t max_split_attempts = 20;
  double score_threshold = 0.5;
  std::size_t min_features_to_split = 2;
  std::size_t patience = 5;
  RandomSeed master_seed{};
  PosteriorMode posterior_mode = PosteriorMode::competitive;
  GammaRows gamma_rows = GammaRows::gamma0;
  ScoreMode score_mode = ScoreMode::typicality;
  KmeansInit kmeans_init = KmeansInit::random;
  std::size_t kmeans_max_iter = 300;
  std::size_t threads = 1;

  void validate() const {
    if (max_split_attempts < 1) throw ConfigError("max_split_attempts must be >= 1");
    if (!(score_threshold > 0.0 && score_threshold < 1.0)) throw ConfigError("score_threshold must be in (0, 1)");
    if (min_features_to_split < 2) throw ConfigError("min_features_to_split must be >= 2");
    if (patience < 1) throw ConfigError("patience must be >= 1");
    if (!(em.tol > 0.0) || em.max_iter < 1) throw ConfigError("EM needs tol > 0 and max_iter >= 1");
    if (em.reg_epsilon < 0.0) throw ConfigError("reg_epsilon must be non-negative");
    if (kmeans_max_iter < 1) throw ConfigError("kmeans_max_iter must be >= 1");
    if (threads < 1) throw ConfigError("threads must be >= 1");
    SomConfig probe = som;
    if (probe.grid_rows == 0 || probe.grid_cols == 0) probe.grid_rows = probe.grid_cols = 2;
    if (probe.sigma_start <= 0.0) probe.sigma_start = std::max(1.0, probe.sigma_end);
    probe.validate();
  }
};

/// One bisection attempt and its validation.
struct SplitEvaluation {
  std::array<IndexSet, 2> feature_split;     // global feature indices
  IndexSet gamma0;                           // global instance indices
  IndexSet gamma1, gamma2;                   // unit indices into the parent's matched set
  std::array<IndexSet, 2> child_instances;   // rows quantized by the gamma1 / gamma2 units
  double phi1 = 0.0;
  double phi2 = 0.0;
  std::optional<double> phi;                 // absent when phi1 + phi2 == 0
  Vector posteriors1, posteriors2;
  RandomSeed seed{};
  std::size_t attempt = 0;
  bool degenerate = false;                   // k-means could not split the columns

  /// Mean posterior of the accepted vectors of both children.
  double mean_accepted_posterior() const {
    double sum = 0.0;
    std::size_t n = 0;
    for (auto k : gamma1) sum += posteriors1(static_cast<Eigen::Index>(k)), ++n;
    for (auto k : gamma2) sum += posteriors2(static_cast<Eigen::Index>(k)), ++n;
    return n == 0 ? 0.0 : sum / double(n);
  }
};

struct AttemptRecord {
  std::size_t attempt = 0;
  double phi1 = 0.0;
  double phi2 = 0.0;
  std::optional<double> phi;
  double mean_posterior1 = 0.0;
  double mean_posterior2 = 0.0;
};

struct PppNode {
  std::string path = "r";
  std::size_t depth = 0;
  IndexSet feature_set;
  IndexSet instance_set;
  std::optional<SplitEvaluation> best_eval;
  std::vector<AttemptRecord> attempts;
  NodeStatus status = NodeStatus::leaf_terminal;
  std::vector<PppNode> children;

  std::size_t evaluations() const { return attempts.size(); }
};

struct PppTree {
  PppNode root;
  std::size_t n_instances = 0;
  std::size_t n_features = 0;
  std::vector<std::string> feature_ids;
};

/// Parent-level quantities of a node: its SOM, matched set, mixture and gamma0.
struct ParentModel {
  DesignMatrix data;                       // node rows x node columns
  SomModel som;
  CodebookMatchSet match;                  // matched ids are local row positions
  GaussianMixture mixture;
  MixtureScores scores;
  IndexSet gamma0_local;                   // local row positions
  IndexSet gamma0;                         // global instance indices
  std::vector<std::size_t> matched_global; // global instance index per unit
  std::vector<std::size_t> row_unit;       // parent BMU per local row
};

// ---------------------------------------------------------------------------
// Split algebra
// ---------------------------------------------------------------------------

/// Indices whose value is strictly above the threshold.
inline IndexSet gamma_set(const Vector& values, double threshold) {
  std::vector<std::size_t> out;
  for (Eigen::Index i = 0; i < values.size(); ++i)
    if (values(i) > threshold) out.push_back(static_cast<std::size_t>(i));
  return IndexSet(std::move(out), static_cast<std::size_t>(values.size()));
}

inline const Vector& score_values(const MixtureScores& scores, ScoreMode mode) {
  switch (mode) {
    case ScoreMode::typicality: return scores.typicality;
    case ScoreMode::normalized: return scores.normalized;
    case ScoreMode::raw: return scores.density;
  }
  return scores.typicality;
}

inline IndexSet gamma_set(const MixtureScores& scores, double threshold, ScoreMode mode = ScoreMode::typicality) {
  return gamma_set(score_values(scores, mode), threshold);
}

/// 100 |child ∩ gamma0| / |child|; an empty child set scores 0.
inline double overlap_fraction(const IndexSet& child_gamma, const IndexSet& gamma0) {
  if (child_gamma.empty()) return 0.0;
  return 100.0 * double(child_gamma.intersect(gamma0).size()) / double(child_gamma.size());
}

/// phi1 phi2 / (phi1 + phi2); absent for the 0/0 case.
inline std::optional<double> split_objective(double phi1, double phi2) {
  if (phi1 + phi2 == 0.0) return std::nullopt;
  return phi1 * phi2 / (phi1 + phi2);
}

// ---------------------------------------------------------------------------
// Posteriors of the parent matched vectors under the child mixtures
// ---------------------------------------------------------------------------

/// Parent matched vectors restricted to the child's columns (local column positions).
inline Matrix project_matched(const CodebookMatchSet& parent_match, const IndexSet& child_columns) {
  Matrix p(parent_match.matched_vectors.rows(), static_cast<Eigen::Index>(child_columns.size()));
  for (std::size_t j = 0; j < child_columns.size(); ++j) {
    if (child_columns[j] >= static_cast<std::size_t>(parent_match.matched_vectors.cols()))
      throw IndexOutOfBounds("child column outside the parent's feature space");
    p.col(static_cast<Eigen::Index>(j)) = parent_match.matched_vectors.col(static_cast<Eigen::Index>(child_columns[j]));
  }
  return p;
}

/// Single-child posterior: (density .* prior) ./ sum of densities over the K vectors.
inline Vector child_posteriors(const CodebookMatchSet& parent_match, const IndexSet& child_columns,
                               const GaussianMixture& child_g) {
  const Vector logd = mixture_log_pdf_rows(child_g, project_matched(parent_match, child_columns));
  const double lse = detail::log_sum_exp(logd);
  if (!std::isfinite(lse)) return Vector::Zero(logd.size());
  return ((logd.array() - lse).exp() * parent_match.priors.array()).matrix();
}

/// Posteriors of both children, normalized per the mode.
inline std::pair<Vector, Vector> child_posterior_pair(const CodebookMatchSet& parent_match,
                                                      const IndexSet& columns1, const GaussianMixture& g1,
                                                      const IndexSet& columns2, const GaussianMixture& g2,
                                                      PosteriorMode mode) {
  if (mode == PosteriorMode::paper)
    return {child_posteriors(parent_match, columns1, g1), child_posteriors(parent_match, columns2, g2)};
  const Vector l1 = mixture_log_pdf_rows(g1, project_matched(parent_match, columns1));
  const Vector l2 = mixture_log_pdf_rows(g2, project_matched(parent_match, columns2));
  const auto k = l1.size();
  Vector p1 = Vector::Zero(k), p2 = Vector::Zero(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    if (!(parent_match.priors(i) > 0.0)) continue;
    if (!std::isfinite(l1(i)) && !std::isfinite(l2(i))) continue;
    // prior_i cancels between numerator and denominator
    p1(i) = 1.0 / (1.0 + std::exp(l2(i) - l1(i)));
    p2(i) = 1.0 / (1.0 + std::exp(l1(i) - l2(i)));
  }
  return {p1, p2};
}

// ---------------------------------------------------------------------------
// Per-node pipeline
// ---------------------------------------------------------------------------

namespace detail {

struct FittedLevel {
  SomModel som;
  CodebookMatchSet match;
  GaussianMixture mixture;
};

/// SOM -> codebook match -> mixture seeded on the match -> EM over the rows.
inline FittedLevel fit_level(const DesignMatrix& x, const SomConfig& som_config, const EmConfig& em) {
  FittedLevel level;
  level.som = train_som(init_som(som_config, x), x);
  level.match = codebook_match(level.som, x);
  const double reg = em.reg_epsilon > 0.0 ? em.reg_epsilon : default_reg_epsilon(x);
  const CovarianceMode mode = em.mode.value_or(default_covariance_mode(x.n_features()));
  level.mixture = fit_em(init_gmm_from_codebook(level.match, x, mode, reg), x, em.tol, em.max_iter).mixture;
  return level;
}

inline IndexSet local_positions(const IndexSet& outer, const IndexSet& inner) {
  std::vector<std::size_t> pos;
  pos.reserve(inner.size());
  for (auto g : inner) {
    auto it = std::lower_bound(outer.begin(), outer.end(), g);
    if (it == outer.end() || *it != g) throw IndexOutOfBounds("index not inside the enclosing set");
    pos.push_back(static_cast<std::size_t>(it - outer.begin()));
  }
  return IndexSet(std::move(pos), outer.size());
}

}  // namespace detail

/// Steps 1-2 at a node: quantize the node's instances, fit the parent mixture, threshold gamma0.
inline ParentModel prepare_parent(const PppNode& node, const DesignMatrix& data, const PppConfig& config,
                                  RandomSeed seed) {
  ParentModel p;
  p.data = submatrix(data, node.instance_set, node.feature_set);
  SomConfig som = resolve_som_config(config.som, p.data.n_instances());
  som.seed = derive_seed(seed, "parent-som");
  auto level = detail::fit_level(p.data, som, config.em);
  p.som = std::move(level.som);
  p.match = std::move(level.match);
  p.mixture = std::move(level.mixture);
  p.scores = mixture_scores(p.mixture, p.data);
  p.gamma0_local = gamma_set(p.scores, config.score_threshold, config.score_mode);
  p.gamma0 = node.instance_set.compose(p.gamma0_local);
  p.matched_global.reserve(p.match.size());
  for (auto id : p.match.matched_instance_ids) p.matched_global.push_back(node.instance_set[id]);
  p.row_unit.reserve(p.data.n_instances());
  for (std::size_t i = 0; i < p.data.n_instances(); ++i) p.row_unit.push_back(find_bmu(p.som, p.data.row(i)).unit);
  return p;
}

/// Steps 3-7 against an already prepared parent.
inline SplitEvaluation evaluate_split(const PppNode& node, const ParentModel& parent, const PppConfig& config,
                                      RandomSeed attempt_seed, std::size_t attempt = 0) {
  SplitEvaluation ev;
  ev.seed = attempt_seed;
  ev.attempt = attempt;
  ev.gamma0 = parent.gamma0;
  const std::size_t k = parent.match.size();
  ev.gamma1 = ev.gamma2 = IndexSet::empty(k);
  ev.posteriors1 = ev.posteriors2 = Vector::Zero(static_cast<Eigen::Index>(k));
  const std::size_t n_universe = node.instance_set.universe_size();
  ev.child_instances = {IndexSet::empty(n_universe), IndexSet::empty(n_universe)};
  ev.feature_split = {IndexSet::empty(node.feature_set.universe_size()),
                      IndexSet::empty(node.feature_set.universe_size())};

  const auto& x = parent.data;
  const IndexSet all_rows = IndexSet::all(x.n_instances());
  const IndexSet all_cols = IndexSet::all(x.n_features());
  const IndexSet& kmeans_rows =
      (config.gamma_rows == GammaRows::gamma0 && parent.gamma0_local.size() >= 2) ? parent.gamma0_local : all_rows;

  KmeansResult km;
  try {
    km = kmeans_bisect(column_vectors(submatrix(x, kmeans_rows, all_cols)), derive_seed(attempt_seed, "kmeans"),
                       config.kmeans_max_iter, config.kmeans_init);
  } catch (const DegenerateSplit&) {
    ev.degenerate = true;
    return ev;
  }

  std::array<std::vector<std::size_t>, 2> cols;
  for (std::size_t j = 0; j < km.assignment.size(); ++j) cols[km.assignment[j]].push_back(j);
  const std::array<IndexSet, 2> local_cols{IndexSet(cols[0], x.n_features()), IndexSet(cols[1], x.n_features())};
  ev.feature_split = {node.feature_set.compose(local_cols[0]), node.feature_set.compose(local_cols[1])};

  // Children keep the parent's grid size.
  std::array<detail::FittedLevel, 2> child;
  for (int c = 0; c < 2; ++c) {
    SomConfig som = parent.som.config;
    som.seed = derive_seed(attempt_seed, "child-som", {std::uint64_t(c)});
    child[c] = detail::fit_level(submatrix(x, all_rows, local_cols[c]), som, config.em);
  }

  std::tie(ev.posteriors1, ev.posteriors2) = child_posterior_pair(
      parent.match, local_cols[0], child[0].mixture, local_cols[1], child[1].mixture, config.posterior_mode);
  ev.gamma1 = gamma_set(ev.posteriors1, config.score_threshold);
  ev.gamma2 = gamma_set(ev.posteriors2, config.score_threshold);

  // Overlap is measured on the matched instances; the child inherits every row its units quantize.
  auto matched_instances = [&](const IndexSet& units) {
    std::vector<std::size_t> ids;
    for (auto u : units) ids.push_back(parent.matched_global[u]);
    return IndexSet(std::move(ids), n_universe);
  };
  auto quantized_rows = [&](const IndexSet& units) {
    std::vector<std::size_t> ids;
    for (auto u : units) ids.push_back(parent.matched_global[u]);
    for (std::size_t i = 0; i < parent.row_unit.size(); ++i)
      if (units.contains(parent.row_unit[i])) ids.push_back(node.instance_set[i]);
    return IndexSet(std::move(ids), n_universe);
  };
  ev.phi1 = overlap_fraction(matched_instances(ev.gamma1), ev.gamma0);
  ev.phi2 = overlap_fraction(matched_instances(ev.gamma2), ev.gamma0);
  ev.child_instances = {quantized_rows(ev.gamma1), quantized_rows(ev.gamma2)};
  ev.phi = split_objective(ev.phi1, ev.phi2);
  return ev;
}

/// Self-contained evaluation: the parent level is fitted from a seed derived from attempt_seed.
inline SplitEvaluation evaluate_split(const PppNode& node, const DesignMatrix& data, const PppConfig& config,
                                      RandomSeed attempt_seed) {
  if (node.feature_set.size() < config.min_features_to_split || node.instance_set.size() < 2)
    throw DegenerateSelection("node too small to evaluate a split");
  const auto parent = prepare_parent(node, data, config, derive_seed(attempt_seed, "parent"));
  return evaluate_split(node, parent, config, attempt_seed);
}

inline RandomSeed node_seed(const PppConfig& config, const std::string& path) {
  return derive_seed(config.master_seed, path);
}

inline PppNode make_child(const PppNode& parent, int which, IndexSet features, IndexSet instances) {
  PppNode c;
  c.path = parent.path + std::to_string(which);
  c.depth = parent.depth + 1;
  c.feature_set = std::move(features);
  c.instance_set = std::move(instances);
  c.status = NodeStatus::leaf_terminal;
  return c;
}

/// Runs up to max_split_attempts evaluations at this node and keeps the one with the largest phi.
/// A node with no positive phi becomes leaf_unsplittable; otherwise it gets two (ungrown) children.
inline void grow_node(PppNode& node, const DesignMatrix& data, const PppConfig& config) {
  node.children.clear();
  node.attempts.clear();
  node.best_eval.reset();
  if (node.feature_set.size() < config.min_features_to_split || node.instance_set.size() < 2) {
    node.status = NodeStatus::leaf_terminal;
    return;
  }
  const RandomSeed seed = node_seed(config, node.path);
  ParentModel parent;
  try {
    parent = prepare_parent(node, data, config, derive_seed(seed, "parent"));
  } catch (const DegenerateModel& e) {
    log::info("node " + node.path + ": " + e.what());
    node.status = NodeStatus::leaf_unsplittable;
    return;
  }

  std::size_t since_improvement = 0;
  for (std::size_t r = 0; r < config.max_split_attempts; ++r) {
    auto ev = evaluate_split(node, parent, config, derive_seed(seed, "attempt", {r}), r);
    AttemptRecord rec{r, ev.phi1, ev.phi2, ev.phi, 0.0, 0.0};
    if (!ev.gamma1.empty()) {
      for (auto k : ev.gamma1) rec.mean_posterior1 += ev.posteriors1(static_cast<Eigen::Index>(k));
      rec.mean_posterior1 /= double(ev.gamma1.size());
    }
    if (!ev.gamma2.empty()) {
      for (auto k : ev.gamma2) rec.mean_posterior2 += ev.posteriors2(static_cast<Eigen::Index>(k));
      rec.mean_posterior2 /= double(ev.gamma2.size());
    }
    node.attempts.push_back(rec);
    const bool improves = ev.phi && (!node.best_eval || !node.best_eval->phi || *ev.phi > *node.best_eval->phi);
    if (improves) {
      node.best_eval = std::move(ev);
      since_improvement = 0;
    } else if (node.best_eval && node.best_eval->phi && *node.best_eval->phi > 0.0) {
      if (++since_improvement >= config.patience) break;
    }
  }

  if (!node.best_eval || !node.best_eval->phi || !(*node.best_eval->phi > 0.0)) {
    node.status = NodeStatus::leaf_unsplittable;
    return;
  }
  node.status = NodeStatus::internal;
  const auto& best = *node.best_eval;
  for (int c = 0; c < 2; ++c)
    node.children.push_back(make_child(node, c, best.feature_split[c], best.child_instances[c]));
}

namespace detail {

inline void grow_subtree(PppNode& node, const DesignMatrix& data, const PppConfig& config, std::size_t spare_threads) {
  grow_node(node, data, config);
  if (node.children.empty()) return;
  if (spare_threads > 0) {
    const std::size_t share = (spare_threads - 1) / 2;
    auto left = std::async(std::launch::async, [&] { grow_subtree(node.children[0], data, config, share); });
    grow_subtree(node.children[1], data, config, spare_threads - 1 - share);
    left.get();
  } else {
    for (auto& c : node.children) grow_subtree(c, data, config, 0);
  }
}

}  // namespace detail

/// Depth-first growth from a root holding every feature and instance.
inline PppTree build_tree(const DesignMatrix& data, const PppConfig& config) {
  config.validate();
  data.require_clusterable();
  PppTree tree;
  tree.n_instances = data.n_instances();
  tree.n_features = data.n_features();
  for (std::size_t j = 0; j < data.n_features(); ++j) tree.feature_ids.push_back(data.feature_label(j));
  tree.root.path = "r";
  tree.root.depth = 0;
  tree.root.feature_set = IndexSet::all(data.n_features());
  tree.root.instance_set = IndexSet::all(data.n_instances());
  detail::grow_subtree(tree.root, data, config, config.threads - 1);
  return tree;
}

// ---------------------------------------------------------------------------
// Cutting
// ---------------------------------------------------------------------------

struct CutTarget {
  bool leaves = true;
  int depth = 0;

  static CutTarget at_leaves() { return {true, 0}; }
  static CutTarget at_depth(int d) { return {false, d}; }
};

namespace detail {

inline void collect_cut(const PppNode& node, const CutTarget& target, std::vector<IndexSet>& out) {
  const bool stop = node.children.empty() || (!target.leaves && int(node.depth) >= target.depth);
  if (stop) {
    out.push_back(node.feature_set);
    return;
  }
  for (const auto& c : node.children) collect_cut(c, target, out);
}

}  // namespace detail

/// Feature clusters at the leaves, or at the frontier of nodes with depth <= d.
inline std::vector<IndexSet> cut_tree(const PppTree& tree, CutTarget target) {
  if (!target.leaves && target.depth < 0) throw ConfigError("cut depth must be >= 0");
  std::vector<IndexSet> out;
  detail::collect_cut(tree.root, target, out);
  return out;
}

/// Cluster label per feature from a cut.
inline std::vector<int> cut_labels(const std::vector<IndexSet>& clusters, std::size_t n_features) {
  std::vector<int> labels(n_features, -1);
  for (std::size_t c = 0; c < clusters.size(); ++c)
    for (auto f : clusters[c]) labels[f] = static_cast<int>(c);
  return labels;
}

template <typename Fn>
void visit_nodes(const PppNode& node, Fn&& fn) {
  fn(node);
  for (const auto& c : node.children) visit_nodes(c, fn);
}

inline std::size_t tree_depth(const PppNode& node) {
  std::size_t d = node.depth;
  for (const auto& c : node.children) d = std::max(d, tree_depth(c));
  return d;
}

}  // namespace ppp
