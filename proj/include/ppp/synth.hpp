#pragma once

#include "ppp/core.hpp"
#include "ppp/engine.hpp"

#include <map>
#include <atomic>
#include <thread>

namespace ppp {

/// Gaussian block model: entry (i, j) ~ N(block_mean(block(i), block(j)), noise_sigma^2).
struct PlantedSpec {
  std::size_t n_instances = 0;
  std::size_t n_features = 0;
  std::vector<int> feature_blocks;   // block label per feature
  std::vector<int> instance_blocks;  // block label per instance
  Matrix block_means;                // instance blocks x feature blocks
  double noise_sigma = 0.0;
  RandomSeed seed{};

  void validate() const {
    if (n_instances == 0 || n_features == 0) throw ConfigError("planted spec needs a non-empty matrix");
    if (feature_blocks.size() != n_features || instance_blocks.size() != n_instances)
      throw ConfigError("planted partitions do not match the matrix shape");
    if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) throw ConfigError("noise_sigma must be >= 0");
    for (int b : instance_blocks)
      if (b < 0 || b >= block_means.rows()) throw ConfigError("instance block label outside block_means");
    for (int b : feature_blocks)
      if (b < 0 || b >= block_means.cols()) throw ConfigError("feature block label outside block_means");
  }
};

struct PlantedData {
  DesignMatrix matrix;
  std::vector<int> feature_labels;
  std::vector<int> instance_labels;
};

/// Contiguous, near-equal blocks.
inline std::vector<int> even_blocks(std::size_t n, std::size_t blocks) {
  if (blocks == 0 || blocks > n) throw ConfigError("block count must be in [1, n]");
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<int>(i * blocks / n);
  return out;
}

/// Two instance blocks by two feature blocks; block (a, b) has mean gap when a == b, else 0.
inline PlantedSpec two_block_spec(std::size_t n_instances, std::size_t n_features, double gap, double noise,
                                  RandomSeed seed) {
  PlantedSpec s;
  s.n_instances = n_instances;
  s.n_features = n_features;
  s.instance_blocks = even_blocks(n_instances, 2);
  s.feature_blocks = even_blocks(n_features, 2);
  s.block_means = Matrix{{gap, 0.0}, {0.0, gap}};
  s.noise_sigma = noise;
  s.seed = seed;
  return s;
}

/// R x C block grid where instance block a is high (mean = gap) on feature block b iff b mod R == a.
/// Feature blocks are pairwise distinguishable when C <= R.
inline PlantedSpec grid_block_spec(std::size_t n_instances, std::size_t n_features, std::size_t inst_blocks,
                                   std::size_t feat_blocks, double gap, double noise, RandomSeed seed) {
  PlantedSpec s;
  s.n_instances = n_instances;
  s.n_features = n_features;
  s.instance_blocks = even_blocks(n_instances, inst_blocks);
  s.feature_blocks = even_blocks(n_features, feat_blocks);
  s.block_means = Matrix::Zero(static_cast<Eigen::Index>(inst_blocks), static_cast<Eigen::Index>(feat_blocks));
  for (std::size_t b = 0; b < feat_blocks; ++b)
    s.block_means(static_cast<Eigen::Index>(b % inst_blocks), static_cast<Eigen::Index>(b)) = gap;
  s.noise_sigma = noise;
  s.seed = seed;
  return s;
}

/// Two-level nested structure over 4 feature blocks and 4 instance blocks.
/// Feature blocks {0,1} vs {2,3} differ by top_gap; inside each half the pair differs by sub_gap.
inline PlantedSpec hierarchical_spec(std::size_t n_instances, std::size_t n_features, double top_gap,
                                     double sub_gap, double noise, RandomSeed seed) {
  PlantedSpec s;
  s.n_instances = n_instances;
  s.n_features = n_features;
  s.instance_blocks = even_blocks(n_instances, 4);
  s.feature_blocks = even_blocks(n_features, 4);
  s.block_means = Matrix::Zero(4, 4);
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b) {
      const double top = (a / 2 == b / 2) ? top_gap : 0.0;
      const double sub = (a % 2 == b % 2) ? sub_gap : 0.0;
      s.block_means(a, b) = top + sub;
    }
  s.noise_sigma = noise;
  s.seed = seed;
  return s;
}

inline PlantedData generate_planted(const PlantedSpec& spec) {
  spec.validate();
  Rng rng = make_rng(derive_seed(spec.seed, "planted"));
  std::normal_distribution<double> noise(0.0, 1.0);
  Matrix x(static_cast<Eigen::Index>(spec.n_instances), static_cast<Eigen::Index>(spec.n_features));
  for (std::size_t i = 0; i < spec.n_instances; ++i)
    for (std::size_t j = 0; j < spec.n_features; ++j) {
      const double mean = spec.block_means(spec.instance_blocks[i], spec.feature_blocks[j]);
      const double eps = spec.noise_sigma > 0.0 ? spec.noise_sigma * noise(rng) : 0.0;
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = mean + eps;
    }
  std::vector<std::string> fids, iids;
  for (std::size_t j = 0; j < spec.n_features; ++j) fids.push_back("f" + std::to_string(j));
  for (std::size_t i = 0; i < spec.n_instances; ++i) iids.push_back("i" + std::to_string(i));
  return {DesignMatrix(std::move(x), std::move(iids), std::move(fids)), spec.feature_blocks, spec.instance_blocks};
}

/// Adjusted Rand index (Hubert & Arabie) from the contingency table.
inline double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) throw DimensionError("labelings differ in length");
  const std::size_t n = a.size();
  if (n < 2) return 1.0;
  std::map<std::pair<int, int>, double> table;
  std::map<int, double> rows, cols;
  for (std::size_t i = 0; i < n; ++i) {
    table[{a[i], b[i]}] += 1.0;
    rows[a[i]] += 1.0;
    cols[b[i]] += 1.0;
  }
  auto c2 = [](double v) { return v * (v - 1.0) / 2.0; };
  double index = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (const auto& [_, v] : table) index += c2(v);
  for (const auto& [_, v] : rows) sum_a += c2(v);
  for (const auto& [_, v] : cols) sum_b += c2(v);
  const double expected = sum_a * sum_b / c2(double(n));
  const double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) return 1.0;  // both trivial (all-one-cluster or all-singletons) and equal structure
  return (index - expected) / (max_index - expected);
}

struct SeedOutcome {
  RandomSeed seed{};
  NodeStatus root_status = NodeStatus::leaf_terminal;
  std::vector<int> root_split;  // canonical 0/1 per feature (feature 0 -> 0); empty when the root did not split
  std::optional<double> root_phi;
  std::size_t root_evaluations = 0;
  std::vector<int> leaf_labels;
  std::size_t n_leaves = 0;
  std::size_t depth = 0;
};

struct StabilityReport {
  std::vector<SeedOutcome> per_seed;
  double modal_split_frequency = 0.0;
  std::vector<int> modal_split;
  std::vector<double> pairwise_leaf_ari;
  double mean_leaf_ari = 0.0;
  double min_leaf_ari = 0.0;
  double phi_mean = 0.0, phi_min = 0.0, phi_max = 0.0;
  std::size_t unsplittable_roots = 0;
};

inline std::vector<int> canonical_split(const PppTree& tree) {
  if (tree.root.status != NodeStatus::internal) return {};
  std::vector<int> labels(tree.n_features, 0);
  for (auto f : tree.root.children[1].feature_set) labels[f] = 1;
  if (labels[0] == 1)
    for (auto& l : labels) l = 1 - l;
  return labels;
}

inline SeedOutcome summarize_tree(const PppTree& tree, RandomSeed seed) {
  SeedOutcome o;
  o.seed = seed;
  o.root_status = tree.root.status;
  o.root_split = canonical_split(tree);
  if (tree.root.best_eval) o.root_phi = tree.root.best_eval->phi;
  o.root_evaluations = tree.root.evaluations();
  const auto leaves = cut_tree(tree, CutTarget::at_leaves());
  o.leaf_labels = cut_labels(leaves, tree.n_features);
  o.n_leaves = leaves.size();
  o.depth = tree_depth(tree.root);
  return o;
}

/// One tree per master seed; reports root-split agreement and the leaf-clustering ARI spread.
inline StabilityReport repeatability_trial(const DesignMatrix& data, PppConfig config,
                                           const std::vector<RandomSeed>& seeds, std::size_t threads = 1) {
  if (seeds.size() < 2) throw ConfigError("repeatability needs at least 2 seeds");
  config.validate();
  data.require_clusterable();
  StabilityReport rep;
  rep.per_seed.resize(seeds.size());
  config.threads = 1;
  auto run = [&](std::size_t i) {
    PppConfig c = config;
    c.master_seed = seeds[i];
    rep.per_seed[i] = summarize_tree(build_tree(data, c), seeds[i]);
  };
  if (threads <= 1) {
    for (std::size_t i = 0; i < seeds.size(); ++i) run(i);
  } else {
    std::vector<std::thread> pool;
    std::atomic<std::size_t> next{0};
    for (std::size_t t = 0; t < std::min(threads, seeds.size()); ++t)
      pool.emplace_back([&] {
        for (std::size_t i; (i = next.fetch_add(1)) < seeds.size();) run(i);
      });
    for (auto& th : pool) th.join();
  }

  std::map<std::vector<int>, std::size_t> counts;
  for (const auto& o : rep.per_seed) {
    ++counts[o.root_split];
    if (o.root_status != NodeStatus::internal) ++rep.unsplittable_roots;
  }
  std::size_t best = 0;
  for (const auto& [split, n] : counts)
    if (n > best) {
      best = n;
      rep.modal_split = split;
    }
  rep.modal_split_frequency = double(best) / double(seeds.size());

  for (std::size_t i = 0; i < seeds.size(); ++i)
    for (std::size_t j = i + 1; j < seeds.size(); ++j)
      rep.pairwise_leaf_ari.push_back(adjusted_rand_index(rep.per_seed[i].leaf_labels, rep.per_seed[j].leaf_labels));
  if (!rep.pairwise_leaf_ari.empty()) {
    double s = 0.0;
    rep.min_leaf_ari = rep.pairwise_leaf_ari.front();
    for (double v : rep.pairwise_leaf_ari) s += v, rep.min_leaf_ari = std::min(rep.min_leaf_ari, v);
    rep.mean_leaf_ari = s / double(rep.pairwise_leaf_ari.size());
  }
  std::vector<double> phis;
  for (const auto& o : rep.per_seed)
    if (o.root_phi) phis.push_back(*o.root_phi);
  if (!phis.empty()) {
    rep.phi_min = *std::min_element(phis.begin(), phis.end());
    rep.phi_max = *std::max_element(phis.begin(), phis.end());
    double s = 0.0;
    for (double v : phis) s += v;
    rep.phi_mean = s / double(phis.size());
  }
  return rep;
}

}  // namespace ppp
