// ppp: command-line driver for the PPP feature-space clustering library.

#include "ppp/io.hpp"
#include "ppp/synth.hpp"

#include "CLI11.hpp"

#include <chrono>
#include <iomanip>

namespace {

constexpr const char* kVersion = "1.0.0";

namespace fs = std::filesystem;
using ppp::io::json;

// Exit codes.
constexpr int kOk = 0;
constexpr int kPipeline = 1;
constexpr int kUsage = 2;

/// Settings shared by cluster and bench. Keys match the config-file keys.
const std::vector<std::pair<std::string, std::string>> kSettings = {
    {"seed", "master seed"},
    {"som-grid", "SOM grid RxC (default: derived from the node size)"},
    {"som-epochs", "SOM epochs"},
    {"em-tol", "EM relative log-likelihood tolerance"},
    {"em-max-iter", "EM iteration cap"},
    {"cov-mode", "covariance mode: full, diag or auto"},
    {"reg-eps", "covariance floor (0 = derived from the data)"},
    {"max-split-attempts", "bisection attempts per node"},
    {"patience", "attempts without improvement before stopping"},
    {"threshold", "score/posterior threshold for the gamma sets"},
    {"posterior-mode", "competitive or paper"},
    {"gamma-rows", "rows used to cluster columns: gamma0 or all"},
    {"score-mode", "gamma0 score: typicality, normalized or raw"},
    {"kmeans-init", "random or plusplus"},
    {"threads", "worker threads"},
};

struct Settings {
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;
  std::string config_file;

  void attach(CLI::App* app) {
    for (const auto& [key, help] : kSettings) options[key] = app->add_option("--" + key, values[key], help);
    app->add_option("--config", config_file, "flat key = value config file")->check(CLI::ExistingFile);
  }

  /// defaults < config file < flags
  ppp::PppConfig resolve() const {
    ppp::PppConfig c;
    if (!config_file.empty())
      for (const auto& [k, v] : ppp::io::read_config_file(config_file))
        if (!ppp::io::apply_setting(c, k, v)) throw ppp::ConfigError("unknown config key \"" + k + "\"");
    for (const auto& [key, opt] : options)
      if (opt->count() > 0) ppp::io::apply_setting(c, key, values.at(key));
    c.validate();
    return c;
  }
};

struct CsvFlags {
  std::string input;
  bool no_header = false;
  bool id_column = false;
  char delimiter = ',';

  void attach(CLI::App* app, bool required) {
    auto* o = app->add_option("--input", input, "numeric CSV; rows are instances, columns features");
    if (required) o->required();
    app->add_flag("--no-header", no_header, "the first row is data");
    app->add_flag("--id-column", id_column, "the first column holds instance ids");
    app->add_option("--delimiter", delimiter, "field delimiter");
  }

  ppp::DesignMatrix load() const {
    return ppp::io::load_csv(input, {!no_header, id_column, delimiter});
  }
};

struct SynthFlags {
  std::string blocks = "2x2";
  double noise = 1.0;
  double gap = 4.0;
  std::size_t n_instances = 400;
  std::size_t n_features = 40;
  std::uint64_t seed = 0;

  void attach(CLI::App* app) {
    app->add_option("--blocks", blocks, "instance blocks x feature blocks")->capture_default_str();
    app->add_option("--noise", noise, "noise sigma")->capture_default_str();
    app->add_option("--gap", gap, "block mean gap")->capture_default_str();
    app->add_option("--n-instances", n_instances)->capture_default_str();
    app->add_option("--n-features", n_features)->capture_default_str();
  }

  ppp::PlantedData generate(std::uint64_t s) const {
    const auto [r, c] = ppp::io::parse_grid(blocks);
    if (r == 0 || c == 0) throw ppp::ConfigError("--blocks needs positive counts");
    if (r > n_instances || c > n_features) throw ppp::ConfigError("more blocks than rows or columns");
    return ppp::generate_planted(ppp::grid_block_spec(n_instances, n_features, r, c, gap, noise, ppp::RandomSeed{s}));
  }
};

std::vector<ppp::RandomSeed> parse_seeds(const std::string& s) {
  std::vector<ppp::RandomSeed> out;
  auto num = [&](const std::string& t) {
    try {
      std::size_t pos = 0;
      auto v = std::stoull(t, &pos);
      if (pos != t.size()) throw std::invalid_argument(t);
      return v;
    } catch (const std::exception&) {
      throw ppp::ConfigError("bad seed list \"" + s + "\"");
    }
  };
  if (auto dots = s.find(".."); dots != std::string::npos) {
    const auto a = num(s.substr(0, dots)), b = num(s.substr(dots + 2));
    if (b < a) throw ppp::ConfigError("empty seed range \"" + s + "\"");
    for (auto v = a; v <= b; ++v) out.push_back({v});
    return out;
  }
  std::stringstream ss(s);
  for (std::string t; std::getline(ss, t, ',');) out.push_back({num(t)});
  return out;
}

void write_text(const fs::path& path, const std::string& text) { ppp::io::write_file_atomic(path, text); }

void prepare_out_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw ppp::FormatError("cannot create output directory " + dir.string());
}

std::vector<ppp::IndexSet> cut(const ppp::PppTree& tree, int depth) {
  return ppp::cut_tree(tree, depth < 0 ? ppp::CutTarget::at_leaves() : ppp::CutTarget::at_depth(depth));
}

void print_summary(const ppp::PppTree& tree, std::size_t n_clusters) {
  std::map<std::size_t, std::vector<double>> phi_by_depth;
  std::size_t leaves = 0, unsplittable = 0;
  ppp::visit_nodes(tree.root, [&](const ppp::PppNode& n) {
    if (n.status == ppp::NodeStatus::internal) phi_by_depth[n.depth].push_back(*n.best_eval->phi);
    else ++leaves;
    if (n.status == ppp::NodeStatus::leaf_unsplittable) ++unsplittable;
  });
  std::cout << "leaves: " << leaves << " (" << unsplittable << " unsplittable), depth " << ppp::tree_depth(tree.root)
            << ", clusters written: " << n_clusters << '\n';
  std::cout << "depth  splits  phi_mean  phi_min  phi_max\n";
  for (const auto& [d, v] : phi_by_depth) {
    double s = 0.0;
    for (double x : v) s += x;
    std::cout << std::setw(5) << d << std::setw(8) << v.size() << std::fixed << std::setprecision(3) << std::setw(10)
              << s / double(v.size()) << std::setw(9) << *std::min_element(v.begin(), v.end()) << std::setw(9)
              << *std::max_element(v.begin(), v.end()) << '\n';
    std::cout.unsetf(std::ios::fixed);
  }
}

int run_cluster(const CsvFlags& csv, const Settings& settings, const std::string& out, int cut_depth) {
  const auto started = std::chrono::steady_clock::now();
  const auto config = settings.resolve();
  const auto data = csv.load();
  data.require_clusterable();
  const fs::path dir(out);
  prepare_out_dir(dir);

  const auto tree = ppp::build_tree(data, config);
  const auto clusters = cut(tree, cut_depth);

  const fs::path tree_path = dir / "tree.json", assign_path = dir / "assignments.csv",
                 diag_path = dir / "diagnostics.csv", manifest_path = dir / "manifest.json";
  write_text(tree_path, ppp::io::tree_to_json(tree).dump(2) + "\n");
  write_text(assign_path, ppp::io::assignment_csv(tree, clusters));
  write_text(diag_path, ppp::io::diagnostics_csv(tree));

  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  json manifest{{"tool", "ppp"},
                {"version", kVersion},
                {"command", "cluster"},
                {"input", csv.input},
                {"csv", {{"has_header", !csv.no_header}, {"id_column", csv.id_column}, {"delimiter", std::string(1, csv.delimiter)}}},
                {"seed", config.master_seed.value},
                {"config", ppp::io::config_to_json(config)},
                {"cut_depth", cut_depth < 0 ? json("leaves") : json(cut_depth)},
                {"wall_clock_seconds", secs},
                {"outputs", {tree_path.string(), assign_path.string(), diag_path.string()}}};
  write_text(manifest_path, manifest.dump(2) + "\n");
  print_summary(tree, clusters.size());
  return kOk;
}

int run_synth(const SynthFlags& flags, const std::string& out) {
  const auto planted = flags.generate(flags.seed);
  if (out.empty()) {
    ppp::io::write_csv(std::cout, planted.matrix);
    return kOk;
  }
  const fs::path dir(out);
  prepare_out_dir(dir);
  std::ostringstream data, truth;
  ppp::io::write_csv(data, planted.matrix);
  truth << "feature_id,block\n";
  for (std::size_t j = 0; j < planted.feature_labels.size(); ++j)
    truth << planted.matrix.feature_ids()[j] << ',' << planted.feature_labels[j] << '\n';
  write_text(dir / "data.csv", data.str());
  write_text(dir / "feature_truth.csv", truth.str());
  std::cout << "wrote " << (dir / "data.csv").string() << '\n';
  return kOk;
}

int run_bench(const CsvFlags& csv, const SynthFlags& synth, const Settings& settings, const std::string& seeds_arg,
              const std::string& out) {
  auto config = settings.resolve();
  const auto seeds = parse_seeds(seeds_arg);
  if (seeds.size() < 2) throw ppp::ConfigError("bench needs at least 2 seeds");
  const auto data = csv.input.empty() ? synth.generate(synth.seed).matrix : csv.load();
  data.require_clusterable();
  const auto report = ppp::repeatability_trial(data, config, seeds, config.threads);
  const auto doc = ppp::io::report_to_json(report);
  if (out.empty()) {
    std::cout << doc.dump(2) << '\n';
  } else {
    const fs::path dir(out);
    prepare_out_dir(dir);
    write_text(dir / "report.json", doc.dump(2) + "\n");
    write_text(dir / "seeds.csv", ppp::io::report_seed_csv(report));
  }
  std::cerr << "modal root split frequency " << report.modal_split_frequency << ", mean leaf ARI "
            << report.mean_leaf_ari << ", unsplittable roots " << report.unsplittable_roots << '\n';
  return kOk;
}

int run_cut(const std::string& tree_path, int cut_depth, const std::string& out) {
  const auto tree = ppp::io::load_tree(tree_path);
  const auto text = ppp::io::assignment_csv(tree, cut(tree, cut_depth));
  if (out.empty()) {
    std::cout << text;
    return kOk;
  }
  const fs::path dir(out);
  prepare_out_dir(dir);
  write_text(dir / "assignments.csv", text);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PPP divisive feature-space clustering"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  CsvFlags csv;
  Settings cluster_settings, bench_settings;
  SynthFlags synth;
  std::string out, seeds_arg = "1..10", tree_path;
  int cut_depth = -1;

  auto* cluster = app.add_subcommand("cluster", "build a tree and write tree, assignment, diagnostics and manifest");
  csv.attach(cluster, true);
  cluster_settings.attach(cluster);
  cluster->add_option("--out", out, "output directory")->required();
  cluster->add_option("--cut-depth", cut_depth, "cut depth for the assignment (default: leaves)");

  auto* synth_cmd = app.add_subcommand("synth", "generate a planted block dataset");
  synth.attach(synth_cmd);
  synth_cmd->add_option("--seed", synth.seed, "generator seed");
  synth_cmd->add_option("--out", out, "output directory (default: CSV to stdout)");

  auto* bench = app.add_subcommand("bench", "repeatability trial over master seeds");
  csv.attach(bench, false);
  bench_settings.attach(bench);
  synth.attach(bench);
  bench->add_option("--data-seed", synth.seed, "generator seed when no --input is given");
  bench->add_option("--seeds", seeds_arg, "master seeds: A..B or a comma list")->capture_default_str();
  bench->add_option("--out", out, "output directory (default: JSON to stdout)");

  auto* cut_cmd = app.add_subcommand("cut", "re-cut a saved tree");
  cut_cmd->add_option("--tree", tree_path, "tree JSON from ppp cluster")->required();
  cut_cmd->add_option("--cut-depth", cut_depth, "cut depth (default: leaves)");
  cut_cmd->add_option("--out", out, "output directory (default: CSV to stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (cut_depth < -1) throw ppp::ConfigError("--cut-depth must be >= 0");
    if (*cluster) return run_cluster(csv, cluster_settings, out, cut_depth);
    if (*synth_cmd) return run_synth(synth, out);
    if (*bench) return run_bench(csv, synth, bench_settings, seeds_arg, out);
    if (*cut_cmd) return run_cut(tree_path, cut_depth, out);
  } catch (const ppp::ParseError& e) {
    std::cerr << "error: input: " << e.what() << '\n';
    return kUsage;
  } catch (const ppp::FormatError& e) {
    std::cerr << "error: input: " << e.what() << '\n';
    return kUsage;
  } catch (const ppp::ValidationError& e) {
    std::cerr << "error: input: " << e.what() << '\n';
    return kUsage;
  } catch (const ppp::ConfigError& e) {
    std::cerr << "error: config: " << e.what() << '\n';
    return kUsage;
  } catch (const ppp::Error& e) {
    std::cerr << "error: pipeline: " << e.what() << '\n';
    return kPipeline;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kPipeline;
  }
  return kUsage;
}
