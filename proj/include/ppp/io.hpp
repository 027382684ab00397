#pragma once

#include "ppp/engine.hpp"
#include "ppp/gmm.hpp"
#include "ppp/synth.hpp"

#include "json.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace ppp::io {

using json = nlohmann::ordered_json;

struct CsvOptions {
  bool has_header = true;
  bool id_column = false;  // first column holds instance ids; also implied by a header starting with "id"
  char delimiter = ',';
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string> split(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == delim) {
      out.emplace_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.emplace_back(trim(cur));
  return out;
}

/// Shortest representation that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace detail

/// Parses a delimited numeric table. Rows become instances, columns features.
/// Cell locations in errors are 1-based (data row, file column).
inline DesignMatrix read_csv(std::istream& in, const CsvOptions& opt = {}) {
  std::string line;
  std::vector<std::string> header;
  std::vector<std::string> ids;
  std::vector<std::vector<double>> rows;
  std::size_t width = 0;
  std::size_t data_row = 0;
  bool first = true;
  bool id_column = opt.id_column;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    auto cells = detail::split(line, opt.delimiter);
    if (first && opt.has_header) {
      header = std::move(cells);
      width = header.size();
      if (!header.empty() && header[0] == "id") id_column = true;
      first = false;
      continue;
    }
    first = false;
    ++data_row;
    if (width == 0) width = cells.size();
    if (cells.size() != width)
      throw FormatError("row " + std::to_string(data_row) + " has " + std::to_string(cells.size()) +
                        " fields, expected " + std::to_string(width));
    std::vector<double> values;
    const std::size_t start = id_column ? 1 : 0;
    if (id_column) ids.push_back(cells[0]);
    for (std::size_t c = start; c < cells.size(); ++c) {
      const auto& cell = cells[c];
      double v = 0.0;
      const char* b = cell.data();
      const char* e = b + cell.size();
      if (!cell.empty() && *b == '+') ++b;
      auto [ptr, ec] = std::from_chars(b, e, v);
      if (cell.empty() || ec != std::errc() || ptr != e)
        throw ParseError(data_row, c + 1, "non-numeric cell \"" + cell + "\"");
      if (!std::isfinite(v))
        throw ValidationError("non-finite value at (" + std::to_string(data_row) + "," + std::to_string(c + 1) + ")");
      values.push_back(v);
    }
    rows.push_back(std::move(values));
  }
  if (rows.empty()) throw FormatError("no data rows");
  const std::size_t n = rows.size(), f = rows[0].size();
  if (f == 0) throw FormatError("no feature columns");
  Matrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(f));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < f; ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  std::vector<std::string> fids;
  if (!header.empty()) fids.assign(header.begin() + (id_column ? 1 : 0), header.end());
  return DesignMatrix(std::move(m), std::move(ids), std::move(fids));
}

inline DesignMatrix load_csv(const std::filesystem::path& path, const CsvOptions& opt = {}) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open input file " + path.string());
  return read_csv(in, opt);
}

/// Header row when feature ids exist; leading id column when instance ids exist.
inline void write_csv(std::ostream& os, const DesignMatrix& m, char delim = ',') {
  const bool ids = !m.instance_ids().empty();
  if (!m.feature_ids().empty()) {
    if (ids) os << "id" << delim;
    for (std::size_t j = 0; j < m.n_features(); ++j) os << (j ? std::string(1, delim) : "") << m.feature_ids()[j];
    os << '\n';
  }
  for (std::size_t i = 0; i < m.n_instances(); ++i) {
    if (ids) os << m.instance_ids()[i] << delim;
    for (std::size_t j = 0; j < m.n_features(); ++j)
      os << (j ? std::string(1, delim) : "") << detail::format_double(m(i, j));
    os << '\n';
  }
}

/// Writes to a sibling temp file and renames it into place.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write " + tmp.string());
    out << content;
    if (!out) throw FormatError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// Config snapshot and flat key = value config files
// ---------------------------------------------------------------------------

inline std::pair<std::size_t, std::size_t> parse_grid(const std::string& s) {
  const auto x = s.find_first_of("xX");
  if (x == std::string::npos) throw ConfigError("grid must look like RxC, got \"" + s + "\"");
  try {
    const auto r = std::stoul(s.substr(0, x)), c = std::stoul(s.substr(x + 1));
    return {r, c};
  } catch (const std::exception&) {
    throw ConfigError("grid must look like RxC, got \"" + s + "\"");
  }
}

namespace detail {

inline double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("invalid number for " + key + ": \"" + v + "\"");
  }
}

inline std::uint64_t to_uint(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    if (!v.empty() && v[0] == '-') throw std::invalid_argument(v);
    auto u = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return u;
  } catch (const std::exception&) {
    throw ConfigError("invalid integer for " + key + ": \"" + v + "\"");
  }
}

}  // namespace detail

/// Applies one setting by its long-flag name (without dashes). Returns false for unknown keys.
inline bool apply_setting(PppConfig& c, const std::string& key, const std::string& value) {
  using detail::to_double;
  using detail::to_uint;
  if (key == "seed") c.master_seed = RandomSeed{to_uint(key, value)};
  else if (key == "som-grid") std::tie(c.som.grid_rows, c.som.grid_cols) = parse_grid(value);
  else if (key == "som-epochs") c.som.epochs = to_uint(key, value);
  else if (key == "som-alpha-start") c.som.alpha_start = to_double(key, value);
  else if (key == "som-alpha-end") c.som.alpha_end = to_double(key, value);
  else if (key == "som-sigma-start") c.som.sigma_start = to_double(key, value);
  else if (key == "som-sigma-end") c.som.sigma_end = to_double(key, value);
  else if (key == "som-hit-quantile") c.som.hit_quantile = to_double(key, value);
  else if (key == "em-tol") c.em.tol = to_double(key, value);
  else if (key == "em-max-iter") c.em.max_iter = to_uint(key, value);
  else if (key == "reg-eps") c.em.reg_epsilon = to_double(key, value);
  else if (key == "cov-mode") {
    if (value == "full") c.em.mode = CovarianceMode::full;
    else if (value == "diag") c.em.mode = CovarianceMode::diagonal;
    else if (value == "auto") c.em.mode.reset();
    else throw ConfigError("cov-mode must be full, diag or auto");
  } else if (key == "max-split-attempts") c.max_split_attempts = to_uint(key, value);
  else if (key == "patience") c.patience = to_uint(key, value);
  else if (key == "threshold") c.score_threshold = to_double(key, value);
  else if (key == "min-features") c.min_features_to_split = to_uint(key, value);
  else if (key == "posterior-mode") {
    if (value == "competitive") c.posterior_mode = PosteriorMode::competitive;
    else if (value == "paper") c.posterior_mode = PosteriorMode::paper;
    else throw ConfigError("posterior-mode must be competitive or paper");
  } else if (key == "gamma-rows") {
    if (value == "gamma0") c.gamma_rows = GammaRows::gamma0;
    else if (value == "all") c.gamma_rows = GammaRows::all;
    else throw ConfigError("gamma-rows must be gamma0 or all");
  } else if (key == "score-mode") {
    if (value == "typicality") c.score_mode = ScoreMode::typicality;
    else if (value == "normalized") c.score_mode = ScoreMode::normalized;
    else if (value == "raw") c.score_mode = ScoreMode::raw;
    else throw ConfigError("score-mode must be typicality, normalized or raw");
  } else if (key == "kmeans-init") {
    if (value == "random") c.kmeans_init = KmeansInit::random;
    else if (value == "plusplus") c.kmeans_init = KmeansInit::plus_plus;
    else throw ConfigError("kmeans-init must be random or plusplus");
  } else if (key == "kmeans-max-iter") c.kmeans_max_iter = to_uint(key, value);
  else if (key == "threads") c.threads = to_uint(key, value);
  else return false;
  return true;
}

/// Reads `key = value` lines; `#` starts a comment. Unknown keys are returned for the caller to handle.
inline std::vector<std::pair<std::string, std::string>> read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    auto t = detail::trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string_view::npos) throw ConfigError("config line " + std::to_string(n) + " lacks '='");
    out.emplace_back(std::string(detail::trim(t.substr(0, eq))), std::string(detail::trim(t.substr(eq + 1))));
  }
  return out;
}

inline json config_to_json(const PppConfig& c) {
  return json{
      {"seed", c.master_seed.value},
      {"som_grid", c.som.grid_rows == 0 ? std::string("auto")
                                        : std::to_string(c.som.grid_rows) + "x" + std::to_string(c.som.grid_cols)},
      {"som_epochs", c.som.epochs},
      {"som_alpha_start", c.som.alpha_start},
      {"som_alpha_end", c.som.alpha_end},
      {"som_sigma_start", c.som.sigma_start},
      {"som_sigma_end", c.som.sigma_end},
      {"som_hit_quantile", c.som.hit_quantile},
      {"em_tol", c.em.tol},
      {"em_max_iter", c.em.max_iter},
      {"reg_eps", c.em.reg_epsilon},
      {"cov_mode", c.em.mode ? to_string(*c.em.mode) : "auto"},
      {"max_split_attempts", c.max_split_attempts},
      {"patience", c.patience},
      {"threshold", c.score_threshold},
      {"min_features", c.min_features_to_split},
      {"posterior_mode", to_string(c.posterior_mode)},
      {"gamma_rows", to_string(c.gamma_rows)},
      {"score_mode", to_string(c.score_mode)},
      {"kmeans_init", c.kmeans_init == KmeansInit::random ? "random" : "plusplus"},
      {"kmeans_max_iter", c.kmeans_max_iter},
  };
}

// ---------------------------------------------------------------------------
// Mixture export
// ---------------------------------------------------------------------------

inline json mixture_to_json(const GaussianMixture& g) {
  json comps = json::array();
  for (const auto& c : g.components) {
    json cov;
    if (g.covariance_mode == CovarianceMode::diagonal) {
      cov = std::vector<double>(c.covariance.diagonal().data(), c.covariance.diagonal().data() + c.covariance.rows());
    } else {
      cov = json::array();
      for (Eigen::Index r = 0; r < c.covariance.rows(); ++r) {
        std::vector<double> row(static_cast<std::size_t>(c.covariance.cols()));
        for (Eigen::Index k = 0; k < c.covariance.cols(); ++k) row[static_cast<std::size_t>(k)] = c.covariance(r, k);
        cov.push_back(row);
      }
    }
    comps.push_back({{"weight", c.weight},
                     {"mean", std::vector<double>(c.mean.data(), c.mean.data() + c.mean.size())},
                     {"covariance", cov}});
  }
  Vector w = g.weights();
  return json{{"covariance_mode", to_string(g.covariance_mode)},
              {"reg_epsilon", g.reg_epsilon},
              {"weights", std::vector<double>(w.data(), w.data() + w.size())},
              {"components", comps}};
}

// ---------------------------------------------------------------------------
// Tree export / import
// ---------------------------------------------------------------------------

namespace detail {

inline json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

inline json node_to_json(const PppNode& n, const PppTree& t) {
  json features = json::array();
  for (auto f : n.feature_set) features.push_back(t.feature_ids.empty() ? std::to_string(f) : t.feature_ids[f]);
  json trace = json::array();
  for (const auto& a : n.attempts) trace.push_back(optional_number(a.phi));
  json j{{"path", n.path},
         {"depth", n.depth},
         {"status", to_string(n.status)},
         {"feature_ids", features},
         {"feature_indices", n.feature_set.indices()},
         {"n_instances", n.instance_set.size()},
         {"instance_indices", n.instance_set.indices()},
         {"evaluations", n.evaluations()},
         {"phi_trace", trace}};
  if (n.best_eval) {
    const auto& b = *n.best_eval;
    j["gamma0_size"] = b.gamma0.size();
    j["gamma1_size"] = b.gamma1.size();
    j["gamma2_size"] = b.gamma2.size();
    j["phi1"] = b.phi1;
    j["phi2"] = b.phi2;
    j["phi"] = optional_number(b.phi);
    j["best_attempt"] = b.attempt;
    j["mean_accepted_posterior"] = b.mean_accepted_posterior();
  } else {
    j["gamma0_size"] = nullptr;
    j["gamma1_size"] = nullptr;
    j["gamma2_size"] = nullptr;
    j["phi1"] = nullptr;
    j["phi2"] = nullptr;
    j["phi"] = nullptr;
  }
  json children = json::array();
  for (const auto& c : n.children) children.push_back(node_to_json(c, t));
  j["children"] = children;
  return j;
}

inline NodeStatus status_from_string(const std::string& s) {
  if (s == "internal") return NodeStatus::internal;
  if (s == "leaf_terminal") return NodeStatus::leaf_terminal;
  if (s == "leaf_unsplittable") return NodeStatus::leaf_unsplittable;
  throw FormatError("unknown node status \"" + s + "\"");
}

inline PppNode node_from_json(const json& j, std::size_t n_features, std::size_t n_instances) {
  PppNode n;
  n.path = j.at("path").get<std::string>();
  n.depth = j.at("depth").get<std::size_t>();
  n.status = status_from_string(j.at("status").get<std::string>());
  n.feature_set = IndexSet(j.at("feature_indices").get<std::vector<std::size_t>>(), n_features);
  n.instance_set = IndexSet(j.at("instance_indices").get<std::vector<std::size_t>>(), n_instances);
  std::size_t a = 0;
  for (const auto& p : j.at("phi_trace")) {
    AttemptRecord r;
    r.attempt = a++;
    if (!p.is_null()) r.phi = p.get<double>();
    n.attempts.push_back(r);
  }
  for (const auto& c : j.at("children")) n.children.push_back(node_from_json(c, n_features, n_instances));
  if (n.status == NodeStatus::internal && n.children.size() != 2) throw FormatError("internal node without 2 children");
  return n;
}

}  // namespace detail

inline json tree_to_json(const PppTree& t) {
  return json{{"format", "ppp-tree/1"},
              {"n_instances", t.n_instances},
              {"n_features", t.n_features},
              {"feature_ids", t.feature_ids},
              {"root", detail::node_to_json(t.root, t)}};
}

/// Rebuilds the tree structure (feature and instance sets, statuses, phi traces) from its JSON export.
inline PppTree tree_from_json(const json& j) {
  if (j.value("format", "") != "ppp-tree/1") throw FormatError("not a ppp tree document");
  PppTree t;
  t.n_instances = j.at("n_instances").get<std::size_t>();
  t.n_features = j.at("n_features").get<std::size_t>();
  t.feature_ids = j.at("feature_ids").get<std::vector<std::string>>();
  t.root = detail::node_from_json(j.at("root"), t.n_features, t.n_instances);
  return t;
}

inline PppTree load_tree(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open tree file " + path.string());
  try {
    return tree_from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed tree JSON: ") + e.what());
  }
}

/// feature_id,cluster_id in feature order.
inline std::string assignment_csv(const PppTree& t, const std::vector<IndexSet>& clusters) {
  const auto labels = cut_labels(clusters, t.n_features);
  std::ostringstream os;
  os << "feature_id,cluster_id\n";
  for (std::size_t f = 0; f < t.n_features; ++f)
    os << (t.feature_ids.empty() ? std::to_string(f) : t.feature_ids[f]) << ',' << labels[f] << '\n';
  return os.str();
}

/// node_path,attempt,phi1,phi2,phi,mean_posterior1,mean_posterior2 for every evaluation.
inline std::string diagnostics_csv(const PppTree& t) {
  std::ostringstream os;
  os << "node_path,attempt,phi1,phi2,phi,mean_posterior1,mean_posterior2\n";
  visit_nodes(t.root, [&](const PppNode& n) {
    for (const auto& a : n.attempts)
      os << n.path << ',' << a.attempt << ',' << detail::format_double(a.phi1) << ',' << detail::format_double(a.phi2)
         << ',' << (a.phi ? detail::format_double(*a.phi) : "") << ',' << detail::format_double(a.mean_posterior1)
         << ',' << detail::format_double(a.mean_posterior2) << '\n';
  });
  return os.str();
}

// ---------------------------------------------------------------------------
// Stability report
// ---------------------------------------------------------------------------

inline std::string split_string(const std::vector<int>& s) {
  std::string out;
  for (int v : s) out.push_back(static_cast<char>('0' + v));
  return out;
}

inline json report_to_json(const StabilityReport& r) {
  json seeds = json::array();
  for (const auto& o : r.per_seed)
    seeds.push_back({{"seed", o.seed.value},
                     {"root_status", to_string(o.root_status)},
                     {"root_split", split_string(o.root_split)},
                     {"root_phi", detail::optional_number(o.root_phi)},
                     {"root_evaluations", o.root_evaluations},
                     {"n_leaves", o.n_leaves},
                     {"depth", o.depth}});
  return json{{"n_seeds", r.per_seed.size()},
              {"modal_split", split_string(r.modal_split)},
              {"modal_split_frequency", r.modal_split_frequency},
              {"unsplittable_roots", r.unsplittable_roots},
              {"mean_leaf_ari", r.mean_leaf_ari},
              {"min_leaf_ari", r.min_leaf_ari},
              {"pairwise_leaf_ari", r.pairwise_leaf_ari},
              {"phi", {{"mean", r.phi_mean}, {"min", r.phi_min}, {"max", r.phi_max}}},
              {"per_seed", seeds}};
}

inline std::string report_seed_csv(const StabilityReport& r) {
  std::ostringstream os;
  os << "seed,root_status,root_phi,root_evaluations,n_leaves,depth,root_split\n";
  for (const auto& o : r.per_seed)
    os << o.seed.value << ',' << to_string(o.root_status) << ','
       << (o.root_phi ? detail::format_double(*o.root_phi) : "") << ',' << o.root_evaluations << ',' << o.n_leaves
       << ',' << o.depth << ',' << split_string(o.root_split) << '\n';
  return os.str();
}

}  // namespace ppp::io
