#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <json.hpp>

#include "elgof/elgof.hpp"

namespace elgof::cli {

/// Malformed input (data or config); maps to exit code 2.
class InputError : public std::runtime_error {
 public:
  InputError(const std::string& source, std::size_t line, std::size_t column, const std::string& what)
      : std::runtime_error(format(source, line, column, what)), line_(line), column_(column) {}

  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  static std::string format(const std::string& source, std::size_t line, std::size_t column, const std::string& what) {
    std::ostringstream os;
    os << source;
    if (line > 0) os << ':' << line << ':' << column;
    os << ": " << what;
    return os.str();
  }
  std::size_t line_;
  std::size_t column_;
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

inline std::optional<double> to_double(const std::string& s) {
  const std::string t = trim(s);
  if (t.empty()) return std::nullopt;
  double v = 0.0;
  const char* first = t.data();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

}  // namespace detail

/// Reads a CSV with a header row naming covariates x1..xd and responses
/// y1..yk (any order, other columns ignored).
inline Sample parse_sample_csv(std::istream& in, const std::string& source) {
  std::string line;
  std::size_t lineno = 0;
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s) {
      if (ch == ',') {
        out.push_back(cur);
        cur.clear();
      } else if (ch != '\r') {
        cur += ch;
      }
    }
    out.push_back(cur);
    return out;
  };
  if (!std::getline(in, line)) throw InputError(source, 1, 1, "empty file, expected a header row");
  ++lineno;
  const auto header = split(line);
  std::map<std::string, std::size_t> index;
  int max_x = 0, max_y = 0;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string name = detail::trim(header[c]);
    if (index.count(name)) throw InputError(source, 1, c + 1, "duplicate column '" + name + "'");
    index[name] = c;
    if (name.size() > 1 && (name[0] == 'x' || name[0] == 'y')) {
      int v = 0;
      const auto [p, ec] = std::from_chars(name.data() + 1, name.data() + name.size(), v);
      int& top = name[0] == 'x' ? max_x : max_y;
      if (ec == std::errc() && p == name.data() + name.size() && v > 0) top = std::max(top, v);
    }
  }
  if (max_x == 0) throw InputError(source, 1, 0, "missing column 'x1'");
  if (max_y == 0) throw InputError(source, 1, 0, "missing column 'y1'");
  std::vector<std::size_t> xcol, ycol;
  for (int j = 1; j <= max_x; ++j) {
    const auto it = index.find("x" + std::to_string(j));
    if (it == index.end()) throw InputError(source, 1, 0, "missing column 'x" + std::to_string(j) + "'");
    xcol.push_back(it->second);
  }
  for (int j = 1; j <= max_y; ++j) {
    const auto it = index.find("y" + std::to_string(j));
    if (it == index.end()) throw InputError(source, 1, 0, "missing column 'y" + std::to_string(j) + "'");
    ycol.push_back(it->second);
  }
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto cells = split(line);
    if (cells.size() != header.size()) {
      throw InputError(source, lineno, std::min(cells.size(), header.size()) + 1,
                       "expected " + std::to_string(header.size()) + " fields, found " + std::to_string(cells.size()));
    }
    std::vector<double> row;
    for (auto c : xcol) {
      const auto v = detail::to_double(cells[c]);
      if (!v) throw InputError(source, lineno, c + 1, "not a number: '" + cells[c] + "'");
      row.push_back(*v);
    }
    for (auto c : ycol) {
      const auto v = detail::to_double(cells[c]);
      if (!v) throw InputError(source, lineno, c + 1, "not a number: '" + cells[c] + "'");
      row.push_back(*v);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw InputError(source, lineno, 1, "no data rows");
  Sample s{Eigen::MatrixXd(static_cast<Eigen::Index>(rows.size()), max_x),
           Eigen::MatrixXd(static_cast<Eigen::Index>(rows.size()), max_y)};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (int j = 0; j < max_x; ++j) s.X(static_cast<Eigen::Index>(i), j) = rows[i][static_cast<std::size_t>(j)];
    for (int j = 0; j < max_y; ++j) s.Y(static_cast<Eigen::Index>(i), j) = rows[i][static_cast<std::size_t>(max_x + j)];
  }
  return s;
}

/// Keys accepted in config files, environment and flags.
inline const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys{
      "model", "alpha", "boot", "h0", "h1", "h_grid", "seed", "workers", "out_dir", "pi_lo", "pi_hi",
      "normalize_pi", "kernel", "multiplier", "b", "d1", "inner", "derived_mode", "quadrature", "nodes",
      "gauss_order", "beta", "table", "study_model", "n", "reps", "a", "c", "g1", "g2", "d", "k", "data"};
  return keys;
}

/// Effective configuration: value plus where it came from, for diagnostics.
class Config {
 public:
  struct Entry {
    std::string value;
    std::string source;
    std::size_t line = 0;
  };

  void set(const std::string& key, std::string value, std::string source, std::size_t line = 0) {
    if (std::find(known_keys().begin(), known_keys().end(), key) == known_keys().end()) {
      throw InputError(source, line, 1, "unknown key '" + key + "'");
    }
    entries_[key] = Entry{std::move(value), std::move(source), line};
  }

  bool has(const std::string& key) const { return entries_.count(key) > 0; }
  const std::map<std::string, Entry>& entries() const { return entries_; }

  std::string str(const std::string& key, const std::string& fallback) const {
    const auto it = entries_.find(key);
    return it == entries_.end() ? fallback : it->second.value;
  }

  double num(const std::string& key, double fallback) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    const auto v = detail::to_double(it->second.value);
    if (!v) fail(it->second, "'" + key + "' must be a number, got '" + it->second.value + "'");
    return *v;
  }

  long long integer(const std::string& key, long long fallback, long long min = 0) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    const std::string t = detail::trim(it->second.value);
    long long v = 0;
    const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || p != t.data() + t.size() || t.empty()) {
      fail(it->second, "'" + key + "' must be an integer, got '" + it->second.value + "'");
    }
    if (v < min) fail(it->second, "'" + key + "' must be at least " + std::to_string(min));
    return v;
  }

  std::uint64_t seed(const std::string& key, std::uint64_t fallback) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    const std::string t = detail::trim(it->second.value);
    std::uint64_t v = 0;
    const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || p != t.data() + t.size() || t.empty()) {
      fail(it->second, "'" + key + "' must be a non-negative integer");
    }
    return v;
  }

  bool boolean(const std::string& key, bool fallback) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    const std::string v = detail::trim(it->second.value);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    fail(it->second, "'" + key + "' must be true or false");
  }

  std::vector<double> numbers(const std::string& key) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) return {};
    std::vector<double> out;
    std::stringstream ss(it->second.value);
    std::string item;
    while (std::getline(ss, item, ',')) {
      const auto v = detail::to_double(item);
      if (!v) fail(it->second, "'" + key + "' must be a comma-separated list of numbers");
      out.push_back(*v);
    }
    return out;
  }

  std::vector<std::string> words(const std::string& key) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) return {};
    std::vector<std::string> out;
    std::stringstream ss(it->second.value);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(detail::trim(item));
    return out;
  }

  /// Re-throws a library validation error against the entry it came from.
  template <class F>
  auto checked(const std::string& key, F&& f) const {
    try {
      return f();
    } catch (const std::invalid_argument& e) {
      const auto it = entries_.find(key);
      if (it == entries_.end()) throw InputError("config", 0, 0, e.what());
      fail(it->second, e.what());
    }
  }

  /// SHA-256 over the sorted key=value lines, leaving out keys that cannot
  /// change results.
  std::string digest() const {
    std::string text;
    for (const auto& [k, e] : entries_) {
      if (k == "workers" || k == "out_dir") continue;
      text += k + "=" + detail::trim(e.value) + "\n";
    }
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(text.data(), text.size(), md, &len, EVP_sha256(), nullptr);
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
    return os.str();
  }

 private:
  [[noreturn]] static void fail(const Entry& e, const std::string& what) {
    throw InputError(e.source, e.line, e.line ? 1 : 0, what);
  }
  std::map<std::string, Entry> entries_;
};

/// Flat key=value file; '#' starts a comment. Keys may use '-' or '_'.
inline void parse_config(std::istream& in, const std::string& source, Config& cfg) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    const std::string body = hash == std::string::npos ? line : line.substr(0, hash);
    if (detail::trim(body).empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      const auto col = body.find_first_not_of(" \t");
      throw InputError(source, lineno, col + 1, "expected key=value");
    }
    std::string key = detail::trim(body.substr(0, eq));
    std::replace(key.begin(), key.end(), '-', '_');
    if (key.empty()) throw InputError(source, lineno, 1, "empty key");
    cfg.set(key, detail::trim(body.substr(eq + 1)), source, lineno);
  }
}

/// ELGOF_<KEY> environment variables override file values.
inline void apply_environment(Config& cfg) {
  for (const auto& key : known_keys()) {
    std::string var = "ELGOF_";
    for (char ch : key) var += static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    if (const char* v = std::getenv(var.c_str())) cfg.set(key, v, var);
  }
}

inline std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct RunManifest {
  std::string command;
  std::string config_digest;
  std::uint64_t seed = 0;
  std::string library_version = version;
  std::string started;
  std::string finished;
  std::vector<std::string> outputs;
  std::map<std::string, std::string> config;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["command"] = command;
    j["config_digest"] = config_digest;
    j["seed"] = seed;
    j["library_version"] = library_version;
    j["started"] = started;
    j["finished"] = finished;
    j["outputs"] = outputs;
    j["config"] = config;
    return j;
  }

  void write(const std::filesystem::path& path) const {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << to_json().dump(2) << '\n';
  }
};

inline RunManifest start_manifest(const std::string& command, const Config& cfg, std::uint64_t seed) {
  RunManifest m;
  m.command = command;
  m.config_digest = cfg.digest();
  m.seed = seed;
  m.started = utc_now();
  for (const auto& [k, e] : cfg.entries()) m.config[k] = e.value;
  return m;
}

inline std::filesystem::path prepare_out_dir(const Config& cfg) {
  std::filesystem::path dir = cfg.str("out_dir", "elgof-out");
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::ofstream open_out(const std::filesystem::path& path, RunManifest& m) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  m.outputs.push_back(path.filename().string());
  return f;
}

inline WeightFunction weight_from(const Config& cfg, std::size_t d) {
  const double lo = cfg.num("pi_lo", 0.1);
  const double hi = cfg.num("pi_hi", 0.9);
  WeightFunction pi = WeightFunction::box(d, lo, hi, cfg.boolean("normalize_pi", true));
  try {
    pi.validate();
  } catch (const InvalidWeight& e) {
    throw InputError("config", 0, 0, std::string("pi_lo/pi_hi: ") + e.what());
  }
  return pi;
}

inline QuadraturePolicy quadrature_from(const Config& cfg) {
  QuadraturePolicy q;
  const std::string rule = cfg.str("quadrature", "midpoint_auto");
  if (rule == "midpoint_auto") q.rule = QuadraturePolicy::Rule::midpoint_auto;
  else if (rule == "midpoint_fixed") q.rule = QuadraturePolicy::Rule::midpoint_fixed;
  else if (rule == "kink_aligned") q.rule = QuadraturePolicy::Rule::kink_aligned;
  else cfg.checked("quadrature", [&]() -> int { throw std::invalid_argument("unknown quadrature rule '" + rule + "'"); });
  q.nodes_per_axis = static_cast<std::size_t>(cfg.integer("nodes", 64, 1));
  q.gauss_order = static_cast<int>(cfg.integer("gauss_order", 4, 1));
  return q;
}

inline BootstrapConfig boot_from(const Config& cfg) {
  BootstrapConfig b;
  b.N = static_cast<std::size_t>(cfg.integer("boot", 199, 1));
  b.alpha = cfg.num("alpha", 0.05);
  b.seed = cfg.seed("seed", 1);
  b.multiplier = cfg.checked("multiplier", [&] { return multiplier_from_string(cfg.str("multiplier", "rademacher")); });
  cfg.checked("alpha", [&] {
    b.validate();
    return 0;
  });
  return b;
}

inline std::vector<double> h_grid_from(const Config& cfg) {
  const double h0 = cfg.num("h0", 0.22), h1 = cfg.num("h1", 0.28);
  const auto count = static_cast<std::size_t>(cfg.integer("h_grid", 4, 1));
  return cfg.checked("h0", [&] { return linear_bandwidth_grid(h0, h1, count); });
}

/// Fits the null, calibrates it and writes report.csv, outcome.csv,
/// report.txt and manifest.json.
inline int cmd_test(const Config& cfg, std::ostream& out) {
  RunManifest manifest = start_manifest("test", cfg, cfg.seed("seed", 1));
  const std::string data = cfg.str("data", "");
  if (data.empty()) throw InputError("arguments", 0, 0, "--data is required");
  std::ifstream in(data);
  if (!in) throw InputError(data, 0, 0, "cannot open data file");
  const Sample sample = parse_sample_csv(in, data);
  const ModelKind kind = cfg.checked("model", [&] { return model_kind_from_string(cfg.str("model", "linear")); });

  TestConfig tc;
  tc.boot = boot_from(cfg);
  tc.h_grid = h_grid_from(cfg);
  tc.beta = cfg.numbers("beta");
  tc.kernel = cfg.checked("kernel", [&] { return KernelSpec::from_name(cfg.str("kernel", "triangular")); });
  tc.pi = weight_from(cfg, static_cast<std::size_t>(sample.d()));
  tc.quadrature = quadrature_from(cfg);
  if (cfg.has("b")) tc.fit.b = cfg.num("b", 0.0);
  tc.fit.d1 = cfg.integer("d1", 1, 1);
  tc.fit.inner = cfg.checked("inner", [&] { return model_kind_from_string(cfg.str("inner", "plm")); });
  tc.fit.kernel = tc.kernel;
  tc.derived_mode =
      cfg.checked("derived_mode", [&] { return derived_bootstrap_from_string(cfg.str("derived_mode", "standardized")); });
  tc.workers = static_cast<std::size_t>(cfg.integer("workers", 0, 0));
  try {
    sample.validate();
  } catch (const std::invalid_argument& e) {
    throw InputError(data, 0, 0, e.what());
  }

  const TestOutcome res = run_test(sample, kind, tc);
  const auto dir = prepare_out_dir(cfg);
  char buf[512];
  {
    auto f = open_out(dir / "report.csv", manifest);
    f << "h,lambda_n,standardized,capped_nodes,dropped_nodes\n";
    for (const auto& g : res.observed.per_h) {
      std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%zu,%zu\n", g.h, g.lambda_n, g.standardized, g.capped_nodes,
                    g.dropped_nodes);
      f << buf;
    }
  }
  {
    auto f = open_out(dir / "outcome.csv", manifest);
    f << "key,value\n";
    std::snprintf(buf, sizeof buf,
                  "statistic,%.17g\nq_hat,%.17g\np_value,%.17g\nreject,%d\nboot,%zu\nfailed_replicates,%zu\n"
                  "argmax_h,%.17g\nnuisance_bandwidth,%.17g\n",
                  res.observed.value, res.boot.q_hat, res.boot.p_value, res.boot.reject ? 1 : 0, tc.boot.N,
                  res.failed_replicates, res.observed.argmax_h.h, res.fit.nuisance_bandwidth);
    f << buf;
    for (Eigen::Index j = 0; j < res.fit.theta.size(); ++j) {
      std::snprintf(buf, sizeof buf, "theta%lld,%.17g\n", static_cast<long long>(j + 1), res.fit.theta(j));
      f << buf;
    }
  }
  std::ostringstream text;
  text << "null model      " << to_string(kind) << " (n=" << sample.n() << ", d=" << sample.d()
       << ", k=" << res.sample.k() << ")\n";
  std::snprintf(buf, sizeof buf,
                "statistic       %.6f (sup over %zu bandwidths, argmax h=%.4g)\n"
                "critical value  %.6f (alpha=%.3g, %zu bootstrap replicates, %zu dropped)\n"
                "p-value         %.6f\n"
                "decision        %s\n",
                res.observed.value, res.h_grid.size(), res.observed.argmax_h.h, res.boot.q_hat, tc.boot.alpha,
                tc.boot.N, res.failed_replicates, res.boot.p_value,
                res.boot.reject ? "reject the null model" : "fail to reject the null model");
  text << buf;
  {
    auto f = open_out(dir / "report.txt", manifest);
    f << text.str();
  }
  out << text.str();
  manifest.finished = utc_now();
  manifest.outputs.push_back("manifest.json");
  manifest.write(dir / "manifest.json");
  return 0;
}

inline StudyConfig study_from(const Config& cfg) {
  const std::string table = cfg.str("table", "table1");
  StudyConfig sc;
  if (table == "table1") {
    sc = table1_desk_config();
  } else if (table == "table2") {
    sc = table2_desk_config();
  } else if (table == "custom") {
    sc.model = cfg.checked("study_model", [&] { return study_model_from_string(cfg.str("study_model", "model_51")); });
    auto as = cfg.numbers("a");
    auto cs = cfg.numbers("c");
    auto g1 = cfg.words("g1");
    auto g2 = cfg.words("g2");
    if (as.empty()) as = {0.0};
    const std::size_t cells = std::max({as.size(), cs.size(), g1.size(), g2.size()});
    auto pick = [cells](auto& v, auto fallback, const char* key, const Config& c) {
      if (v.empty()) v.assign(1, fallback);
      if (v.size() == 1) v.resize(cells, v.front());
      if (v.size() != cells) {
        c.checked(key, [&]() -> int { throw std::invalid_argument(std::string(key) + " list length mismatch"); });
      }
    };
    pick(as, 0.0, "a", cfg);
    pick(cs, 0.0, "c", cfg);
    pick(g1, std::string("x^2"), "g1", cfg);
    pick(g2, std::string("exp"), "g2", cfg);
    sc.cells.clear();
    for (std::size_t i = 0; i < cells; ++i) sc.cells.push_back(StudyCell{as[i], cs[i], g1[i], g2[i]});
  } else {
    cfg.checked("table", [&]() -> int { throw std::invalid_argument("table must be table1, table2 or custom"); });
  }
  sc.n = cfg.integer("n", sc.n, 10);
  sc.reps = static_cast<std::size_t>(cfg.integer("reps", static_cast<long long>(sc.reps), 1));
  sc.boot_N = static_cast<std::size_t>(cfg.integer("boot", static_cast<long long>(sc.boot_N), 1));
  sc.h0 = cfg.num("h0", sc.h0);
  sc.h1 = cfg.num("h1", sc.h1);
  sc.h_grid_size = static_cast<std::size_t>(cfg.integer("h_grid", static_cast<long long>(sc.h_grid_size), 2));
  sc.alpha = cfg.num("alpha", sc.alpha);
  sc.seed = cfg.seed("seed", sc.seed);
  sc.pi_lo = cfg.num("pi_lo", sc.pi_lo);
  sc.pi_hi = cfg.num("pi_hi", sc.pi_hi);
  sc.normalize_pi = cfg.boolean("normalize_pi", sc.normalize_pi);
  sc.multiplier = cfg.checked("multiplier", [&] { return multiplier_from_string(cfg.str("multiplier", "rademacher")); });
  sc.derived_mode =
      cfg.checked("derived_mode", [&] { return derived_bootstrap_from_string(cfg.str("derived_mode", "standardized")); });
  sc.quadrature = quadrature_from(cfg);
  cfg.checked("table", [&] {
    sc.validate();
    return 0;
  });
  return sc;
}

/// Runs a simulation study and writes rejection.csv, replications.csv,
/// summary.txt and manifest.json.
inline int cmd_simulate(const Config& cfg, std::ostream& out) {
  const StudyConfig sc = study_from(cfg);
  RunManifest manifest = start_manifest("simulate", cfg, sc.seed);
  const auto workers = static_cast<std::size_t>(cfg.integer("workers", 0, 0));
  const RejectionTable table = run_study(sc, workers);
  const auto dir = prepare_out_dir(cfg);
  {
    auto f = open_out(dir / "rejection.csv", manifest);
    table.write_csv(f);
  }
  {
    auto f = open_out(dir / "replications.csv", manifest);
    table.write_records_csv(f);
  }
  std::ostringstream text;
  table.write_summary(text);
  {
    auto f = open_out(dir / "summary.txt", manifest);
    f << text.str();
  }
  out << text.str();
  manifest.finished = utc_now();
  manifest.outputs.push_back("manifest.json");
  manifest.write(dir / "manifest.json");
  return 0;
}

/// Prints kernel constants and the equal-bandwidth asymptotic variance.
inline int cmd_constants(const Config& cfg, std::ostream& out) {
  RunManifest manifest = start_manifest("constants", cfg, 0);
  const KernelSpec spec = cfg.checked("kernel", [&] { return KernelSpec::from_name(cfg.str("kernel", "triangular")); });
  const int d = static_cast<int>(cfg.integer("d", 1, 1));
  const int k = static_cast<int>(cfg.integer("k", 1, 1));
  const WeightFunction pi = weight_from(cfg, static_cast<std::size_t>(d));
  const auto kc = kernel_constants(spec, d);
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "kernel          %s\nd               %d\nk               %d\n"
                "R_K             %.15g\nK4_0            %.15g\nmoment_r        %.15g (r=%d)\n"
                "int_pi2         %.15g\npivotal_sigma2  %.15g\n",
                std::string(spec.name()).c_str(), d, k, kc.R_K, kc.K4_0, kc.k_r, spec.order(), pi.integral_of_square(),
                pivotal_sigma2(spec, d, k, pi));
  out << buf;
  if (cfg.has("out_dir")) {
    const auto dir = prepare_out_dir(cfg);
    {
      auto f = open_out(dir / "constants.txt", manifest);
      f << buf;
    }
    manifest.finished = utc_now();
    manifest.outputs.push_back("manifest.json");
    manifest.write(dir / "manifest.json");
  }
  return 0;
}

/// Entry point. Exit codes: 0 success, 2 bad input, 3 numerical failure,
/// 1 anything else.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Empirical likelihood goodness-of-fit tests for multiresponse regression"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(version));
  std::map<std::string, std::string> flags;
  std::string config_path;
  bool no_normalize = false;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "key=value configuration file");
    for (const auto& [flag, key, help] : std::vector<std::tuple<std::string, std::string, std::string>>{
             {"--alpha", "alpha", "significance level"},
             {"--boot", "boot", "bootstrap replicates"},
             {"--h0", "h0", "smallest bandwidth"},
             {"--h1", "h1", "largest bandwidth"},
             {"--h-grid", "h_grid", "number of bandwidths in [h0, h1]"},
             {"--seed", "seed", "random seed"},
             {"--workers", "workers", "worker threads (0 = all cores)"},
             {"--out-dir", "out_dir", "output directory"},
             {"--pi-lo", "pi_lo", "lower end of the weight support box"},
             {"--pi-hi", "pi_hi", "upper end of the weight support box"},
             {"--kernel", "kernel", "kernel shape"}}) {
      sub->add_option_function<std::string>(flag, [&flags, key = key](const std::string& v) { flags[key] = v; }, help);
    }
    sub->add_flag("--no-normalize-pi", no_normalize, "use the raw indicator as weight function");
  };
  auto* test = app.add_subcommand("test", "test a null model on a data set");
  common(test);
  test->add_option_function<std::string>("--data", [&](const std::string& v) { flags["data"] = v; }, "CSV data file");
  test->add_option_function<std::string>(
      "--model", [&](const std::string& v) { flags["model"] = v; }, "linear|plm|single-index|varsel|mean-variance");
  auto* sim = app.add_subcommand("simulate", "run a Monte Carlo study");
  common(sim);
  sim->add_option_function<std::string>("--table", [&](const std::string& v) { flags["table"] = v; },
                                        "table1|table2|custom");
  sim->add_option_function<std::string>("--reps", [&](const std::string& v) { flags["reps"] = v; },
                                        "Monte Carlo replications");
  sim->add_option_function<std::string>("--n", [&](const std::string& v) { flags["n"] = v; }, "sample size");
  auto* cons = app.add_subcommand("constants", "print kernel and asymptotic constants");
  common(cons);
  cons->add_option_function<std::string>("--d", [&](const std::string& v) { flags["d"] = v; }, "covariate dimension");
  cons->add_option_function<std::string>("--k", [&](const std::string& v) { flags["k"] = v; }, "response dimension");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    Config cfg;
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw InputError(config_path, 0, 0, "cannot open config file");
      parse_config(in, config_path, cfg);
    }
    apply_environment(cfg);
    for (const auto& [k, v] : flags) cfg.set(k, v, "command line");
    if (no_normalize) cfg.set("normalize_pi", "false", "command line");
    if (*test) return cmd_test(cfg, out);
    if (*sim) return cmd_simulate(cfg, out);
    return cmd_constants(cfg, out);
  } catch (const InputError& e) {
    err << "elgof: " << e.what() << '\n';
    return 2;
  } catch (const NumericalError& e) {
    err << "elgof: numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const std::invalid_argument& e) {
    err << "elgof: invalid input: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "elgof: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace elgof::cli
