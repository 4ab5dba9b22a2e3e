#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <mutex>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "elgof/bootstrap.hpp"
#include "elgof/log.hpp"
#include "elgof/models.hpp"
#include "elgof/parallel.hpp"
#include "elgof/quadrature.hpp"
#include "elgof/rng.hpp"
#include "elgof/sample.hpp"

namespace elgof {

inline std::function<double(double)> shape_function(const std::string& name) {
  if (name == "x^2") return [](double x) { return x * x; };
  if (name == "2log(x+0.5)") return [](double x) { return 2.0 * std::log(x + 0.5); };
  if (name == "exp") return [](double x) { return std::exp(x); };
  if (name == "2/(x+1)") return [](double x) { return 2.0 / (x + 1.0); };
  throw std::invalid_argument("unknown shape function '" + name + "'");
}

/// Y = 1 + 0.5 X1 + a g1(X1) + g2(X2) + e, X uniform on [0,1]^2,
/// e ~ N(0, (1.5 + X1 + X2)^2 / 100).
inline Sample gen_model_51(Eigen::Index n, double a, const std::string& g1_name, const std::string& g2_name,
                           std::uint64_t seed) {
  if (g1_name != "x^2" && g1_name != "2log(x+0.5)") throw std::invalid_argument("g1 must be x^2 or 2log(x+0.5)");
  if (g2_name != "exp" && g2_name != "2/(x+1)") throw std::invalid_argument("g2 must be exp or 2/(x+1)");
  if (n < 1) throw std::invalid_argument("sample size must be positive");
  const auto g1 = shape_function(g1_name);
  const auto g2 = shape_function(g2_name);
  auto eng = make_stream(seed, StreamTag::data, 0);
  NormalSource normal;
  Sample s{Eigen::MatrixXd(n, 2), Eigen::MatrixXd(n, 1)};
  for (Eigen::Index i = 0; i < n; ++i) {
    const double x1 = uniform01(eng);
    const double x2 = uniform01(eng);
    const double e = normal(eng) * (1.5 + x1 + x2) / 10.0;
    s.X(i, 0) = x1;
    s.X(i, 1) = x2;
    s.Y(i, 0) = 1.0 + 0.5 * x1 + a * g1(x1) + g2(x2) + e;
  }
  return s;
}

/// Z = 1 + 0.5 X1 + a X1^2 + exp(X2) + 0.15 exp(c X1) e, X uniform on
/// [0,1]^2, e standard normal. Returns the scalar response Z.
inline Sample gen_model_52(Eigen::Index n, double a, double c, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("sample size must be positive");
  auto eng = make_stream(seed, StreamTag::data, 0);
  NormalSource normal;
  Sample s{Eigen::MatrixXd(n, 2), Eigen::MatrixXd(n, 1)};
  for (Eigen::Index i = 0; i < n; ++i) {
    const double x1 = uniform01(eng);
    const double x2 = uniform01(eng);
    const double e = normal(eng);
    s.X(i, 0) = x1;
    s.X(i, 1) = x2;
    s.Y(i, 0) = 1.0 + 0.5 * x1 + a * x1 * x1 + std::exp(x2) + 0.15 * std::exp(c * x1) * e;
  }
  return s;
}

enum class StudyModel { model_51, model_52 };

inline const char* to_string(StudyModel m) { return m == StudyModel::model_51 ? "model_51" : "model_52"; }

inline StudyModel study_model_from_string(const std::string& s) {
  if (s == "model_51") return StudyModel::model_51;
  if (s == "model_52") return StudyModel::model_52;
  throw std::invalid_argument("unknown study model '" + s + "'");
}

struct StudyCell {
  double a = 0.0;
  double c = 0.0;
  std::string g1 = "x^2";
  std::string g2 = "exp";
};

struct StudyConfig {
  StudyModel model = StudyModel::model_51;
  Eigen::Index n = 100;
  std::vector<StudyCell> cells{StudyCell{}};
  std::size_t reps = 200;
  std::size_t boot_N = 199;
  double h0 = 0.22;
  double h1 = 0.28;
  std::size_t h_grid_size = 4;
  double alpha = 0.05;
  std::uint64_t seed = 20100401;
  double pi_lo = 0.1;
  double pi_hi = 0.9;
  bool normalize_pi = true;
  Multiplier multiplier = Multiplier::rademacher;
  DerivedBootstrap derived_mode = DerivedBootstrap::standardized;
  QuadraturePolicy quadrature{};

  void validate() const {
    if (!(h0 > 0.0) || !(h0 < h1)) throw std::invalid_argument("need 0 < h0 < h1");
    if (reps < 1 || boot_N < 1) throw std::invalid_argument("reps and boot_N must be at least 1");
    if (h_grid_size < 2) throw std::invalid_argument("h_grid_size must be at least 2");
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
    if (n < 10) throw std::invalid_argument("sample size too small");
    if (cells.empty()) throw std::invalid_argument("study has no cells");
    for (const auto& cell : cells) {
      if (model == StudyModel::model_51) {
        shape_function(cell.g1);
        shape_function(cell.g2);
      }
    }
    WeightFunction::box(2, pi_lo, pi_hi, normalize_pi).validate();
  }

  /// Test settings for one replication; the bootstrap stream depends on the
  /// replication only.
  TestConfig test_config(std::size_t rep) const {
    TestConfig tc;
    tc.boot.N = boot_N;
    tc.boot.alpha = alpha;
    tc.boot.multiplier = multiplier;
    tc.boot.seed = derive_seed(seed, rep, 1);
    tc.h_grid = linear_bandwidth_grid(h0, h1, h_grid_size);
    tc.pi = WeightFunction::box(2, pi_lo, pi_hi, normalize_pi);
    tc.quadrature = quadrature;
    tc.fit.inner = ModelKind::partially_linear;
    tc.derived_mode = derived_mode;
    return tc;
  }

  Sample generate(const StudyCell& cell, std::size_t rep) const {
    const std::uint64_t s = derive_seed(seed, rep, 0);
    return model == StudyModel::model_51 ? gen_model_51(n, cell.a, cell.g1, cell.g2, s)
                                         : gen_model_52(n, cell.a, cell.c, s);
  }

  ModelKind null_kind() const {
    return model == StudyModel::model_51 ? ModelKind::partially_linear : ModelKind::mean_variance;
  }
};

/// Desk-scale version of the first study: a in {0, 0.5, 1, 1.5} for each g2.
inline StudyConfig table1_desk_config() {
  StudyConfig cfg;
  cfg.model = StudyModel::model_51;
  cfg.cells.clear();
  for (const char* g2 : {"exp", "2/(x+1)"}) {
    for (double a : {0.0, 0.5, 1.0, 1.5}) cfg.cells.push_back(StudyCell{a, 0.0, "x^2", g2});
  }
  return cfg;
}

/// Desk-scale version of the second study: the five (a, c) rows.
inline StudyConfig table2_desk_config() {
  StudyConfig cfg;
  cfg.model = StudyModel::model_52;
  cfg.cells.clear();
  for (auto [a, c] : {std::pair{0.0, 0.0}, {0.5, 1.0}, {1.0, 2.0}, {2.0, 4.0}, {3.0, 6.0}}) {
    cfg.cells.push_back(StudyCell{a, c, "", ""});
  }
  return cfg;
}

/// Outcome of one Monte Carlo replication.
struct RepRecord {
  std::size_t cell = 0;
  std::size_t rep = 0;
  bool failed = false;
  double statistic = std::numeric_limits<double>::quiet_NaN();
  double q_hat = std::numeric_limits<double>::quiet_NaN();
  double p_value = std::numeric_limits<double>::quiet_NaN();
  bool reject = false;
  std::string error;
};

struct RejectionRow {
  std::string model;
  std::string g1, g2;
  double a = 0.0, c = 0.0;
  Eigen::Index n = 0;
  std::size_t reps = 0;  ///< successful replications
  std::size_t failures = 0;
  double reject_rate = 0.0;
  double mc_se = 0.0;
  bool unreliable = false;
};

struct RejectionTable {
  std::vector<RejectionRow> rows;
  std::vector<RepRecord> records;

  void write_csv(std::ostream& os) const {
    os << "model,g1,g2,a,c,n,reps,reject_rate,mc_se\n";
    char buf[256];
    for (const auto& r : rows) {
      std::snprintf(buf, sizeof buf, "%s,%s,%s,%.4g,%.4g,%lld,%zu,%.6f,%.6f\n", r.model.c_str(), r.g1.c_str(),
                    r.g2.c_str(), r.a, r.c, static_cast<long long>(r.n), r.reps, r.reject_rate, r.mc_se);
      os << buf;
    }
  }

  void write_records_csv(std::ostream& os) const {
    os << "cell,rep,failed,statistic,q_hat,p_value,reject\n";
    char buf[256];
    for (const auto& r : records) {
      std::snprintf(buf, sizeof buf, "%zu,%zu,%d,%.17g,%.17g,%.17g,%d\n", r.cell, r.rep, r.failed ? 1 : 0,
                    r.statistic, r.q_hat, r.p_value, r.reject ? 1 : 0);
      os << buf;
    }
  }

  void write_summary(std::ostream& os) const {
    char buf[256];
    for (const auto& r : rows) {
      std::snprintf(buf, sizeof buf, "%-9s g1=%-12s g2=%-8s a=%-4g c=%-4g n=%-4lld reject=%.3f (se %.3f, %zu reps%s)\n",
                    r.model.c_str(), r.g1.c_str(), r.g2.c_str(), r.a, r.c, static_cast<long long>(r.n),
                    r.reject_rate, r.mc_se, r.reps, r.unreliable ? ", UNRELIABLE" : "");
      os << buf;
    }
  }
};

/// Runs every (cell, replication) pair. Replication r uses the same data and
/// bootstrap seeds in every cell, so cells differ only through (a, c, g).
inline RejectionTable run_study(const StudyConfig& cfg, std::size_t workers = 1,
                                const std::function<void(const RepRecord&)>& progress = {}) {
  cfg.validate();
  const std::size_t cells = cfg.cells.size();
  const std::size_t total = cells * cfg.reps;
  RejectionTable table;
  table.records.resize(total);
  std::mutex progress_mu;
  parallel_for(total, workers, [&](std::size_t t) {
    RepRecord rec;
    rec.cell = t / cfg.reps;
    rec.rep = t % cfg.reps;
    try {
      const Sample s = cfg.generate(cfg.cells[rec.cell], rec.rep);
      const TestOutcome out = run_test(s, cfg.null_kind(), cfg.test_config(rec.rep));
      rec.statistic = out.observed.value;
      rec.q_hat = out.boot.q_hat;
      rec.p_value = out.boot.p_value;
      rec.reject = out.boot.reject;
    } catch (const std::exception& e) {
      rec.failed = true;
      rec.error = e.what();
    }
    if (progress) {
      std::lock_guard<std::mutex> lock(progress_mu);
      progress(rec);
    }
    table.records[t] = std::move(rec);
  });
  for (std::size_t c = 0; c < cells; ++c) {
    RejectionRow row;
    row.model = to_string(cfg.model);
    row.g1 = cfg.model == StudyModel::model_51 ? cfg.cells[c].g1 : "";
    row.g2 = cfg.model == StudyModel::model_51 ? cfg.cells[c].g2 : "";
    row.a = cfg.cells[c].a;
    row.c = cfg.cells[c].c;
    row.n = cfg.n;
    std::size_t rejects = 0;
    for (std::size_t r = 0; r < cfg.reps; ++r) {
      const auto& rec = table.records[c * cfg.reps + r];
      if (rec.failed) {
        ++row.failures;
        log_warning("replication " + std::to_string(r) + " of cell " + std::to_string(c) + " failed: " + rec.error);
        continue;
      }
      ++row.reps;
      rejects += rec.reject ? 1 : 0;
    }
    if (row.reps > 0) {
      row.reject_rate = static_cast<double>(rejects) / static_cast<double>(row.reps);
      row.mc_se = std::sqrt(row.reject_rate * (1.0 - row.reject_rate) / static_cast<double>(row.reps));
    }
    row.unreliable = row.reps == 0 || static_cast<double>(row.failures) > 0.05 * static_cast<double>(cfg.reps);
    if (row.unreliable) log_warning("cell " + std::to_string(c) + " is unreliable: too many failed replications");
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace elgof
