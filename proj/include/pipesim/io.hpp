#pragma once

// File formats: libsvm-style datasets (strict parser with line numbers),
// round-trip-exact CSV emission, and the flat key=value experiment config.

#include <Eigen/Dense>

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace pipesim {

// ------------------------------------------------------------------ numbers

namespace detail {

// shortest decimal that round-trips a double (17 significant digits)
inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline bool parse_double(std::string_view s, double& out) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  if (s.empty()) return false;
  // from_chars lacks inf/nan in some libstdc++ versions; strtod fallback
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec == std::errc() && ptr == last) return true;
  std::string tmp(s);
  char* end = nullptr;
  errno = 0;
  double v = std::strtod(tmp.c_str(), &end);
  if (errno != 0 || end != tmp.c_str() + tmp.size() || tmp.empty()) return false;
  out = v;
  return true;
}

inline bool parse_ll(std::string_view s, long long& out) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

inline std::string trim(std::string_view s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace detail

// ------------------------------------------------------------------ dataset

struct Dataset {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
};

// "label index:value ..." rows, 1-based indices, '#' starts a comment.
// Dense result sized by the largest index seen. Malformed input reports the
// 1-based line number. scale_features maps each column to [-1, 1] by its
// min/max (constant columns become 0).
inline Dataset parse_libsvm(const std::string& text, bool scale_features = false) {
  struct Row {
    double label;
    std::vector<std::pair<long long, double>> feats;
  };
  std::vector<Row> rows;
  long long max_index = 0;

  size_t pos = 0;
  long long line_no = 0;
  while (pos <= text.size()) {
    size_t eol = text.find('\n', pos);
    std::string_view line(text.data() + pos,
                          (eol == std::string::npos ? text.size() : eol) - pos);
    pos = (eol == std::string::npos) ? text.size() + 1 : eol + 1;
    line_no += 1;

    if (size_t h = line.find('#'); h != std::string_view::npos) line = line.substr(0, h);
    std::string body = detail::trim(line);
    if (body.empty()) continue;

    std::istringstream ss(body);
    std::string tok;
    ss >> tok;
    Row row;
    if (!detail::parse_double(tok, row.label))
      throw std::runtime_error("libsvm parse error at line " + std::to_string(line_no) +
                               ": bad label '" + tok + "'");
    while (ss >> tok) {
      size_t colon = tok.find(':');
      if (colon == std::string::npos || colon == 0 || colon + 1 >= tok.size())
        throw std::runtime_error("libsvm parse error at line " + std::to_string(line_no) +
                                 ": expected index:value, got '" + tok + "'");
      long long idx = 0;
      double val = 0;
      if (!detail::parse_ll(std::string_view(tok).substr(0, colon), idx) || idx < 1)
        throw std::runtime_error("libsvm parse error at line " + std::to_string(line_no) +
                                 ": bad feature index in '" + tok + "'");
      if (!detail::parse_double(std::string_view(tok).substr(colon + 1), val))
        throw std::runtime_error("libsvm parse error at line " + std::to_string(line_no) +
                                 ": bad feature value in '" + tok + "'");
      if (!row.feats.empty() && idx <= row.feats.back().first)
        throw std::runtime_error("libsvm parse error at line " + std::to_string(line_no) +
                                 ": feature indices must be strictly increasing");
      row.feats.emplace_back(idx, val);
      max_index = std::max(max_index, idx);
    }
    rows.push_back(std::move(row));
  }

  if (rows.empty()) throw std::runtime_error("libsvm parse error: no data rows");
  if (max_index == 0) throw std::runtime_error("libsvm parse error: no features in any row");

  Dataset d;
  d.X = Eigen::MatrixXd::Zero((Eigen::Index)rows.size(), (Eigen::Index)max_index);
  d.y.resize((Eigen::Index)rows.size());
  for (size_t r = 0; r < rows.size(); ++r) {
    d.y[(Eigen::Index)r] = rows[r].label;
    for (auto [idx, val] : rows[r].feats) d.X((Eigen::Index)r, (Eigen::Index)(idx - 1)) = val;
  }

  if (scale_features) {
    for (Eigen::Index c = 0; c < d.X.cols(); ++c) {
      const double lo = d.X.col(c).minCoeff(), hi = d.X.col(c).maxCoeff();
      if (hi > lo)
        d.X.col(c) = (2.0 * (d.X.col(c).array() - lo) / (hi - lo) - 1.0).matrix();
      else
        d.X.col(c).setZero();
    }
  }
  return d;
}

inline Dataset load_libsvm(const std::string& path, bool scale_features = false) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open dataset file: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_libsvm(ss.str(), scale_features);
}

inline std::string write_libsvm(const Dataset& d) {
  std::string out;
  for (Eigen::Index r = 0; r < d.X.rows(); ++r) {
    out += detail::format_double(d.y[r]);
    for (Eigen::Index c = 0; c < d.X.cols(); ++c) {
      if (d.X(r, c) == 0.0) continue;
      out += ' ';
      out += std::to_string(c + 1);
      out += ':';
      out += detail::format_double(d.X(r, c));
    }
    out += '\n';
  }
  return out;
}

// Well-conditioned random regression problem: gaussian features, planted
// weights, gaussian label noise. Deterministic in seed.
inline Dataset make_synthetic_regression(Eigen::Index n, Eigen::Index d, std::uint64_t seed,
                                         double noise = 0.1) {
  if (n < 1 || d < 1) throw std::invalid_argument("make_synthetic_regression: n, d must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  Dataset ds;
  ds.X.resize(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) ds.X(i, j) = n01(rng) / std::sqrt((double)d);
  Eigen::VectorXd w_true(d);
  for (Eigen::Index j = 0; j < d; ++j) w_true[j] = n01(rng);
  ds.y = ds.X * w_true;
  if (noise > 0)
    for (Eigen::Index i = 0; i < n; ++i) ds.y[i] += noise * n01(rng);
  return ds;
}

// ---------------------------------------------------------------------- CSV

using CsvCell = std::variant<std::string, double, long long>;

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<CsvCell>> rows;
};

// LF line endings, '.' decimal separator, doubles round-trip exact.
inline std::string to_csv(const CsvTable& t) {
  std::string out;
  for (size_t i = 0; i < t.header.size(); ++i) {
    if (i) out += ',';
    out += t.header[i];
  }
  out += '\n';
  for (const auto& row : t.rows) {
    if (row.size() != t.header.size())
      throw std::invalid_argument("to_csv: row width does not match header");
    for (size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      if (const auto* s = std::get_if<std::string>(&row[i]))
        out += *s;
      else if (const auto* d = std::get_if<double>(&row[i]))
        out += detail::format_double(*d);
      else
        out += std::to_string(std::get<long long>(row[i]));
    }
    out += '\n';
  }
  return out;
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open file for writing: " + path);
  f << content;
  if (!f) throw std::runtime_error("write failed: " + path);
}

inline std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open file: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// minimal reader for our own output (tests re-parse emitted tables)
inline std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    size_t start = 0;
    while (true) {
      size_t comma = line.find(',', start);
      if (comma == std::string::npos) {
        cells.push_back(line.substr(start));
        break;
      }
      cells.push_back(line.substr(start, comma - start));
      start = comma + 1;
    }
    rows.push_back(std::move(cells));
  }
  return rows;
}

// ------------------------------------------------------------------- config

struct ConfigError : std::runtime_error {
  std::string key;
  ConfigError(std::string k, const std::string& msg)
      : std::runtime_error("config key '" + k + "': " + msg), key(std::move(k)) {}
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Flat key = value file; '#' comments; duplicate or unknown keys rejected by
// name; every value range-checked here so downstream code can trust it.
struct ExperimentConfig {
  // pipeline geometry
  std::string mode = "pipemare";
  int P = 1;
  int N = 1;
  int L = 0;  // 0: one layer per stage
  double M = 1.0;
  double B = 1.0;

  // objective
  std::string objective = "quadratic";  // quadratic | least_squares | mlp
  double lambda = 1.0;
  double sigma = 0.0;
  double delta = 0.0;
  double phi = 0.0;
  std::string noise = "gaussian";  // gaussian | uniform
  std::string dataset;             // libsvm path for least_squares / mlp
  long long synth_n = 0;           // synthetic regression fallback
  long long synth_d = 0;
  long long synth_seed = 1;
  double synth_noise = 0.1;
  bool scale_features = false;
  std::vector<int> mlp_sizes;
  long long batch = 0;  // 0: full batch

  // optimizer
  std::string optimizer = "sgd";
  double beta = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;

  // schedule
  std::string lr_schedule = "constant";  // constant | step | inv_sqrt
  double alpha = 0.1;                    // base learning rate
  long long lr_drop_every = 0;
  double lr_drop_factor = 0.1;
  long long lr_warmup_steps = 0;
  double lr_init = 0.0;
  long long K = 0;
  long long warmup_epochs = 0;
  long long steps_per_epoch = 1;
  double D = 0.135;
  bool correction = false;

  // explicit delays (override pipeline geometry when >= 0)
  int tau_fwd = -1;
  int tau_bkwd = -1;
  int tau_recomp = -1;

  // hogwild delays
  bool hogwild = false;
  int hogwild_tau_max = 0;
  std::vector<double> hogwild_means;

  // run control
  long long steps = 1000;
  std::vector<long long> seeds = {1};
  long long record_stride = 1;
  double divergence_cap = 1e12;

  // stability analysis grids
  std::vector<double> alpha_list;
  double alpha_min = 0.0;
  double alpha_max = 0.0;
  long long alpha_points = 0;
  std::vector<long long> tau_list;
  std::vector<double> lambda_list;
  std::vector<double> delta_list;
  std::vector<double> beta_list;
  std::string features;  // comma list: momentum,discrepancy,correction,recompute
  double gamma = 0.0;    // 0: derive from D when correction is on

  // cost model: "P:N:M:B:mode:optimizer[:total_epochs:warmup_epochs]" rows,
  // ';' separated
  std::string rows;
  std::string recompute = "none";  // none | optimal | segment count
  bool with_correction = false;
  std::vector<double> stage_weights;
};

namespace detail {

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  size_t start = 0;
  while (true) {
    size_t p = s.find(sep, start);
    if (p == std::string::npos) {
      out.push_back(trim(std::string_view(s).substr(start)));
      break;
    }
    out.push_back(trim(std::string_view(s).substr(start, p - start)));
    start = p + 1;
  }
  return out;
}

inline double req_double(const std::string& key, const std::string& v) {
  double d;
  if (!parse_double(v, d)) throw ConfigError(key, "expected a number, got '" + v + "'");
  return d;
}

inline long long req_ll(const std::string& key, const std::string& v) {
  long long d;
  if (!parse_ll(v, d)) throw ConfigError(key, "expected an integer, got '" + v + "'");
  return d;
}

inline bool req_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key, "expected true/false, got '" + v + "'");
}

template <class T, class F>
inline std::vector<T> req_list(const std::string& key, const std::string& v, F parse_one) {
  std::vector<T> out;
  for (const auto& item : split(v, ',')) {
    if (item.empty()) throw ConfigError(key, "empty element in list '" + v + "'");
    out.push_back(parse_one(key, item));
  }
  return out;
}

}  // namespace detail

inline ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig c;
  std::set<std::string> seen;

  size_t pos = 0;
  long long line_no = 0;
  while (pos <= text.size()) {
    size_t eol = text.find('\n', pos);
    std::string_view line(text.data() + pos,
                          (eol == std::string::npos ? text.size() : eol) - pos);
    pos = (eol == std::string::npos) ? text.size() + 1 : eol + 1;
    line_no += 1;

    if (size_t h = line.find('#'); h != std::string_view::npos) line = line.substr(0, h);
    std::string body = detail::trim(line);
    if (body.empty()) continue;

    size_t eq = body.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": expected key = value, got '" + body + "'");
    std::string key = detail::trim(std::string_view(body).substr(0, eq));
    std::string val = detail::trim(std::string_view(body).substr(eq + 1));
    if (key.empty())
      throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
    if (!seen.insert(key).second) throw ConfigError(key, "duplicate key");

    using detail::req_bool;
    using detail::req_double;
    using detail::req_ll;

    auto ll_of = [](const std::string& k, const std::string& v) { return detail::req_ll(k, v); };
    auto dbl_of = [](const std::string& k, const std::string& v) {
      return detail::req_double(k, v);
    };

    if (key == "mode") c.mode = val;
    else if (key == "P") c.P = (int)req_ll(key, val);
    else if (key == "N") c.N = (int)req_ll(key, val);
    else if (key == "L") c.L = (int)req_ll(key, val);
    else if (key == "M") c.M = req_double(key, val);
    else if (key == "B") c.B = req_double(key, val);
    else if (key == "objective") c.objective = val;
    else if (key == "lambda") c.lambda = req_double(key, val);
    else if (key == "sigma") c.sigma = req_double(key, val);
    else if (key == "delta") c.delta = req_double(key, val);
    else if (key == "phi") c.phi = req_double(key, val);
    else if (key == "noise") c.noise = val;
    else if (key == "dataset") c.dataset = val;
    else if (key == "synth_n") c.synth_n = req_ll(key, val);
    else if (key == "synth_d") c.synth_d = req_ll(key, val);
    else if (key == "synth_seed") c.synth_seed = req_ll(key, val);
    else if (key == "synth_noise") c.synth_noise = req_double(key, val);
    else if (key == "scale_features") c.scale_features = req_bool(key, val);
    else if (key == "mlp_sizes") {
      for (long long s : detail::req_list<long long>(key, val, ll_of))
        c.mlp_sizes.push_back((int)s);
    } else if (key == "batch") c.batch = req_ll(key, val);
    else if (key == "optimizer") c.optimizer = val;
    else if (key == "beta") c.beta = req_double(key, val);
    else if (key == "beta1") c.beta1 = req_double(key, val);
    else if (key == "beta2") c.beta2 = req_double(key, val);
    else if (key == "eps") c.eps = req_double(key, val);
    else if (key == "weight_decay") c.weight_decay = req_double(key, val);
    else if (key == "lr_schedule") c.lr_schedule = val;
    else if (key == "alpha") c.alpha = req_double(key, val);
    else if (key == "lr_drop_every") c.lr_drop_every = req_ll(key, val);
    else if (key == "lr_drop_factor") c.lr_drop_factor = req_double(key, val);
    else if (key == "lr_warmup_steps") c.lr_warmup_steps = req_ll(key, val);
    else if (key == "lr_init") c.lr_init = req_double(key, val);
    else if (key == "K") c.K = req_ll(key, val);
    else if (key == "warmup_epochs") c.warmup_epochs = req_ll(key, val);
    else if (key == "steps_per_epoch") c.steps_per_epoch = req_ll(key, val);
    else if (key == "D") c.D = req_double(key, val);
    else if (key == "correction") c.correction = req_bool(key, val);
    else if (key == "tau_fwd") c.tau_fwd = (int)req_ll(key, val);
    else if (key == "tau_bkwd") c.tau_bkwd = (int)req_ll(key, val);
    else if (key == "tau_recomp") c.tau_recomp = (int)req_ll(key, val);
    else if (key == "hogwild") c.hogwild = req_bool(key, val);
    else if (key == "hogwild_tau_max") c.hogwild_tau_max = (int)req_ll(key, val);
    else if (key == "hogwild_means") c.hogwild_means = detail::req_list<double>(key, val, dbl_of);
    else if (key == "steps") c.steps = req_ll(key, val);
    else if (key == "seeds") c.seeds = detail::req_list<long long>(key, val, ll_of);
    else if (key == "record_stride") c.record_stride = req_ll(key, val);
    else if (key == "divergence_cap") c.divergence_cap = req_double(key, val);
    else if (key == "alpha_list") c.alpha_list = detail::req_list<double>(key, val, dbl_of);
    else if (key == "alpha_min") c.alpha_min = req_double(key, val);
    else if (key == "alpha_max") c.alpha_max = req_double(key, val);
    else if (key == "alpha_points") c.alpha_points = req_ll(key, val);
    else if (key == "tau_list") c.tau_list = detail::req_list<long long>(key, val, ll_of);
    else if (key == "lambda_list") c.lambda_list = detail::req_list<double>(key, val, dbl_of);
    else if (key == "delta_list") c.delta_list = detail::req_list<double>(key, val, dbl_of);
    else if (key == "beta_list") c.beta_list = detail::req_list<double>(key, val, dbl_of);
    else if (key == "features") c.features = val;
    else if (key == "gamma") c.gamma = req_double(key, val);
    else if (key == "rows") c.rows = val;
    else if (key == "recompute") c.recompute = val;
    else if (key == "with_correction") c.with_correction = req_bool(key, val);
    else if (key == "stage_weights")
      c.stage_weights = detail::req_list<double>(key, val, dbl_of);
    else throw ConfigError(key, "unknown key");
  }

  // range validation, upfront
  auto bad = [](const std::string& k, const std::string& m) { return ConfigError(k, m); };
  if (c.mode != "gpipe" && c.mode != "pipedream" && c.mode != "pipemare")
    throw bad("mode", "must be gpipe, pipedream, or pipemare");
  if (c.P < 1) throw bad("P", "must be >= 1");
  if (c.N < 1) throw bad("N", "must be >= 1");
  if (c.L < 0) throw bad("L", "must be >= 0");
  if (c.L > 0 && c.L < c.P) throw bad("L", "must be >= P when set");
  if (!(c.M > 0)) throw bad("M", "must be > 0");
  if (!(c.B > 0)) throw bad("B", "must be > 0");
  if (c.objective != "quadratic" && c.objective != "least_squares" && c.objective != "mlp")
    throw bad("objective", "must be quadratic, least_squares, or mlp");
  if (!(c.lambda > 0)) throw bad("lambda", "must be > 0");
  if (c.sigma < 0) throw bad("sigma", "must be >= 0");
  if (c.noise != "gaussian" && c.noise != "uniform")
    throw bad("noise", "must be gaussian or uniform");
  if (c.synth_n < 0 || c.synth_d < 0) throw bad("synth_n", "must be >= 0");
  if (c.synth_noise < 0) throw bad("synth_noise", "must be >= 0");
  for (int s : c.mlp_sizes)
    if (s < 1) throw bad("mlp_sizes", "layer sizes must be >= 1");
  if (c.batch < 0) throw bad("batch", "must be >= 0");
  if (c.optimizer != "sgd" && c.optimizer != "momentum" && c.optimizer != "adamw")
    throw bad("optimizer", "must be sgd, momentum, or adamw");
  if (!(c.beta >= 0 && c.beta < 1)) throw bad("beta", "must be in [0, 1)");
  if (!(c.beta1 >= 0 && c.beta1 < 1)) throw bad("beta1", "must be in [0, 1)");
  if (!(c.beta2 >= 0 && c.beta2 < 1)) throw bad("beta2", "must be in [0, 1)");
  if (!(c.eps > 0)) throw bad("eps", "must be > 0");
  if (c.weight_decay < 0) throw bad("weight_decay", "must be >= 0");
  if (c.lr_schedule != "constant" && c.lr_schedule != "step" && c.lr_schedule != "inv_sqrt")
    throw bad("lr_schedule", "must be constant, step, or inv_sqrt");
  if (!(c.alpha > 0)) throw bad("alpha", "must be > 0");
  if (c.lr_schedule == "step" && c.lr_drop_every < 1)
    throw bad("lr_drop_every", "must be >= 1 for step schedule");
  if (!(c.lr_drop_factor > 0)) throw bad("lr_drop_factor", "must be > 0");
  if (c.lr_schedule == "inv_sqrt" && c.lr_warmup_steps < 1)
    throw bad("lr_warmup_steps", "must be >= 1 for inv_sqrt schedule");
  if (c.lr_init < 0) throw bad("lr_init", "must be >= 0");
  if (c.K < 0) throw bad("K", "must be >= 0");
  if (c.warmup_epochs < 0) throw bad("warmup_epochs", "must be >= 0");
  if (c.steps_per_epoch < 1) throw bad("steps_per_epoch", "must be >= 1");
  if (!(c.D > 0 && c.D < 1)) throw bad("D", "must be in (0, 1)");
  if (c.tau_fwd < -1) throw bad("tau_fwd", "must be >= 0 (or omitted)");
  if (c.tau_bkwd < -1) throw bad("tau_bkwd", "must be >= 0 (or omitted)");
  if (c.tau_recomp < -1) throw bad("tau_recomp", "must be >= 0 (or omitted)");
  if (c.tau_fwd >= 0 && c.tau_bkwd >= 0 && c.tau_bkwd > c.tau_fwd)
    throw bad("tau_bkwd", "must be <= tau_fwd");
  if (c.hogwild_tau_max < 0) throw bad("hogwild_tau_max", "must be >= 0");
  for (double m : c.hogwild_means)
    if (!(m > 0)) throw bad("hogwild_means", "means must be > 0");
  if (c.hogwild && c.hogwild_means.empty())
    throw bad("hogwild_means", "required when hogwild = true");
  if (c.steps < 0) throw bad("steps", "must be >= 0");
  if (c.seeds.empty()) throw bad("seeds", "must list at least one seed");
  if (c.record_stride < 0) throw bad("record_stride", "must be >= 0");
  if (!(c.divergence_cap > 0)) throw bad("divergence_cap", "must be > 0");
  for (double a : c.alpha_list)
    if (!(a > 0)) throw bad("alpha_list", "rates must be > 0");
  if (c.alpha_points < 0) throw bad("alpha_points", "must be >= 0");
  if (c.alpha_points > 0) {
    if (!(c.alpha_min > 0)) throw bad("alpha_min", "must be > 0 when alpha_points is set");
    if (!(c.alpha_max > c.alpha_min)) throw bad("alpha_max", "must exceed alpha_min");
  }
  for (long long t : c.tau_list)
    if (t < 0) throw bad("tau_list", "delays must be >= 0");
  for (double l : c.lambda_list)
    if (!(l > 0)) throw bad("lambda_list", "curvatures must be > 0");
  for (double b : c.beta_list)
    if (!(b >= 0 && b < 1)) throw bad("beta_list", "must be in [0, 1)");
  if (!(c.gamma >= 0 && c.gamma < 1)) throw bad("gamma", "must be in [0, 1)");
  if (c.recompute != "none" && c.recompute != "optimal") {
    long long s;
    if (!detail::parse_ll(c.recompute, s) || s < 1)
      throw bad("recompute", "must be none, optimal, or a segment length >= 1");
  }
  for (double w : c.stage_weights)
    if (w < 0) throw bad("stage_weights", "must be >= 0");

  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  return parse_config(read_file(path));
}

}  // namespace pipesim
