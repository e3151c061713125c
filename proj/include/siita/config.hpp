#pragma once

// Flat `key = value` run configuration.

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "siita/data.hpp"
#include "siita/error.hpp"
#include "siita/model.hpp"
#include "siita/streaming.hpp"
#include "siita/tensor.hpp"

namespace siita {

inline constexpr const char* kVersion = "0.3.0";

struct RunConfig {
  std::string tensor;               // path to the observation file
  std::vector<Index> dims;          // full tensor shape
  std::vector<std::string> side;    // per mode: path or identity:<n>; empty means identity
  std::string regime = "multi-aspect";  // multi-aspect | streaming:<mode> | batch:<passes>
  std::vector<Index> start;
  std::vector<Index> step;
  std::vector<Index> ranks;
  double lambda_g = 1e-3;
  std::vector<double> lambda{1e-3};
  double gamma = 1e-3;
  int inner_steps = 1;
  bool nonnegative = false;
  double missing_pct = 0.2;
  std::uint64_t seed = 42;
  int n_splits = 1;
  std::string out_dir = "siita-out";
  int threads = 1;
  bool deterministic = true;
  bool fresh_core_residual = true;
  bool weighted_average = false;
  bool timing = true;  // false writes elapsed_ms as 0 for byte-stable output
  bool checkpoint = false;
  // cluster subcommand
  std::string labels;
  std::size_t w = 5;
  std::size_t cluster_mode = 1;

  // Keys in the order they are echoed.
  static const std::vector<std::string>& keys() {
    static const std::vector<std::string> k = {
        "tensor", "dims", "side", "regime", "start", "step", "ranks", "lambda_g", "lambda", "gamma", "K",
        "nonnegative", "missing_pct", "seed", "n_splits", "out_dir", "threads", "deterministic",
        "fresh_core_residual", "weighted_average", "timing", "checkpoint", "labels", "w", "cluster_mode"};
    return k;
  }

  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  std::string to_text() const;

  Hyperparams hyperparams() const {
    Hyperparams hp;
    hp.lambda_g = lambda_g;
    hp.lambda = lambda;
    hp.gamma = gamma;
    hp.inner_steps = inner_steps;
    hp.nonnegative = nonnegative;
    hp.seed = seed;
    hp.threads = threads;
    hp.deterministic = deterministic;
    hp.fresh_core_residual = fresh_core_residual;
    return hp;
  }

  // Cross-field checks; throws ConfigError naming the field.
  void validate() const;
  GrowthPlan growth_plan() const;
  std::string side_spec(std::size_t mode) const {
    if (mode < side.size() && !side[mode].empty()) return side[mode];
    return "identity:" + std::to_string(dims.at(mode));
  }
};

namespace detail {

inline std::string join(const auto& values) {
  std::ostringstream os;
  bool first = true;
  for (const auto& v : values) {
    if (!first) os << ',';
    first = false;
    if constexpr (std::is_floating_point_v<std::decay_t<decltype(v)>>) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.17g", v);
      os << buf;
    } else {
      os << v;
    }
  }
  return os.str();
}

template <typename T>
T parse_field(const std::string& key, std::string_view value) {
  T out{};
  if constexpr (std::is_same_v<T, bool>) {
    const auto v = trim(value);
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError(key + ": expected a boolean, got '" + std::string(value) + "'");
  } else {
    if (!parse_number(value, out)) throw ConfigError(key + ": cannot parse '" + std::string(value) + "'");
    return out;
  }
}

template <typename T>
std::vector<T> parse_list(const std::string& key, std::string_view value) {
  std::vector<T> out;
  if (trim(value).empty()) return out;
  for (auto f : split_on(value, ',')) out.push_back(parse_field<T>(key, f));
  return out;
}

inline std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

inline void RunConfig::set(const std::string& key, const std::string& raw) {
  using namespace detail;
  const std::string value(trim(raw));
  if (key == "tensor") tensor = value;
  else if (key == "dims") dims = parse_list<Index>(key, value);
  else if (key == "side") {
    side.clear();
    if (!value.empty())
      for (auto f : split_on(value, ',')) side.emplace_back(trim(f));
  } else if (key.rfind("side.", 0) == 0) {
    const auto mode = parse_field<std::size_t>(key, std::string_view(key).substr(5));
    if (side.size() <= mode) side.resize(mode + 1);
    side[mode] = value;
  } else if (key == "regime") regime = value;
  else if (key == "start") start = parse_list<Index>(key, value);
  else if (key == "step") step = parse_list<Index>(key, value);
  else if (key == "ranks") ranks = parse_list<Index>(key, value);
  else if (key == "lambda_g") lambda_g = parse_field<double>(key, value);
  else if (key == "lambda") lambda = parse_list<double>(key, value);
  else if (key == "gamma") gamma = parse_field<double>(key, value);
  else if (key == "K" || key == "inner_steps") inner_steps = parse_field<int>(key, value);
  else if (key == "nonnegative") nonnegative = parse_field<bool>(key, value);
  else if (key == "missing_pct") missing_pct = parse_field<double>(key, value);
  else if (key == "seed") seed = parse_field<std::uint64_t>(key, value);
  else if (key == "n_splits") n_splits = parse_field<int>(key, value);
  else if (key == "out_dir") out_dir = value;
  else if (key == "threads") threads = parse_field<int>(key, value);
  else if (key == "deterministic") deterministic = parse_field<bool>(key, value);
  else if (key == "fresh_core_residual") fresh_core_residual = parse_field<bool>(key, value);
  else if (key == "weighted_average") weighted_average = parse_field<bool>(key, value);
  else if (key == "timing") timing = parse_field<bool>(key, value);
  else if (key == "checkpoint") checkpoint = parse_field<bool>(key, value);
  else if (key == "labels") labels = value;
  else if (key == "w") w = parse_field<std::size_t>(key, value);
  else if (key == "cluster_mode") cluster_mode = parse_field<std::size_t>(key, value);
  else throw ConfigError("unknown config key '" + key + "'");
}

inline std::string RunConfig::get(const std::string& key) const {
  using namespace detail;
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  if (key == "tensor") return tensor;
  if (key == "dims") return join(dims);
  if (key == "side") return join(side);
  if (key == "regime") return regime;
  if (key == "start") return join(start);
  if (key == "step") return join(step);
  if (key == "ranks") return join(ranks);
  if (key == "lambda_g") return fmt_double(lambda_g);
  if (key == "lambda") return join(lambda);
  if (key == "gamma") return fmt_double(gamma);
  if (key == "K") return std::to_string(inner_steps);
  if (key == "nonnegative") return b(nonnegative);
  if (key == "missing_pct") return fmt_double(missing_pct);
  if (key == "seed") return std::to_string(seed);
  if (key == "n_splits") return std::to_string(n_splits);
  if (key == "out_dir") return out_dir;
  if (key == "threads") return std::to_string(threads);
  if (key == "deterministic") return b(deterministic);
  if (key == "fresh_core_residual") return b(fresh_core_residual);
  if (key == "weighted_average") return b(weighted_average);
  if (key == "timing") return b(timing);
  if (key == "checkpoint") return b(checkpoint);
  if (key == "labels") return labels;
  if (key == "w") return std::to_string(w);
  if (key == "cluster_mode") return std::to_string(cluster_mode);
  throw ConfigError("unknown config key '" + key + "'");
}

inline std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& k : keys()) out += k + " = " + get(k) + "\n";
  return out;
}

inline RunConfig parse_config_text(const std::string& text, RunConfig base = {}) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view body(line);
    if (auto hash = body.find('#'); hash != std::string_view::npos) body = body.substr(0, hash);
    if (detail::trim(body).empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    base.set(std::string(detail::trim(body.substr(0, eq))), std::string(body.substr(eq + 1)));
  }
  return base;
}

inline RunConfig load_config(const std::string& path, RunConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), std::move(base));
}

inline void RunConfig::validate() const {
  if (tensor.empty()) throw ConfigError("tensor: path is required");
  if (dims.size() < 2) throw ConfigError("dims: need at least two modes");
  for (Index d : dims)
    if (d == 0) throw ConfigError("dims: every dimension must be >= 1");
  if (ranks.size() != dims.size())
    throw ConfigError("ranks: expected " + std::to_string(dims.size()) + " values, got " + std::to_string(ranks.size()));
  for (Index r : ranks)
    if (r == 0) throw ConfigError("ranks: every rank must be >= 1");
  if (side.size() > dims.size()) throw ConfigError("side: more entries than modes");
  if (!(gamma > 0.0)) throw ConfigError("gamma: must be > 0");
  if (inner_steps < 1) throw ConfigError("K: must be >= 1");
  if (!(lambda_g >= 0.0)) throw ConfigError("lambda_g: must be >= 0");
  if (lambda.size() != 1 && lambda.size() != dims.size())
    throw ConfigError("lambda: expected 1 or " + std::to_string(dims.size()) + " values");
  for (double l : lambda)
    if (!(l >= 0.0)) throw ConfigError("lambda: values must be >= 0");
  if (!(missing_pct > 0.0 && missing_pct < 1.0)) throw ConfigError("missing_pct: must lie in (0, 1)");
  if (n_splits < 1) throw ConfigError("n_splits: must be >= 1");
  if (threads < 1) throw ConfigError("threads: must be >= 1");
  if (out_dir.empty()) throw ConfigError("out_dir: must not be empty");
  growth_plan();
}

inline GrowthPlan RunConfig::growth_plan() const {
  const Shape full(dims);
  if (regime == "multi-aspect") {
    if (start.size() != dims.size()) throw ConfigError("start: expected " + std::to_string(dims.size()) + " values");
    if (step.size() != dims.size()) throw ConfigError("step: expected " + std::to_string(dims.size()) + " values");
    for (Index s : start)
      if (s == 0) throw ConfigError("start: every dimension must be >= 1");
    try {
      return GrowthPlan::multi_aspect(Shape(start), step, full);
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("regime: ") + e.what());
    }
  }
  if (regime.rfind("streaming:", 0) == 0) {
    const auto mode = detail::parse_field<std::size_t>("regime", std::string_view(regime).substr(10));
    if (mode >= dims.size()) throw ConfigError("regime: stream mode out of range");
    return GrowthPlan::streaming(full, mode);
  }
  if (regime.rfind("batch:", 0) == 0) {
    const auto passes = detail::parse_field<int>("regime", std::string_view(regime).substr(6));
    if (passes < 1) throw ConfigError("regime: batch passes must be >= 1");
    return GrowthPlan::batch(full, passes);
  }
  throw ConfigError("regime: expected multi-aspect, streaming:<mode> or batch:<passes>, got '" + regime + "'");
}

}  // namespace siita
