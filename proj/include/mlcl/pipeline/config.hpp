#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mlcl/losses.hpp"
#include "mlcl/pipeline/network.hpp"
#include "mlcl/rpmgen/panel.hpp"
#include "mlcl/rules.hpp"

namespace mlcl {

enum class Reduction : std::uint8_t { Mean, Sum };

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Every tunable of generation and training. Serialized as flat
/// `key = value` lines; see TrainConfig::keys() for the list.
struct TrainConfig {
  // data
  RpmConfig config = RpmConfig::Center;
  std::size_t count = 2000;
  std::size_t panel_size = 28;
  std::uint64_t dataset_seed = 1;
  std::size_t validation_percent = 10;

  // optimization
  std::size_t epochs = 50;
  std::size_t batch_size = 64;
  double learning_rate = 0.005;
  std::size_t patience = 10;
  std::uint64_t seed = 1;

  // objective
  double temperature = 0.1;
  double gamma = 1.0;
  double beta = 10.0;
  bool negatives = true;
  NegativeScope negative_scope = NegativeScope::AllInstances;
  PositiveNormalization normalization = PositiveNormalization::PositiveCount;
  Reduction contrastive_reduction = Reduction::Mean;
  EncodingScheme scheme = EncodingScheme::Sparse;

  // augmentation
  bool augment = true;
  bool right_angle_rotations = false;
  double augment_probability = 0.2;

  // linear evaluation
  std::size_t linear_epochs = 300;
  double linear_learning_rate = 0.03;
  std::size_t linear_batch_size = 64;

  // network
  NetworkShape network;

  Grammar grammar() const { return grammar_of(config); }

  NetworkShape network_shape() const {
    NetworkShape s = network;
    s.panel_size = panel_size;
    s.rule_dim = encoding_length(grammar(), scheme);
    return s;
  }

  ContrastiveOptions contrastive_options() const { return {temperature, normalization, negative_scope}; }

  void validate() const {
    auto require = [](bool ok, const std::string& msg) {
      if (!ok) throw ConfigError(msg);
    };
    require(epochs > 0, "epochs must be positive");
    require(batch_size >= 2, "batch_size must be at least 2");
    require(learning_rate > 0.0, "learning_rate must be positive");
    require(linear_learning_rate > 0.0, "linear_learning_rate must be positive");
    require(linear_epochs > 0 && linear_batch_size > 0, "linear_epochs and linear_batch_size must be positive");
    require(temperature > 0.0, "temperature must be positive");
    require(augment_probability > 0.0 && augment_probability <= 1.0, "augment_probability must be in (0, 1]");
    require(gamma >= 0.0 && beta >= 0.0, "gamma and beta must be non-negative");
    require(validation_percent < 100, "validation_percent must be below 100");
    require(panel_size >= 8, "panel_size must be at least 8");
    (void)network_shape().pooled_side();
  }

  struct Key {
    std::string name;
    std::string help;
    std::function<void(TrainConfig&, const std::string&)> set;
    std::function<std::string(const TrainConfig&)> get;
  };

  static const std::vector<Key>& keys();

  static std::string valid_keys() {
    std::string s;
    for (const Key& k : keys()) s += (s.empty() ? "" : ", ") + k.name;
    return s;
  }

  void set(const std::string& key, const std::string& value) {
    for (const Key& k : keys()) {
      if (k.name != key) continue;
      try {
        k.set(*this, value);
      } catch (const ConfigError&) {
        throw;
      } catch (const std::exception& e) {
        throw ConfigError("bad value '" + value + "' for key '" + key + "': " + e.what());
      }
      return;
    }
    throw ConfigError("unknown config key '" + key + "'; valid keys: " + valid_keys());
  }

  /// Applies one `key=value` string.
  void apply_override(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
    set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
  }

  static TrainConfig parse(const std::string& text) {
    TrainConfig c;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
      line = trim(line);
      if (line.empty()) continue;
      if (line.find('=') == std::string::npos) {
        throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
      }
      c.apply_override(line);
    }
    c.validate();
    return c;
  }

  static TrainConfig load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
  }

  /// Canonical text form: every key in a fixed order.
  std::string to_text() const {
    std::string s;
    for (const Key& k : keys()) s += k.name + " = " + k.get(*this) + "\n";
    return s;
  }

  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }
};

namespace config_detail {

template <typename T>
T parse_number(const std::string& s) {
  T v{};
  const char* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || p != end) throw std::invalid_argument("not a number");
  return v;
}

inline bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "on" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "off" || s == "no") return false;
  throw std::invalid_argument("expected true or false");
}

inline std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

template <typename T>
TrainConfig::Key size_key(std::string name, std::string help, T TrainConfig::*field) {
  return {std::move(name), std::move(help),
          [field](TrainConfig& c, const std::string& v) { c.*field = parse_number<T>(v); },
          [field](const TrainConfig& c) { return std::to_string(c.*field); }};
}

inline TrainConfig::Key shape_key(std::string name, std::string help, std::size_t NetworkShape::*field) {
  return {std::move(name), std::move(help),
          [field](TrainConfig& c, const std::string& v) { c.network.*field = parse_number<std::size_t>(v); },
          [field](const TrainConfig& c) { return std::to_string(c.network.*field); }};
}

inline TrainConfig::Key double_key(std::string name, std::string help, double TrainConfig::*field) {
  return {std::move(name), std::move(help),
          [field](TrainConfig& c, const std::string& v) { c.*field = parse_number<double>(v); },
          [field](const TrainConfig& c) { return format_double(c.*field); }};
}

inline TrainConfig::Key bool_key(std::string name, std::string help, bool TrainConfig::*field) {
  return {std::move(name), std::move(help), [field](TrainConfig& c, const std::string& v) { c.*field = parse_bool(v); },
          [field](const TrainConfig& c) { return std::string(c.*field ? "true" : "false"); }};
}

}  // namespace config_detail

inline const std::vector<TrainConfig::Key>& TrainConfig::keys() {
  using namespace config_detail;
  static const std::vector<Key> table = {
      {"config", "matrix configuration: center, grid2x2 or shape_grid",
       [](TrainConfig& c, const std::string& v) { c.config = parse_config(v); },
       [](const TrainConfig& c) { return std::string(to_string(c.config)); }},
      size_key("count", "instances to generate", &TrainConfig::count),
      size_key("panel_size", "panel raster side in pixels", &TrainConfig::panel_size),
      size_key("dataset_seed", "generator seed", &TrainConfig::dataset_seed),
      size_key("validation_percent", "share of training instances held out for early stopping",
               &TrainConfig::validation_percent),
      size_key("epochs", "maximum training epochs", &TrainConfig::epochs),
      size_key("batch_size", "instances per step", &TrainConfig::batch_size),
      double_key("learning_rate", "ADAM step size", &TrainConfig::learning_rate),
      size_key("patience", "early-stop patience in epochs", &TrainConfig::patience),
      size_key("seed", "training seed (weights, shuffling, augmentation)", &TrainConfig::seed),
      double_key("temperature", "contrastive temperature", &TrainConfig::temperature),
      double_key("gamma", "contrastive loss weight", &TrainConfig::gamma),
      double_key("beta", "auxiliary loss weight", &TrainConfig::beta),
      bool_key("negatives", "use incorrect completions as extra negatives", &TrainConfig::negatives),
      {"negative_scope", "which incorrect completions enter an anchor's denominator: all or others",
       [](TrainConfig& c, const std::string& v) {
         if (v == "all") c.negative_scope = NegativeScope::AllInstances;
         else if (v == "others") c.negative_scope = NegativeScope::OtherInstances;
         else throw std::invalid_argument("expected all or others");
       },
       [](const TrainConfig& c) {
         return std::string(c.negative_scope == NegativeScope::AllInstances ? "all" : "others");
       }},
      {"normalization", "positive-sum normalization: positive_count or literal",
       [](TrainConfig& c, const std::string& v) {
         if (v == "positive_count") c.normalization = PositiveNormalization::PositiveCount;
         else if (v == "literal") c.normalization = PositiveNormalization::Literal;
         else throw std::invalid_argument("expected positive_count or literal");
       },
       [](const TrainConfig& c) {
         return std::string(c.normalization == PositiveNormalization::PositiveCount ? "positive_count" : "literal");
       }},
      {"contrastive_reduction", "reduction over anchors during training: mean or sum",
       [](TrainConfig& c, const std::string& v) {
         if (v == "mean") c.contrastive_reduction = Reduction::Mean;
         else if (v == "sum") c.contrastive_reduction = Reduction::Sum;
         else throw std::invalid_argument("expected mean or sum");
       },
       [](const TrainConfig& c) { return std::string(c.contrastive_reduction == Reduction::Mean ? "mean" : "sum"); }},
      {"scheme", "meta-target encoding: sparse or dense",
       [](TrainConfig& c, const std::string& v) { c.scheme = parse_scheme(v); },
       [](const TrainConfig& c) { return std::string(to_string(c.scheme)); }},
      bool_key("augment", "train on two augmented views per instance", &TrainConfig::augment),
      bool_key("right_angle_rotations", "restrict rotations to multiples of 90 degrees",
               &TrainConfig::right_angle_rotations),
      double_key("augment_probability", "chance that each transform family enters a view",
                 &TrainConfig::augment_probability),
      size_key("linear_epochs", "linear-evaluation epochs", &TrainConfig::linear_epochs),
      double_key("linear_learning_rate", "linear-evaluation step size", &TrainConfig::linear_learning_rate),
      size_key("linear_batch_size", "linear-evaluation batch size", &TrainConfig::linear_batch_size),
      {"encoder", "panel encoder: mlp or conv",
       [](TrainConfig& c, const std::string& v) { c.network.encoder = parse_encoder(v); },
       [](const TrainConfig& c) { return std::string(to_string(c.network.encoder)); }},
      shape_key("input_pool", "mlp encoder input average-pool factor", &NetworkShape::input_pool),
      shape_key("conv_channels", "conv encoder kernels per layer", &NetworkShape::conv_channels),
      shape_key("conv_layers", "conv encoder layers", &NetworkShape::conv_layers),
      shape_key("panel_hidden", "panel network hidden width", &NetworkShape::panel_hidden),
      shape_key("panel_dim", "panel embedding width", &NetworkShape::panel_dim),
      shape_key("line_hidden", "line network hidden width", &NetworkShape::line_hidden),
      shape_key("line_dim", "line code width", &NetworkShape::line_dim),
      shape_key("feature_hidden", "feature network hidden width", &NetworkShape::feature_hidden),
      shape_key("feature_dim", "encoder output width", &NetworkShape::feature_dim),
      shape_key("proj_hidden", "projection hidden width", &NetworkShape::proj_hidden),
      shape_key("proj_dim", "projection output width", &NetworkShape::proj_dim),
      shape_key("rule_hidden", "rule head hidden width", &NetworkShape::rule_hidden),
      shape_key("groups", "panel embedding slots sharing the line and feature networks", &NetworkShape::groups),
  };
  return table;
}

}  // namespace mlcl
