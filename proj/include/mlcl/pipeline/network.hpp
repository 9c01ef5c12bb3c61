#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "mlcl/numerics/graph.hpp"
#include "mlcl/numerics/ops.hpp"
#include "mlcl/rpmgen/panel.hpp"

namespace mlcl {

enum class EncoderKind : std::uint8_t { Mlp, Conv };

inline std::string_view to_string(EncoderKind k) { return k == EncoderKind::Mlp ? "mlp" : "conv"; }

inline EncoderKind parse_encoder(std::string_view s) {
  if (s == "mlp") return EncoderKind::Mlp;
  if (s == "conv") return EncoderKind::Conv;
  throw std::invalid_argument("unknown encoder '" + std::string(s) + "' (expected mlp or conv)");
}

struct NetworkShape {
  EncoderKind encoder = EncoderKind::Mlp;
  std::size_t panel_size = 28;
  std::size_t input_pool = 2;  // mlp only: average-pool factor applied to each panel
  std::size_t conv_channels = 32;
  std::size_t conv_layers = 4;
  std::size_t panel_hidden = 128;
  std::size_t panel_dim = 64;
  std::size_t line_hidden = 32;
  std::size_t line_dim = 16;
  std::size_t feature_hidden = 64;
  std::size_t feature_dim = 64;
  std::size_t proj_hidden = 128;
  std::size_t proj_dim = 32;
  std::size_t rule_hidden = 128;
  std::size_t rule_dim = 38;
  /// Panel embeddings split into this many slots; the line and feature
  /// networks are shared across slots and a final layer merges them.
  std::size_t groups = 8;

  std::size_t pooled_side() const {
    if (input_pool == 0 || panel_size % input_pool != 0) {
      throw std::invalid_argument("input_pool must divide the panel size");
    }
    return panel_size / input_pool;
  }

  std::size_t slot_dim() const {
    if (groups == 0 || panel_dim % groups != 0) throw std::invalid_argument("groups must divide panel_dim");
    return panel_dim / groups;
  }
};

/// Dense layer y = x W + b with W stored [in x out].
struct Linear {
  Parameter* w = nullptr;
  Parameter* b = nullptr;

  Var operator()(Graph& g, Var x) const { return add_bias(matmul(x, g.parameter(*w)), g.parameter(*b)); }
};

/// Per-instance panel pixels as a [16 x D] block, scaled to [0, 1].
inline std::vector<double> panel_inputs(const RpmInstance& inst, const NetworkShape& shape) {
  if (inst.rasters.size() != kPanelsPerInstance) throw std::invalid_argument("instance must carry 16 rasters");
  const bool pool = shape.encoder == EncoderKind::Mlp;
  const std::size_t k = pool ? shape.input_pool : 1;
  const std::size_t side = shape.panel_size / k;
  std::vector<double> out(kPanelsPerInstance * side * side, 0.0);
  const double scale = 1.0 / (255.0 * static_cast<double>(k * k));
  for (std::size_t p = 0; p < kPanelsPerInstance; ++p) {
    const Raster& r = inst.rasters[p];
    if (r.width != shape.panel_size || r.height != shape.panel_size) {
      throw std::invalid_argument("raster is " + std::to_string(r.width) + "x" + std::to_string(r.height) +
                                  ", network expects " + std::to_string(shape.panel_size));
    }
    double* dst = out.data() + p * side * side;
    for (std::size_t y = 0; y < r.height; ++y)
      for (std::size_t x = 0; x < r.width; ++x) dst[(y / k) * side + x / k] += r.at(x, y) * scale;
  }
  return out;
}

/// Encoder f, projection head g, rule head rho and scoring head s.
///
/// f embeds each of the 16 panels, runs a shared line network over the
/// three rows and three columns of every completed matrix and maps the six
/// line codes to an l2-normalized feature h.
class NetworkSet {
 public:
  NetworkSet() = default;
  NetworkSet(const NetworkShape& shape, std::uint64_t seed) : shape_(shape) {
    std::mt19937_64 rng(seed);
    if (shape.encoder == EncoderKind::Mlp) {
      const std::size_t side = shape.pooled_side();
      panel_ = {layer("encoder.panel.0", side * side, shape.panel_hidden, rng),
                layer("encoder.panel.1", shape.panel_hidden, shape.panel_dim, rng)};
    } else {
      std::size_t ch = 1, side = shape.panel_size;
      for (std::size_t i = 0; i < shape.conv_layers; ++i) {
        ConvGeometry geom{ch, side, side, 3, 2, 1};
        conv_.push_back({param("encoder.conv." + std::to_string(i) + ".w", {shape.conv_channels, ch * 9},
                               std::sqrt(2.0 / static_cast<double>(ch * 9)), rng),
                         param("encoder.conv." + std::to_string(i) + ".b", {shape.conv_channels}, 0.0, rng), geom});
        ch = shape.conv_channels;
        side = geom.out_height();
      }
      panel_ = {layer("encoder.panel.0", ch * side * side, shape.panel_dim, rng)};
    }
    line_ = {layer("encoder.line.0", 3 * shape.slot_dim(), shape.line_hidden, rng),
             layer("encoder.line.1", shape.line_hidden, shape.line_dim, rng)};
    feature_ = {layer("encoder.feature.0", 6 * shape.line_dim, shape.feature_hidden, rng),
                layer("encoder.feature.1", shape.feature_hidden, shape.groups > 1 ? shape.line_dim : shape.feature_dim,
                      rng)};
    if (shape.groups > 1) merge_ = layer("encoder.merge", shape.groups * shape.line_dim, shape.feature_dim, rng);
    encoder_count_ = params_.size();
    proj_ = {layer("projection.0", shape.feature_dim, shape.proj_hidden, rng),
             layer("projection.1", shape.proj_hidden, shape.proj_dim, rng)};
    proj_end_ = params_.size();
    rule_ = {layer("rule.0", kChoicePanels * shape.feature_dim, shape.rule_hidden, rng),
             layer("rule.1", shape.rule_hidden, shape.rule_dim, rng)};
    rule_end_ = params_.size();
    score_ = layer("score", shape.feature_dim, 1, rng);
  }

  NetworkSet(const NetworkSet&) = delete;
  NetworkSet& operator=(const NetworkSet&) = delete;
  NetworkSet(NetworkSet&&) = default;
  NetworkSet& operator=(NetworkSet&&) = default;

  const NetworkShape& shape() const { return shape_; }

  std::vector<Parameter*> all_parameters() { return range(0, params_.size()); }
  std::vector<Parameter*> encoder_parameters() { return range(0, encoder_count_); }
  std::vector<Parameter*> projection_parameters() { return range(encoder_count_, proj_end_); }
  std::vector<Parameter*> rule_parameters() { return range(proj_end_, rule_end_); }
  std::vector<Parameter*> score_parameters() { return range(rule_end_, params_.size()); }

  /// Features h for all 8 completions of every instance, [N*8 x feature_dim],
  /// rows in (instance, choice) order.
  Var encode(Graph& g, const std::vector<const RpmInstance*>& batch) const {
    if (batch.empty()) throw std::invalid_argument("encode: empty batch");
    const std::size_t n = batch.size();
    std::vector<double> pixels;
    for (const RpmInstance* inst : batch) {
      auto block = panel_inputs(*inst, shape_);
      pixels.insert(pixels.end(), block.begin(), block.end());
    }
    const std::size_t per_panel = pixels.size() / (n * kPanelsPerInstance);
    Var x = g.constant(Tensor({n * kPanelsPerInstance, per_panel}, std::move(pixels)));

    Var panels = x;
    for (const auto& c : conv_)
      panels = relu(layer_norm_rows(conv2d(panels, g.parameter(*c.w), g.parameter(*c.b), c.geom)));
    panels = relu(mlp(g, panel_, panels));

    // Lines per instance: 4 context lines (row 0, row 1, column 0, column 1)
    // then, per choice, the completed row 2 and column 2.
    std::vector<std::vector<std::size_t>> line_index;
    line_index.reserve(n * 20);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t b = i * kPanelsPerInstance;
      line_index.push_back({b + 0, b + 1, b + 2});
      line_index.push_back({b + 3, b + 4, b + 5});
      line_index.push_back({b + 0, b + 3, b + 6});
      line_index.push_back({b + 1, b + 4, b + 7});
    }
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t b = i * kPanelsPerInstance;
      for (std::size_t l = 0; l < kChoicePanels; ++l) {
        line_index.push_back({b + 6, b + 7, b + 8 + l});
        line_index.push_back({b + 2, b + 5, b + 8 + l});
      }
    }
    // Slot k of every panel becomes its own row, so one line network serves all slots.
    const std::size_t slots = shape_.groups;
    if (slots > 1) {
      panels = reshape(panels, {n * kPanelsPerInstance * slots, shape_.slot_dim()});
      std::vector<std::vector<std::size_t>> split;
      split.reserve(line_index.size() * slots);
      for (const auto& l : line_index)
        for (std::size_t k = 0; k < slots; ++k) split.push_back({l[0] * slots + k, l[1] * slots + k, l[2] * slots + k});
      line_index = std::move(split);
    }
    Var lines = relu(mlp(g, line_, gather_concat(panels, line_index)));

    std::vector<std::vector<std::size_t>> completion_index;
    completion_index.reserve(n * kChoicePanels);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t ctx = i * 4;
      for (std::size_t l = 0; l < kChoicePanels; ++l) {
        const std::size_t cand = n * 4 + (i * kChoicePanels + l) * 2;
        completion_index.push_back({ctx + 0, ctx + 1, cand, ctx + 2, ctx + 3, cand + 1});
      }
    }
    if (slots > 1) {
      std::vector<std::vector<std::size_t>> split;
      split.reserve(completion_index.size() * slots);
      for (const auto& c : completion_index)
        for (std::size_t k = 0; k < slots; ++k) {
          split.emplace_back();
          for (std::size_t line : c) split.back().push_back(line * slots + k);
        }
      Var per_slot = relu(mlp(g, feature_, gather_concat(lines, split)));
      Var merged = reshape(per_slot, {completion_index.size(), slots * shape_.line_dim});
      return l2_normalize_rows(merge_(g, merged));
    }
    Var h = mlp(g, feature_, gather_concat(lines, completion_index));
    return l2_normalize_rows(h);
  }

  /// Projections z = g(h), l2-normalized.
  Var project(Graph& g, Var h) const { return l2_normalize_rows(mlp(g, proj_, h)); }

  /// Rule logits from the 8 completion features of each instance, [N x d].
  Var rule_logits(Graph& g, Var h) const {
    const std::size_t rows = h.value().rows();
    if (rows % kChoicePanels != 0) throw std::invalid_argument("rule head needs 8 features per instance");
    return mlp(g, rule_, reshape(h, {rows / kChoicePanels, kChoicePanels * shape_.feature_dim}));
  }

  /// Scores of the 8 completions of each instance, [N x 8].
  Var scores(Graph& g, Var h) const {
    const std::size_t rows = h.value().rows();
    if (rows % kChoicePanels != 0) throw std::invalid_argument("scoring head needs 8 features per instance");
    return reshape(score_(g, h), {rows / kChoicePanels, kChoicePanels});
  }

  /// Reinitializes the scoring head, used before a linear evaluation.
  void reset_score_head(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    init(*score_.w, std::sqrt(1.0 / static_cast<double>(shape_.feature_dim)), rng);
    score_.b->value.fill(0.0);
  }

 private:
  struct Conv {
    Parameter* w;
    Parameter* b;
    ConvGeometry geom;
  };

  static void init(Parameter& p, double stddev, std::mt19937_64& rng) {
    std::normal_distribution<double> d(0.0, stddev);
    for (double& v : p.value.data()) v = stddev == 0.0 ? 0.0 : d(rng);
    p.zero_grad();
  }

  Parameter* param(std::string name, std::vector<std::size_t> shape, double stddev, std::mt19937_64& rng) {
    params_.emplace_back(std::move(name), Tensor(std::move(shape)));
    init(params_.back(), stddev, rng);
    return &params_.back();
  }

  Linear layer(const std::string& name, std::size_t in, std::size_t out, std::mt19937_64& rng) {
    Linear l;
    l.w = param(name + ".w", {in, out}, std::sqrt(2.0 / static_cast<double>(in)), rng);
    l.b = param(name + ".b", {out}, 0.0, rng);
    return l;
  }

  static Var mlp(Graph& g, const std::vector<Linear>& layers, Var x) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      x = layers[i](g, x);
      if (i + 1 < layers.size()) x = relu(x);
    }
    return x;
  }

  std::vector<Parameter*> range(std::size_t begin, std::size_t end) {
    std::vector<Parameter*> out;
    for (std::size_t i = begin; i < end; ++i) out.push_back(&params_[i]);
    return out;
  }

  NetworkShape shape_;
  std::deque<Parameter> params_;  // stable addresses
  std::size_t encoder_count_ = 0, proj_end_ = 0, rule_end_ = 0;
  std::vector<Conv> conv_;
  std::vector<Linear> panel_, line_, feature_, proj_, rule_;
  Linear merge_;
  Linear score_;
};

/// FNV-1a over parameter names, shapes and raw values.
inline std::uint64_t parameter_hash(const std::vector<Parameter*>& params) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ull;
    }
  };
  for (const Parameter* p : params) {
    mix(p->name.data(), p->name.size());
    for (std::size_t d : p->value.shape()) mix(&d, sizeof d);
    mix(p->value.data().data(), p->value.size() * sizeof(double));
  }
  return h;
}

}  // namespace mlcl
