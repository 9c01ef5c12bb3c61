#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "mlcl/augment.hpp"
#include "mlcl/losses.hpp"
#include "mlcl/numerics/adam.hpp"
#include "mlcl/pipeline/config.hpp"
#include "mlcl/pipeline/network.hpp"
#include "mlcl/pipeline/report.hpp"
#include "mlcl/rpmgen/verify.hpp"

namespace mlcl {

/// Raised when a training loss stops being finite.
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using InstanceRefs = std::vector<const RpmInstance*>;

// ---------------------------------------------------------------------------
// Data plumbing

struct Split {
  InstanceRefs train;
  InstanceRefs validation;
};

/// Deterministic hold-out decision from the instance seed alone.
inline bool in_validation(const RpmInstance& inst, std::size_t percent) {
  return splitmix64(inst.seed ^ 0xA5A5F00DDEADBEEFull) % 100 < percent;
}

inline Split split_dataset(const std::vector<RpmInstance>& data, std::size_t percent) {
  Split s;
  for (const auto& inst : data) (in_validation(inst, percent) ? s.validation : s.train).push_back(&inst);
  return s;
}

inline InstanceRefs refs(const std::vector<RpmInstance>& data) {
  InstanceRefs out;
  out.reserve(data.size());
  for (const auto& inst : data) out.push_back(&inst);
  return out;
}

struct CompletedMatrix {
  int choice = 1;  // 1-based
  std::array<PanelSpec, 9> panels;
  std::array<Raster, 9> rasters;
};

/// Matrix l is the 8 context panels plus choice l in the bottom-right slot.
inline std::vector<CompletedMatrix> complete_candidates(const RpmInstance& inst) {
  if (inst.rasters.size() != kPanelsPerInstance) throw std::invalid_argument("instance must carry 16 rasters");
  std::vector<CompletedMatrix> out(kChoicePanels);
  for (std::size_t l = 0; l < kChoicePanels; ++l) {
    out[l].choice = static_cast<int>(l + 1);
    out[l].panels = completed_grid(inst, l);
    std::copy_n(inst.rasters.begin(), kContextPanels, out[l].rasters.begin());
    out[l].rasters[8] = inst.rasters[kContextPanels + l];
  }
  return out;
}

/// Features h of the 8 completions, [8 x feature_dim]. The matrices must
/// share their context panels, as produced by complete_candidates.
inline Tensor encode_instance(const NetworkSet& net, const std::vector<CompletedMatrix>& matrices) {
  if (matrices.size() != kChoicePanels) throw std::invalid_argument("encode_instance needs 8 completed matrices");
  RpmInstance inst;
  inst.rasters.assign(kPanelsPerInstance, Raster());
  for (std::size_t p = 0; p < kContextPanels; ++p) inst.rasters[p] = matrices[0].rasters[p];
  for (std::size_t l = 0; l < kChoicePanels; ++l) {
    for (std::size_t p = 0; p < kContextPanels; ++p)
      if (!(matrices[l].rasters[p] == inst.rasters[p])) {
        throw std::invalid_argument("completed matrices do not share their context panels");
      }
    inst.rasters[kContextPanels + l] = matrices[l].rasters[8];
  }
  Graph g;
  return net.encode(g, {&inst}).value();
}

/// Frozen features of every instance, [N*8 x feature_dim], computed in
/// chunks that may run on several threads; rows keep instance order.
inline Tensor compute_features(const NetworkSet& net, const InstanceRefs& data, std::size_t workers = 1,
                               std::size_t chunk = 64) {
  const std::size_t dim = net.shape().feature_dim;
  Tensor out({data.size() * kChoicePanels, dim});
  if (data.empty()) return out;
  const std::size_t chunks = (data.size() + chunk - 1) / chunk;
  auto work = [&](std::size_t first, std::size_t stride) {
    for (std::size_t c = first; c < chunks; c += stride) {
      const std::size_t b = c * chunk, e = std::min(data.size(), b + chunk);
      InstanceRefs part(data.begin() + static_cast<std::ptrdiff_t>(b), data.begin() + static_cast<std::ptrdiff_t>(e));
      Graph g;
      const Tensor& h = net.encode(g, part).value();
      std::copy(h.data().begin(), h.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(b * kChoicePanels * dim));
    }
  };
  workers = std::max<std::size_t>(1, std::min(workers, chunks));
  if (workers == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w, workers);
    for (auto& t : pool) t.join();
  }
  return out;
}

/// Rows [first, first+count) of a matrix.
inline Tensor slice_rows(const Tensor& t, std::size_t first, std::size_t count) {
  const std::size_t cols = t.cols();
  std::vector<double> v(t.data().begin() + static_cast<std::ptrdiff_t>(first * cols),
                        t.data().begin() + static_cast<std::ptrdiff_t>((first + count) * cols));
  return Tensor({count, cols}, std::move(v));
}

/// Rule logits for one instance from its 8 completion features (choice order).
inline Tensor rule_head_predict(const NetworkSet& net, const Tensor& features) {
  if (features.rank() != 2 || features.rows() != kChoicePanels) {
    throw std::invalid_argument("rule head expects 8 feature rows, got " + features.shape_string());
  }
  if (features.cols() != net.shape().feature_dim) throw std::invalid_argument("feature width mismatch");
  Graph g;
  const Tensor& logits = net.rule_logits(g, g.constant(features)).value();
  return logits.reshaped({logits.size()});
}

inline std::vector<std::string> target_names(Grammar g, EncodingScheme s) {
  if (s == EncodingScheme::Sparse) {
    std::vector<std::string> out;
    for (const Rule& r : enumerate_rule_space(g)) out.push_back(r.to_string());
    return out;
  }
  if (g == Grammar::TripleStyle) {
    return {"shape", "line", "color", "number", "position", "size", "type", "progression", "XOR", "OR", "AND",
            "consistent_union"};
  }
  return {"Constant", "Progression", "Arithmetic", "Distribute_Three", "Number", "Position", "Type", "Size", "Color"};
}

namespace train_detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

inline std::vector<Tensor> snapshot(const std::vector<Parameter*>& params) {
  std::vector<Tensor> out;
  for (const Parameter* p : params) out.push_back(p->value);
  return out;
}

inline void restore(const std::vector<Parameter*>& params, const std::vector<Tensor>& values) {
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = values[i];
}

inline void zero_grads(const std::vector<Parameter*>& params) {
  for (Parameter* p : params) p->zero_grad();
}

inline Tensor targets_for(const InstanceRefs& batch, EncodingScheme scheme) {
  const std::size_t d = encoding_length(grammar_of(batch.front()->config), scheme);
  Tensor t({batch.size(), d});
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const MetaTarget m = encode(batch[i]->structure, scheme);
    for (std::size_t k = 0; k < d; ++k) t(i, k) = m.bits[k];
  }
  return t;
}

// Losses here are O(log batch / temperature + beta * |logit|); anything past this is runaway.
inline constexpr double kLossCeiling = 1e12;

inline void require_finite(double v, const std::string& what) {
  if (!std::isfinite(v)) throw DivergenceError(what + " became non-finite (" + std::to_string(v) + ")");
  if (std::abs(v) > kLossCeiling) throw DivergenceError(what + " exceeded " + std::to_string(kLossCeiling) + " (" + std::to_string(v) + ")");
}

inline std::vector<InstanceRefs> minibatches(const InstanceRefs& data, std::size_t batch, Rng* shuffle_rng,
                                             std::size_t min_size) {
  InstanceRefs order = data;
  if (shuffle_rng) std::shuffle(order.begin(), order.end(), *shuffle_rng);
  std::vector<InstanceRefs> out;
  for (std::size_t b = 0; b < order.size(); b += batch) {
    const std::size_t e = std::min(order.size(), b + batch);
    if (e - b < min_size) continue;
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(b), order.begin() + static_cast<std::ptrdiff_t>(e));
  }
  return out;
}

struct StepLosses {
  double total = 0.0;
  double contrastive = 0.0;
  double aux = 0.0;
  double answer = 0.0;
  std::size_t correct = 0;
};

/// Builds the MLCL objective for a set of views on `g`.
inline Var contrastive_objective(Graph& g, const NetworkSet& net, const InstanceRefs& views, const TrainConfig& cfg,
                                 StepLosses& out) {
  Var h = net.encode(g, views);
  const std::size_t v = views.size();
  Var total = g.constant(Tensor::scalar(0.0));
  if (cfg.gamma > 0.0) {
    Var z = net.project(g, h);
    std::vector<std::size_t> correct, incorrect;
    std::vector<LabelSet> labels;
    for (std::size_t i = 0; i < v; ++i) {
      for (std::size_t l = 0; l < kChoicePanels; ++l)
        (l == views[i]->answer_slot() ? correct : incorrect).push_back(i * kChoicePanels + l);
      labels.push_back(rule_labels(views[i]->structure));
    }
    std::optional<Var> zneg;
    if (cfg.negatives) zneg = gather_rows(z, incorrect);
    Var lc = contrastive_loss(gather_rows(z, correct), zneg, build_positive_mask(labels), cfg.contrastive_options());
    if (cfg.contrastive_reduction == Reduction::Mean) lc = scale(lc, 1.0 / static_cast<double>(v));
    out.contrastive = lc.value().item();
    total = add(total, scale(lc, cfg.gamma));
  }
  if (cfg.beta > 0.0) {
    Var la = bce_with_logits(net.rule_logits(g, h), targets_for(views, cfg.scheme));
    out.aux = la.value().item();
    total = add(total, scale(la, cfg.beta));
  }
  out.total = total.value().item();
  return total;
}

inline std::vector<int> correct_indices(const InstanceRefs& batch) {
  std::vector<int> out;
  for (const auto* inst : batch) out.push_back(inst->correct_index);
  return out;
}

inline std::size_t count_correct(const Tensor& scores, const InstanceRefs& batch) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    auto row = scores.row(i);
    const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    if (best == batch[i]->answer_slot()) ++hits;
  }
  return hits;
}

/// Supervised objective: answer cross-entropy plus optional auxiliary term.
inline Var supervised_objective(Graph& g, const NetworkSet& net, const InstanceRefs& batch, double beta,
                                EncodingScheme scheme, StepLosses& out) {
  Var h = net.encode(g, batch);
  Var scores = net.scores(g, h);
  Var ce = softmax_cross_entropy(scores, correct_indices(batch));
  out.answer = ce.value().item();
  out.correct = count_correct(scores.value(), batch);
  Var total = ce;
  if (beta > 0.0) {
    Var la = bce_with_logits(net.rule_logits(g, h), targets_for(batch, scheme));
    out.aux = la.value().item();
    total = add(total, scale(la, beta));
  }
  out.total = total.value().item();
  return total;
}

/// Per-bit precision and recall of thresholded rule logits.
inline std::vector<RuleMetric> rule_metrics(const NetworkSet& net, const Tensor& features, const InstanceRefs& data,
                                            EncodingScheme scheme) {
  if (data.empty()) return {};
  const Grammar grammar = grammar_of(data.front()->config);
  const auto names = target_names(grammar, scheme);
  std::vector<std::size_t> tp(names.size()), fp(names.size()), fn(names.size()), support(names.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Tensor logits = rule_head_predict(net, slice_rows(features, i * kChoicePanels, kChoicePanels));
    const MetaTarget target = encode(data[i]->structure, scheme);
    for (std::size_t k = 0; k < names.size(); ++k) {
      const bool pred = logits[k] > 0.0, truth = target.bits[k] != 0;
      support[k] += truth;
      if (pred && truth) ++tp[k];
      if (pred && !truth) ++fp[k];
      if (!pred && truth) ++fn[k];
    }
  }
  std::vector<RuleMetric> out;
  for (std::size_t k = 0; k < names.size(); ++k) {
    if (support[k] == 0 && fp[k] == 0) continue;
    RuleMetric m{names[k], 0.0, 0.0, support[k]};
    if (tp[k] + fp[k] > 0) m.precision = static_cast<double>(tp[k]) / static_cast<double>(tp[k] + fp[k]);
    if (tp[k] + fn[k] > 0) m.recall = static_cast<double>(tp[k]) / static_cast<double>(tp[k] + fn[k]);
    out.push_back(m);
  }
  return out;
}

inline double accuracy(const NetworkSet& net, const Tensor& features, const InstanceRefs& data) {
  if (data.empty()) return 0.0;
  Graph g;
  const Tensor& s = net.scores(g, g.constant(features)).value();
  return static_cast<double>(count_correct(s, data)) / static_cast<double>(data.size());
}

}  // namespace train_detail

// ---------------------------------------------------------------------------
// Protocols

/// Contrastive pre-training of f, g and rho with the joint objective. Keeps
/// the weights of the epoch with the lowest validation loss.
inline RunReport pretrain_contrastive(NetworkSet& net, const InstanceRefs& train, const InstanceRefs& validation,
                                      const TrainConfig& cfg) {
  using namespace train_detail;
  cfg.validate();
  if (train.size() < 2) throw std::invalid_argument("pre-training needs at least 2 instances");
  if (cfg.gamma == 0.0 && cfg.beta == 0.0) throw std::invalid_argument("gamma and beta cannot both be zero");
  const auto t0 = Clock::now();
  RunReport rep;
  rep.phase = "pretrain";
  rep.seed = cfg.seed;
  rep.config_text = cfg.to_text();

  auto params = net.encoder_parameters();
  for (Parameter* p : net.projection_parameters()) params.push_back(p);
  for (Parameter* p : net.rule_parameters()) params.push_back(p);
  AdamState adam(AdamOptions{cfg.learning_rate});
  Rng order_rng(splitmix64(cfg.seed ^ 0x0DDBA11ull));
  Rng aug_rng(splitmix64(cfg.seed ^ 0xA11CEull));
  AugmentOptions aug;
  aug.enabled = cfg.augment;
  aug.right_angle_rotations = cfg.right_angle_rotations;
  aug.probability = cfg.augment_probability;
  aug.panel_size = cfg.panel_size;

  auto validation_loss = [&]() {
    if (validation.size() < 2) return 0.0;
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& batch : minibatches(validation, cfg.batch_size, nullptr, 2)) {
      Graph g;
      StepLosses l;
      contrastive_objective(g, net, batch, cfg, l);
      sum += l.total * static_cast<double>(batch.size());
      n += batch.size();
    }
    return n ? sum / static_cast<double>(n) : 0.0;
  };

  double best = std::numeric_limits<double>::infinity();
  std::vector<Tensor> best_values = snapshot(params);
  std::size_t since_best = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    std::size_t seen = 0;
    for (const auto& batch : minibatches(train, cfg.batch_size, &order_rng, 2)) {
      std::vector<AugmentedView> views = augment_batch(batch, aug_rng, aug);
      InstanceRefs view_refs;
      for (const auto& v : views) view_refs.push_back(&v.instance);
      zero_grads(params);
      Graph g;
      StepLosses l;
      Var loss = contrastive_objective(g, net, view_refs, cfg, l);
      require_finite(l.total, "pre-training loss at epoch " + std::to_string(epoch));
      g.backward(loss);
      adam.step(params);
      const auto w = static_cast<double>(batch.size());
      rec.train_loss += l.total * w;
      rec.train_contrastive += l.contrastive * w;
      rec.train_aux += l.aux * w;
      seen += batch.size();
    }
    if (seen) {
      rec.train_loss /= static_cast<double>(seen);
      rec.train_contrastive /= static_cast<double>(seen);
      rec.train_aux /= static_cast<double>(seen);
    }
    rec.validation_loss = validation.size() >= 2 ? validation_loss() : rec.train_loss;
    require_finite(rec.validation_loss, "validation loss at epoch " + std::to_string(epoch));
    rep.epochs.push_back(rec);
    if (rec.validation_loss < best) {
      best = rec.validation_loss;
      best_values = snapshot(params);
      rep.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      rep.stopped_early = epoch < cfg.epochs;
      break;
    }
  }
  restore(params, best_values);
  if (cfg.beta > 0.0 && !validation.empty()) {
    rep.rule_metrics = rule_metrics(net, compute_features(net, validation), validation, cfg.scheme);
  }
  rep.wall_clock_seconds = seconds_since(t0);
  return rep;
}

/// Trains only the scoring head on frozen encoder features.
inline RunReport linear_eval(NetworkSet& net, const InstanceRefs& train, const InstanceRefs& validation,
                             const InstanceRefs& test, const TrainConfig& cfg, std::size_t workers = 1) {
  using namespace train_detail;
  cfg.validate();
  const auto t0 = Clock::now();
  RunReport rep;
  rep.phase = "linear_eval";
  rep.seed = cfg.seed;
  rep.config_text = cfg.to_text();
  rep.encoder_hash_before = parameter_hash(net.encoder_parameters());

  const Tensor f_train = compute_features(net, train, workers);
  const Tensor f_val = compute_features(net, validation, workers);
  const Tensor f_test = compute_features(net, test, workers);

  net.reset_score_head(splitmix64(cfg.seed ^ 0x5C0E5ull));
  auto params = net.score_parameters();
  AdamState adam(AdamOptions{cfg.linear_learning_rate});
  Rng order_rng(splitmix64(cfg.seed ^ 0x1EA12ull));

  // Index-based batching over the precomputed feature rows.
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const std::size_t dim = net.shape().feature_dim;

  auto eval_loss = [&](const Tensor& f, const InstanceRefs& data) {
    if (data.empty()) return 0.0;
    Graph g;
    return softmax_cross_entropy(net.scores(g, g.constant(f)), correct_indices(data)).value().item();
  };

  double best = std::numeric_limits<double>::infinity();
  std::vector<Tensor> best_values = snapshot(params);
  std::size_t since_best = 0;
  for (std::size_t epoch = 1; epoch <= cfg.linear_epochs && !train.empty(); ++epoch) {
    std::shuffle(order.begin(), order.end(), order_rng);
    EpochRecord rec;
    rec.epoch = epoch;
    std::size_t hits = 0;
    for (std::size_t b = 0; b < order.size(); b += cfg.linear_batch_size) {
      const std::size_t e = std::min(order.size(), b + cfg.linear_batch_size);
      Tensor fb({(e - b) * kChoicePanels, dim});
      InstanceRefs batch;
      for (std::size_t i = b; i < e; ++i) {
        const auto src = f_train.data().subspan(order[i] * kChoicePanels * dim, kChoicePanels * dim);
        std::copy(src.begin(), src.end(), fb.data().begin() + static_cast<std::ptrdiff_t>((i - b) * kChoicePanels * dim));
        batch.push_back(train[order[i]]);
      }
      zero_grads(params);
      Graph g;
      Var scores = net.scores(g, g.constant(std::move(fb)));
      Var loss = softmax_cross_entropy(scores, correct_indices(batch));
      require_finite(loss.value().item(), "linear-evaluation loss");
      g.backward(loss);
      adam.step(params);
      rec.train_answer += loss.value().item() * static_cast<double>(batch.size());
      hits += count_correct(scores.value(), batch);
    }
    rec.train_answer /= static_cast<double>(train.size());
    rec.train_loss = rec.train_answer;
    rec.train_accuracy = static_cast<double>(hits) / static_cast<double>(train.size());
    rec.validation_loss = validation.empty() ? rec.train_loss : eval_loss(f_val, validation);
    rec.validation_accuracy = accuracy(net, f_val, validation);
    rep.epochs.push_back(rec);
    if (rec.validation_loss < best) {
      best = rec.validation_loss;
      best_values = snapshot(params);
      rep.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      rep.stopped_early = epoch < cfg.linear_epochs;
      break;
    }
  }
  restore(params, best_values);
  rep.train_accuracy = accuracy(net, f_train, train);
  rep.validation_accuracy = accuracy(net, f_val, validation);
  rep.test_accuracy = accuracy(net, f_test, test);
  rep.test_count = test.size();
  rep.encoder_hash_after = parameter_hash(net.encoder_parameters());
  if (rep.encoder_hash_after != rep.encoder_hash_before) {
    throw std::logic_error("encoder weights changed during linear evaluation");
  }
  rep.wall_clock_seconds = seconds_since(t0);
  return rep;
}

enum class SupervisedMode : std::uint8_t { Ce, CeAuxDense, CeAuxSparse };

inline std::string_view to_string(SupervisedMode m) {
  switch (m) {
    case SupervisedMode::Ce: return "ce";
    case SupervisedMode::CeAuxDense: return "ce-aux-dense";
    case SupervisedMode::CeAuxSparse: return "ce-aux-sparse";
  }
  return "?";
}

/// End-to-end training of f and s (and rho in the AUX modes) on answer
/// cross-entropy plus beta times the auxiliary loss.
inline RunReport train_supervised(NetworkSet& net, const InstanceRefs& train, const InstanceRefs& validation,
                                  const InstanceRefs& test, const TrainConfig& cfg, SupervisedMode mode) {
  using namespace train_detail;
  cfg.validate();
  if (train.empty()) throw std::invalid_argument("supervised training needs data");
  const bool aux = mode != SupervisedMode::Ce;
  const EncodingScheme scheme = mode == SupervisedMode::CeAuxDense ? EncodingScheme::Dense : EncodingScheme::Sparse;
  if (aux && net.shape().rule_dim != encoding_length(grammar_of(train.front()->config), scheme)) {
    throw std::invalid_argument("rule head width does not match the mode's encoding");
  }
  const double beta = aux ? cfg.beta : 0.0;
  const auto t0 = Clock::now();
  RunReport rep;
  rep.phase = "supervised";
  rep.mode = std::string(to_string(mode));
  rep.seed = cfg.seed;
  rep.config_text = cfg.to_text();

  auto params = net.encoder_parameters();
  for (Parameter* p : net.score_parameters()) params.push_back(p);
  if (aux)
    for (Parameter* p : net.rule_parameters()) params.push_back(p);
  AdamState adam(AdamOptions{cfg.learning_rate});
  Rng order_rng(splitmix64(cfg.seed ^ 0x0DDBA11ull));

  auto evaluate = [&](const InstanceRefs& data, double& loss, double& acc) {
    loss = acc = 0.0;
    if (data.empty()) return;
    std::size_t hits = 0;
    for (const auto& batch : minibatches(data, cfg.batch_size, nullptr, 1)) {
      Graph g;
      StepLosses l;
      supervised_objective(g, net, batch, beta, scheme, l);
      loss += l.total * static_cast<double>(batch.size());
      hits += l.correct;
    }
    loss /= static_cast<double>(data.size());
    acc = static_cast<double>(hits) / static_cast<double>(data.size());
  };

  double best = std::numeric_limits<double>::infinity();
  std::vector<Tensor> best_values = snapshot(params);
  std::size_t since_best = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    std::size_t hits = 0;
    for (const auto& batch : minibatches(train, cfg.batch_size, &order_rng, 1)) {
      zero_grads(params);
      Graph g;
      StepLosses l;
      Var loss = supervised_objective(g, net, batch, beta, scheme, l);
      require_finite(l.total, "supervised loss at epoch " + std::to_string(epoch));
      g.backward(loss);
      adam.step(params);
      const auto w = static_cast<double>(batch.size());
      rec.train_loss += l.total * w;
      rec.train_answer += l.answer * w;
      rec.train_aux += l.aux * w;
      hits += l.correct;
    }
    const auto n = static_cast<double>(train.size());
    rec.train_loss /= n;
    rec.train_answer /= n;
    rec.train_aux /= n;
    rec.train_accuracy = static_cast<double>(hits) / n;
    if (validation.empty()) {
      rec.validation_loss = rec.train_loss;
    } else {
      evaluate(validation, rec.validation_loss, rec.validation_accuracy);
    }
    require_finite(rec.validation_loss, "validation loss at epoch " + std::to_string(epoch));
    rep.epochs.push_back(rec);
    if (rec.validation_loss < best) {
      best = rec.validation_loss;
      best_values = snapshot(params);
      rep.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      rep.stopped_early = epoch < cfg.epochs;
      break;
    }
  }
  restore(params, best_values);
  double loss = 0.0;
  evaluate(train, loss, rep.train_accuracy);
  evaluate(validation, loss, rep.validation_accuracy);
  evaluate(test, loss, rep.test_accuracy);
  rep.test_count = test.size();
  if (aux) {
    const InstanceRefs& held_out = test.empty() ? validation : test;
    if (!held_out.empty()) rep.rule_metrics = rule_metrics(net, compute_features(net, held_out), held_out, scheme);
  }
  rep.wall_clock_seconds = seconds_since(t0);
  return rep;
}

// ---------------------------------------------------------------------------
// Ablation

struct AblationCell {
  std::string label;
  std::vector<std::string> overrides;  // key=value applied on top of the base config
};

struct AblationResult {
  AblationCell cell;
  TrainConfig config;
  RunReport pretrain;
  RunReport linear;
};

/// Full MLCL and its three reduced variants.
inline std::vector<AblationCell> directional_variants() {
  return {{"full", {}},
          {"beta0", {"beta=0"}},
          {"gamma0", {"gamma=0"}},
          {"no_negatives", {"negatives=false"}}};
}

/// beta x batch size x negatives x augmentation.
inline std::vector<AblationCell> sweep_grid() {
  std::vector<AblationCell> out;
  for (const char* beta : {"0", "1", "5", "10", "15"})
    for (const char* batch : {"32", "64", "128"})
      for (const char* neg : {"true", "false"})
        for (const char* aug : {"true", "false"}) {
          AblationCell c;
          c.label = std::string("beta") + beta + "_batch" + batch + (std::string(neg) == "true" ? "_neg" : "_noneg") +
                    (std::string(aug) == "true" ? "_aug" : "_noaug");
          c.overrides = {std::string("beta=") + beta, std::string("batch_size=") + batch,
                         std::string("negatives=") + neg, std::string("augment=") + aug};
          out.push_back(std::move(c));
        }
  return out;
}

inline TrainConfig with_overrides(TrainConfig base, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) base.apply_override(o);
  base.validate();
  return base;
}

/// Pre-trains and linearly evaluates a fresh network per cell. Cells run on
/// up to `workers` threads; each cell is deterministic on its own.
inline std::vector<AblationResult> ablate(const InstanceRefs& train, const InstanceRefs& validation,
                                          const InstanceRefs& test, const TrainConfig& base,
                                          const std::vector<AblationCell>& cells, std::size_t workers = 1) {
  std::vector<AblationResult> out(cells.size());
  std::vector<std::exception_ptr> errors(cells.size());
  auto run = [&](std::size_t first, std::size_t stride) {
    for (std::size_t i = first; i < cells.size(); i += stride) {
      try {
        AblationResult r;
        r.cell = cells[i];
        r.config = with_overrides(base, cells[i].overrides);
        NetworkSet net(r.config.network_shape(), r.config.seed);
        r.pretrain = pretrain_contrastive(net, train, validation, r.config);
        r.pretrain.mode = cells[i].label;
        r.linear = linear_eval(net, train, validation, test, r.config);
        r.linear.mode = cells[i].label;
        out[i] = std::move(r);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  workers = std::max<std::size_t>(1, std::min(workers, cells.size()));
  if (workers == 1) {
    run(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(run, w, workers);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

}  // namespace mlcl
