#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mlcl/numerics/graph.hpp"
#include "mlcl/numerics/ops.hpp"
#include "mlcl/numerics/tensor.hpp"
#include "mlcl/rules.hpp"

namespace mlcl {

inline constexpr std::size_t kIncorrectPerInstance = 7;

/// Label ids of one batch element (e.g. sparse rule indices).
using LabelSet = std::vector<std::size_t>;

/// Positive-pair indicator: true iff i != j and the label sets intersect.
class PositiveMask {
 public:
  PositiveMask() = default;
  explicit PositiveMask(std::size_t n) : n_(n), bits_(n * n, 0), counts_(n, 0) {}

  std::size_t size() const { return n_; }
  bool operator()(std::size_t i, std::size_t j) const { return bits_[i * n_ + j] != 0; }
  std::size_t count(std::size_t i) const { return counts_[i]; }

  void set(std::size_t i, std::size_t j) {
    if (i == j) throw std::invalid_argument("positive mask diagonal must be false");
    if (!bits_[i * n_ + j]) {
      bits_[i * n_ + j] = 1;
      ++counts_[i];
    }
  }

  friend bool operator==(const PositiveMask&, const PositiveMask&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<std::uint8_t> bits_;
  std::vector<std::size_t> counts_;
};

inline PositiveMask build_positive_mask(const std::vector<LabelSet>& labelsets) {
  if (labelsets.size() < 2) throw std::invalid_argument("positive mask needs a batch of at least 2");
  for (const auto& l : labelsets)
    if (l.empty()) throw std::invalid_argument("empty labelset");
  std::vector<LabelSet> sorted = labelsets;
  for (auto& l : sorted) std::sort(l.begin(), l.end());
  const std::size_t n = sorted.size();
  PositiveMask mask(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      // Sorted-merge intersection test.
      auto a = sorted[i].begin(), b = sorted[j].begin();
      bool shared = false;
      while (a != sorted[i].end() && b != sorted[j].end() && !shared) {
        if (*a == *b) shared = true;
        else if (*a < *b) ++a;
        else ++b;
      }
      if (shared) mask.set(i, j);
    }
  return mask;
}

/// Single-label positives: same class id.
inline PositiveMask build_class_mask(const std::vector<std::size_t>& labels) {
  if (labels.size() < 2) throw std::invalid_argument("positive mask needs a batch of at least 2");
  PositiveMask mask(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i)
    for (std::size_t j = 0; j < labels.size(); ++j)
      if (i != j && labels[i] == labels[j]) mask.set(i, j);
  return mask;
}

/// How each anchor's sum over positives is scaled.
enum class PositiveNormalization : std::uint8_t {
  PositiveCount,  ///< 1 / |P(i)|
  Literal,        ///< 1 / (2 N_i - 1) with N_i = |P(i)| + 1, counted over the full batch
};

/// Which incorrect completions enter an anchor's denominator.
enum class NegativeScope : std::uint8_t {
  AllInstances,    ///< all B x 7 incorrect completions, including the anchor's own
  OtherInstances,  ///< only incorrect completions of other instances
};

struct ContrastiveOptions {
  double temperature = 0.1;
  PositiveNormalization normalization = PositiveNormalization::PositiveCount;
  NegativeScope negative_scope = NegativeScope::AllInstances;
};

/// Projections of correct completions [B x p], optional projections of
/// incorrect completions [B*7 x p] (rows 7k..7k+6 belong to instance k),
/// label sets and temperature.
struct ContrastBatch {
  Tensor z;
  std::optional<Tensor> z_neg;
  std::vector<LabelSet> labelsets;
  double temperature = 0.1;
};

namespace loss_detail {

inline void require_temperature(double t) {
  if (!(t > 0.0)) throw std::invalid_argument("temperature must be positive");
}

inline void require_unit_rows(const Tensor& t, const char* what) {
  for (std::size_t i = 0; i < t.rows(); ++i) {
    if (std::abs(norm(t.row(i)) - 1.0) > 1e-9) {
      throw std::invalid_argument(std::string(what) + " row " + std::to_string(i) + " is not unit-norm");
    }
  }
}

inline double normalizer(std::size_t positives, PositiveNormalization n) {
  return n == PositiveNormalization::PositiveCount ? static_cast<double>(positives)
                                                   : 2.0 * static_cast<double>(positives + 1) - 1.0;
}

}  // namespace loss_detail

/// Sum over anchors of the mean (or literal-normalized) positive-pair
/// -log softmax, with similarities `sim` [B x B] already divided by the
/// temperature and optional extra negatives `neg_sim` [B x B*7]. Anchors
/// without positives contribute zero.
inline Var masked_contrastive(Var sim, std::optional<Var> neg_sim, const PositiveMask& mask,
                              const ContrastiveOptions& opts) {
  const Tensor& s = sim.value();
  const std::size_t b = s.rows();
  if (s.cols() != b || mask.size() != b) throw std::invalid_argument("masked_contrastive: batch size mismatch");
  const Tensor* ns = neg_sim ? &neg_sim->value() : nullptr;
  const std::size_t q = ns ? ns->cols() : 0;
  if (ns && (ns->rows() != b || q != b * kIncorrectPerInstance)) {
    throw std::invalid_argument("masked_contrastive: negative similarity shape mismatch");
  }
  auto neg_allowed = [&opts](std::size_t anchor, std::size_t col) {
    return opts.negative_scope == NegativeScope::AllInstances || col / kIncorrectPerInstance != anchor;
  };

  std::vector<double> log_denom(b, 0.0);
  double total = 0.0;
  std::vector<double> terms;
  for (std::size_t i = 0; i < b; ++i) {
    if (mask.count(i) == 0) continue;
    terms.clear();
    for (std::size_t k = 0; k < b; ++k)
      if (k != i) terms.push_back(s(i, k));
    for (std::size_t c = 0; c < q; ++c)
      if (neg_allowed(i, c)) terms.push_back((*ns)(i, c));
    log_denom[i] = logsumexp(terms);
    double acc = 0.0;
    for (std::size_t j = 0; j < b; ++j)
      if (mask(i, j)) acc += log_denom[i] - s(i, j);
    total += acc / loss_detail::normalizer(mask.count(i), opts.normalization);
  }

  std::vector<std::size_t> inputs{sim.id};
  if (neg_sim) inputs.push_back(neg_sim->id);
  return sim.graph->op(
      Tensor::scalar(total), inputs,
      [b, q, mask, opts, log_denom = std::move(log_denom), neg_allowed](Graph& g, std::size_t self) {
        const double go = g.grad(self)[0];
        const auto is = g.inputs(self)[0];
        const Tensor& s = g.value(is);
        const bool has_neg = g.inputs(self).size() > 1;
        const auto in = has_neg ? g.inputs(self)[1] : is;
        const bool grad_s = g.requires_grad(is);
        const bool grad_n = has_neg && g.requires_grad(in);
        for (std::size_t i = 0; i < b; ++i) {
          if (mask.count(i) == 0) continue;
          const double w = go / loss_detail::normalizer(mask.count(i), opts.normalization);
          const double denom_weight = w * static_cast<double>(mask.count(i));
          if (grad_s) {
            Tensor& gs = g.grad(is);
            for (std::size_t k = 0; k < b; ++k) {
              if (k == i) continue;
              gs(i, k) += denom_weight * std::exp(s(i, k) - log_denom[i]);
              if (mask(i, k)) gs(i, k) -= w;
            }
          }
          if (grad_n) {
            const Tensor& ns = g.value(in);
            Tensor& gn = g.grad(in);
            for (std::size_t c = 0; c < q; ++c)
              if (neg_allowed(i, c)) gn(i, c) += denom_weight * std::exp(ns(i, c) - log_denom[i]);
          }
        }
      });
}

/// Multi-label contrastive loss on graph nodes. `z` [B x p] and the
/// optional `z_neg` [B*7 x p] must already be unit-norm rows.
inline Var contrastive_loss(Var z, std::optional<Var> z_neg, const PositiveMask& mask, const ContrastiveOptions& opts) {
  loss_detail::require_temperature(opts.temperature);
  const double inv_t = 1.0 / opts.temperature;
  Var sim = scale(matmul_nt(z, z), inv_t);
  std::optional<Var> neg;
  if (z_neg) neg = scale(matmul_nt(z, *z_neg), inv_t);
  return masked_contrastive(sim, neg, mask, opts);
}

namespace loss_detail {

inline double evaluate(const ContrastBatch& batch, const PositiveMask& mask, bool with_negatives,
                       ContrastiveOptions opts) {
  require_temperature(batch.temperature);
  if (batch.z.rows() < 2) throw std::invalid_argument("contrastive batch needs B >= 2");
  require_unit_rows(batch.z, "z");
  if (with_negatives) {
    if (!batch.z_neg) throw std::invalid_argument("batch has no incorrect-completion embeddings");
    require_unit_rows(*batch.z_neg, "z_neg");
  }
  opts.temperature = batch.temperature;
  Graph g;
  Var z = g.constant(batch.z);
  std::optional<Var> zn;
  if (with_negatives) zn = g.constant(*batch.z_neg);
  return contrastive_loss(z, zn, mask, opts).value().item();
}

}  // namespace loss_detail

/// Supervised contrastive loss; every label set must be a singleton.
inline double supcon_loss(const ContrastBatch& batch, ContrastiveOptions opts = {}) {
  std::vector<std::size_t> labels;
  for (const auto& l : batch.labelsets) {
    if (l.size() != 1) throw std::invalid_argument("supcon_loss requires singleton labelsets");
    labels.push_back(l.front());
  }
  return loss_detail::evaluate(batch, build_class_mask(labels), false, opts);
}

/// Multi-label contrastive loss: positives share at least one label.
inline double mlc_loss(const ContrastBatch& batch, ContrastiveOptions opts = {}) {
  return loss_detail::evaluate(batch, build_positive_mask(batch.labelsets), false, opts);
}

/// Multi-label contrastive loss with incorrect completions as extra negatives.
inline double mlc_loss_with_negatives(const ContrastBatch& batch, ContrastiveOptions opts = {}) {
  return loss_detail::evaluate(batch, build_positive_mask(batch.labelsets), true, opts);
}

/// Mean binary cross-entropy of sigmoid(logits) against 0/1 targets, both
/// [B x d] (or [d]).
inline Var bce_with_logits(Var logits, const Tensor& targets) {
  const Tensor& x = logits.value();
  if (x.size() != targets.size()) {
    throw std::invalid_argument("aux loss: logits length " + std::to_string(x.size()) + " != target length " +
                                std::to_string(targets.size()));
  }
  const std::size_t n = x.size();
  if (n == 0) throw std::invalid_argument("empty reduction");
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = x[i];
    total += std::max(v, 0.0) - v * targets[i] + std::log1p(std::exp(-std::abs(v)));
  }
  return logits.graph->op(Tensor::scalar(total / static_cast<double>(n)), {logits.id},
                          [targets, n](Graph& g, std::size_t self) {
                            const double go = g.grad(self)[0] / static_cast<double>(n);
                            const auto ix = g.inputs(self)[0];
                            const Tensor& x = g.value(ix);
                            Tensor& gx = g.grad(ix);
                            for (std::size_t i = 0; i < n; ++i) {
                              const double sig = 1.0 / (1.0 + std::exp(-x[i]));
                              gx[i] += go * (sig - targets[i]);
                            }
                          });
}

inline Tensor target_tensor(const MetaTarget& m) {
  Tensor t({m.length()});
  for (std::size_t i = 0; i < m.length(); ++i) t[i] = m.bits[i];
  return t;
}

inline double aux_loss(const Tensor& logits, const MetaTarget& target) {
  if (logits.size() != target.length()) {
    throw std::invalid_argument("aux loss: logits length " + std::to_string(logits.size()) +
                                " != meta-target length " + std::to_string(target.length()));
  }
  Graph g;
  return bce_with_logits(g.constant(logits), target_tensor(target)).value().item();
}

/// Mean over rows of -log softmax(scores)[correct], for [B x 8] scores and
/// 1-based correct indices.
inline Var softmax_cross_entropy(Var scores, const std::vector<int>& correct_index) {
  const Tensor& s = scores.value();
  const std::size_t rows = s.rank() == 1 ? 1 : s.rows();
  const std::size_t cols = s.rank() == 1 ? s.size() : s.cols();
  if (correct_index.size() != rows) throw std::invalid_argument("answer loss: one correct index per row required");
  for (int k : correct_index)
    if (k < 1 || k > static_cast<int>(cols)) {
      throw std::invalid_argument("correct index " + std::to_string(k) + " outside 1.." + std::to_string(cols));
    }
  std::vector<double> lse(rows);
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    auto row = s.data().subspan(r * cols, cols);
    lse[r] = logsumexp(row);
    total += lse[r] - row[static_cast<std::size_t>(correct_index[r] - 1)];
  }
  return scores.graph->op(Tensor::scalar(total / static_cast<double>(rows)), {scores.id},
                          [rows, cols, correct_index, lse = std::move(lse)](Graph& g, std::size_t self) {
                            const double go = g.grad(self)[0] / static_cast<double>(rows);
                            const auto ix = g.inputs(self)[0];
                            const Tensor& s = g.value(ix);
                            Tensor& gs = g.grad(ix);
                            for (std::size_t r = 0; r < rows; ++r)
                              for (std::size_t c = 0; c < cols; ++c) {
                                const double p = std::exp(s[r * cols + c] - lse[r]);
                                const double y = static_cast<int>(c) + 1 == correct_index[r] ? 1.0 : 0.0;
                                gs[r * cols + c] += go * (p - y);
                              }
                          });
}

inline double ce_answer_loss(const Tensor& scores, int correct_index) {
  if (scores.size() != 8) throw std::invalid_argument("answer loss expects 8 scores");
  Graph g;
  return softmax_cross_entropy(g.constant(scores.reshaped({1, 8})), {correct_index}).value().item();
}

/// Probability distribution over answers.
inline std::vector<double> softmax(std::span<const double> scores) {
  const double lse = logsumexp(scores);
  std::vector<double> p(scores.size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::exp(scores[i] - lse);
  return p;
}

struct LossWeights {
  double gamma = 1.0;  ///< contrastive weight
  double beta = 10.0;  ///< auxiliary weight

  void validate() const {
    if (gamma < 0.0 || beta < 0.0) throw std::invalid_argument("loss weights must be non-negative");
  }
};

inline double combined_loss(double gamma, double beta, double contrastive, double aux) {
  LossWeights{gamma, beta}.validate();
  return gamma * contrastive + beta * aux;
}

inline Var combined_loss(const LossWeights& w, Var contrastive, Var aux) {
  w.validate();
  return add(scale(contrastive, w.gamma), scale(aux, w.beta));
}

/// Sparse rule indices of a structure, used as contrastive labels.
inline LabelSet rule_labels(const AbstractStructure& s) {
  LabelSet out;
  for (const Rule& r : s.rules()) out.push_back(sparse_index_of(r));
  return out;
}

}  // namespace mlcl
