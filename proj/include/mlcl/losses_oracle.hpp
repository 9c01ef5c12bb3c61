#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "mlcl/losses.hpp"

// Reference implementation of the contrastive losses as explicit nested
// loops over plain vectors. Shares no intermediates with losses.hpp and is
// only meant for cross-checking.

namespace mlcl::oracle {

using Rows = std::vector<std::vector<double>>;

inline Rows rows_of(const Tensor& t) {
  Rows out(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) out[i][j] = t(i, j);
  return out;
}

inline bool intersects(const LabelSet& a, const LabelSet& b) {
  for (std::size_t x : a)
    for (std::size_t y : b)
      if (x == y) return true;
  return false;
}

inline double sim(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

/// Direct transcription of the per-pair -log ratio, summed over anchors
/// and positives. `negatives` holds 7 rows per instance, or is empty.
inline double brute_force_mlc(const Rows& z, const Rows& negatives, const std::vector<LabelSet>& labels, double tau,
                              const ContrastiveOptions& opts = {}) {
  if (!(tau > 0.0)) throw std::invalid_argument("temperature must be positive");
  const std::size_t n = z.size();
  if (n < 2 || labels.size() != n) throw std::invalid_argument("oracle: bad batch");
  for (const auto& l : labels)
    if (l.empty()) throw std::invalid_argument("empty labelset");
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t positives = 0;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i && intersects(labels[i], labels[j])) ++positives;
    if (positives == 0) continue;

    double denom = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      if (k != i) denom += std::exp(sim(z[i], z[k]) / tau);
      if (negatives.empty()) continue;
      if (opts.negative_scope == NegativeScope::OtherInstances && k == i) continue;
      for (std::size_t l = 0; l < kIncorrectPerInstance; ++l)
        denom += std::exp(sim(z[i], negatives[k * kIncorrectPerInstance + l]) / tau);
    }

    double anchor = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i || !intersects(labels[i], labels[j])) continue;
      anchor += -std::log(std::exp(sim(z[i], z[j]) / tau) / denom);
    }
    const double scale = opts.normalization == PositiveNormalization::PositiveCount
                             ? static_cast<double>(positives)
                             : 2.0 * static_cast<double>(positives + 1) - 1.0;
    total += anchor / scale;
  }
  return total;
}

inline double brute_force_mlc_oracle(const ContrastBatch& batch, bool with_negatives = false,
                                     const ContrastiveOptions& opts = {}) {
  Rows neg;
  if (with_negatives) {
    if (!batch.z_neg) throw std::invalid_argument("batch has no incorrect-completion embeddings");
    neg = rows_of(*batch.z_neg);
  }
  return brute_force_mlc(rows_of(batch.z), neg, batch.labelsets, batch.temperature, opts);
}

}  // namespace mlcl::oracle
