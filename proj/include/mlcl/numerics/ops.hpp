#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#ifdef MLCL_HAVE_CBLAS
#include <cblas.h>
#endif

#include "mlcl/numerics/graph.hpp"
#include "mlcl/numerics/tensor.hpp"

namespace mlcl {

namespace kernels {

#ifdef MLCL_HAVE_CBLAS
// Workers already run in parallel; keep each dgemm on its own thread.
inline const bool blas_single_threaded = (openblas_set_num_threads(1), true);

inline blasint blas_int(std::size_t v) {
  if (v > static_cast<std::size_t>(std::numeric_limits<blasint>::max())) throw std::length_error("matrix too large for blas");
  return static_cast<blasint>(v);
}
#endif

#ifdef MLCL_HAVE_CBLAS

// C[m x n] += A[m x k] * B[k x n]
inline void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  if (m == 0 || n == 0 || k == 0) return;
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, blas_int(m), blas_int(n), blas_int(k), 1.0, a, blas_int(k), b,
              blas_int(n), 1.0, c, blas_int(n));
}

// C[m x n] += A^T * B with A[k x m], B[k x n]
inline void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  if (m == 0 || n == 0 || k == 0) return;
  cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, blas_int(m), blas_int(n), blas_int(k), 1.0, a, blas_int(m), b,
              blas_int(n), 1.0, c, blas_int(n));
}

// C[m x n] += A[m x k] * B^T with B[n x k]
inline void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  if (m == 0 || n == 0 || k == 0) return;
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, blas_int(m), blas_int(n), blas_int(k), 1.0, a, blas_int(k), b,
              blas_int(k), 1.0, c, blas_int(n));
}

#else

// C[m x n] += A[m x k] * B[k x n]
inline void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m x n] += A^T * B with A[k x m], B[k x n]
inline void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    const double* arow = a + p * m;
    const double* brow = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = arow[i];
      if (av == 0.0) continue;
      double* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

inline std::vector<double> transpose(const double* a, std::size_t rows, std::size_t cols) {
  std::vector<double> t(rows * cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) t[j * rows + i] = a[i * cols + j];
  return t;
}

// C[m x n] += A[m x k] * B^T with B[n x k]
inline void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  const auto bt = transpose(b, n, k);
  gemm_nn(a, bt.data(), c, m, k, n);
}

#endif

}  // namespace kernels

namespace detail {

inline void require_same_graph(Var a, Var b) {
  if (a.graph != b.graph) throw std::invalid_argument("operands belong to different graphs");
}

inline void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) throw std::invalid_argument(std::string(op) + ": expected matrix, got " + t.shape_string());
}

inline void add_into(Tensor& dst, std::span<const double> src) {
  auto d = dst.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += src[i];
}

}  // namespace detail

/// Matrix product of [m x k] and [k x n].
inline Var matmul(Var a, Var b) {
  detail::require_same_graph(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  detail::require_matrix(av, "matmul");
  detail::require_matrix(bv, "matmul");
  if (av.cols() != bv.rows()) {
    throw std::invalid_argument("matmul: shape mismatch " + av.shape_string() + " * " + bv.shape_string());
  }
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  Tensor out({m, n});
  kernels::gemm_nn(av.data().data(), bv.data().data(), out.data().data(), m, k, n);
  return a.graph->op(std::move(out), {a.id, b.id}, [m, k, n](Graph& g, std::size_t self) {
    const auto ia = g.inputs(self)[0], ib = g.inputs(self)[1];
    const Tensor& go = g.grad(self);
    if (g.requires_grad(ia)) {
      kernels::gemm_nt(go.data().data(), g.value(ib).data().data(), g.grad(ia).data().data(), m, n, k);
    }
    if (g.requires_grad(ib)) {
      kernels::gemm_tn(g.value(ia).data().data(), go.data().data(), g.grad(ib).data().data(), k, m, n);
    }
  });
}

/// Product A * B^T of [m x k] and [n x k].
inline Var matmul_nt(Var a, Var b) {
  detail::require_same_graph(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  detail::require_matrix(av, "matmul_nt");
  detail::require_matrix(bv, "matmul_nt");
  if (av.cols() != bv.cols()) {
    throw std::invalid_argument("matmul_nt: shape mismatch " + av.shape_string() + " * " + bv.shape_string() + "^T");
  }
  const std::size_t m = av.rows(), k = av.cols(), n = bv.rows();
  Tensor out({m, n});
  kernels::gemm_nt(av.data().data(), bv.data().data(), out.data().data(), m, k, n);
  return a.graph->op(std::move(out), {a.id, b.id}, [m, k, n](Graph& g, std::size_t self) {
    const auto ia = g.inputs(self)[0], ib = g.inputs(self)[1];
    const Tensor& go = g.grad(self);
    // dA = dC * B, dB = dC^T * A
    if (g.requires_grad(ia)) {
      kernels::gemm_nn(go.data().data(), g.value(ib).data().data(), g.grad(ia).data().data(), m, n, k);
    }
    if (g.requires_grad(ib)) {
      kernels::gemm_tn(go.data().data(), g.value(ia).data().data(), g.grad(ib).data().data(), n, m, k);
    }
  });
}

/// Adds a bias vector of length n to every row of an [m x n] matrix.
inline Var add_bias(Var a, Var bias) {
  detail::require_same_graph(a, bias);
  const Tensor& av = a.value();
  detail::require_matrix(av, "add_bias");
  const std::size_t m = av.rows(), n = av.cols();
  if (bias.value().size() != n) throw std::invalid_argument("add_bias: bias length mismatch");
  Tensor out = av;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) += bias.value()[j];
  return a.graph->op(std::move(out), {a.id, bias.id}, [m, n](Graph& g, std::size_t self) {
    const auto ia = g.inputs(self)[0], ib = g.inputs(self)[1];
    const Tensor& go = g.grad(self);
    if (g.requires_grad(ia)) detail::add_into(g.grad(ia), go.data());
    if (g.requires_grad(ib)) {
      Tensor& gb = g.grad(ib);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gb[j] += go(i, j);
    }
  });
}

/// Multiplies every row of an [m x n] matrix elementwise by a length-n vector.
inline Var mul_rowwise(Var a, Var gain) {
  detail::require_same_graph(a, gain);
  const Tensor& av = a.value();
  detail::require_matrix(av, "mul_rowwise");
  const std::size_t m = av.rows(), n = av.cols();
  if (gain.value().size() != n) throw std::invalid_argument("mul_rowwise: gain length mismatch");
  Tensor out = av;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) *= gain.value()[j];
  return a.graph->op(std::move(out), {a.id, gain.id}, [m, n](Graph& g, std::size_t self) {
    const auto ia = g.inputs(self)[0], ig = g.inputs(self)[1];
    const Tensor& go = g.grad(self);
    const Tensor& x = g.value(ia);
    const Tensor& w = g.value(ig);
    if (g.requires_grad(ia)) {
      Tensor& ga = g.grad(ia);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) ga(i, j) += go(i, j) * w[j];
    }
    if (g.requires_grad(ig)) {
      Tensor& gw = g.grad(ig);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gw[j] += go(i, j) * x(i, j);
    }
  });
}

inline Var add(Var a, Var b) {
  detail::require_same_graph(a, b);
  if (!a.value().same_shape(b.value())) throw std::invalid_argument("add: shape mismatch");
  Tensor out = a.value();
  detail::add_into(out, b.value().data());
  return a.graph->op(std::move(out), {a.id, b.id}, [](Graph& g, std::size_t self) {
    for (std::size_t in : g.inputs(self))
      if (g.requires_grad(in)) detail::add_into(g.grad(in), g.grad(self).data());
  });
}

inline Var sub(Var a, Var b) {
  detail::require_same_graph(a, b);
  if (!a.value().same_shape(b.value())) throw std::invalid_argument("sub: shape mismatch");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return a.graph->op(std::move(out), {a.id, b.id}, [](Graph& g, std::size_t self) {
    const auto ia = g.inputs(self)[0], ib = g.inputs(self)[1];
    const Tensor& go = g.grad(self);
    if (g.requires_grad(ia)) detail::add_into(g.grad(ia), go.data());
    if (g.requires_grad(ib)) {
      Tensor& gb = g.grad(ib);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= go[i];
    }
  });
}

/// Elementwise product.
inline Var mul(Var a, Var b) {
  detail::require_same_graph(a, b);
  if (!a.value().same_shape(b.value())) throw std::invalid_argument("mul: shape mismatch");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return a.graph->op(std::move(out), {a.id, b.id}, [](Graph& g, std::size_t self) {
    const auto ia = g.inputs(self)[0], ib = g.inputs(self)[1];
    const Tensor& go = g.grad(self);
    // Read both values before touching grads: ia may equal ib.
    const Tensor& va = g.value(ia);
    const Tensor& vb = g.value(ib);
    if (g.requires_grad(ia)) {
      Tensor& ga = g.grad(ia);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i] * vb[i];
    }
    if (g.requires_grad(ib)) {
      Tensor& gb = g.grad(ib);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += go[i] * va[i];
    }
  });
}

inline Var scale(Var a, double c) {
  Tensor out = a.value();
  for (double& v : out.data()) v *= c;
  return a.graph->op(std::move(out), {a.id}, [c](Graph& g, std::size_t self) {
    Tensor& ga = g.grad(g.inputs(self)[0]);
    const Tensor& go = g.grad(self);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += c * go[i];
  });
}

inline Var relu(Var a) {
  Tensor out = a.value();
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return a.graph->op(std::move(out), {a.id}, [](Graph& g, std::size_t self) {
    const auto ia = g.inputs(self)[0];
    const Tensor& x = g.value(ia);
    Tensor& ga = g.grad(ia);
    const Tensor& go = g.grad(self);
    for (std::size_t i = 0; i < ga.size(); ++i)
      if (x[i] > 0.0) ga[i] += go[i];
  });
}

inline Var tanh(Var a) {
  Tensor out = a.value();
  for (double& v : out.data()) v = std::tanh(v);
  return a.graph->op(std::move(out), {a.id}, [](Graph& g, std::size_t self) {
    const Tensor& y = g.value(self);
    Tensor& ga = g.grad(g.inputs(self)[0]);
    const Tensor& go = g.grad(self);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i] * (1.0 - y[i] * y[i]);
  });
}

inline Var reshape(Var a, std::vector<std::size_t> shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return a.graph->op(std::move(out), {a.id}, [](Graph& g, std::size_t self) {
    detail::add_into(g.grad(g.inputs(self)[0]), g.grad(self).data());
  });
}

/// Sum of all entries as a scalar.
inline Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return a.graph->op(Tensor::scalar(s), {a.id}, [](Graph& g, std::size_t self) {
    const double go = g.grad(self)[0];
    for (double& v : g.grad(g.inputs(self)[0]).data()) v += go;
  });
}

inline Var mean(Var a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw std::invalid_argument("empty reduction");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

/// Dot product of two equal-length tensors, as a scalar.
inline Var dot(Var a, Var b) { return sum(mul(a, b)); }

/// Row-wise Euclidean normalization of an [m x n] matrix (a vector is
/// treated as one row). Zero rows use the epsilon fallback of l2_normalize.
inline Var l2_normalize_rows(Var a) {
  const Tensor& av = a.value();
  const bool as_vector = av.rank() == 1;
  const std::size_t m = as_vector ? 1 : av.rows();
  const std::size_t n = as_vector ? av.size() : av.cols();
  Tensor out(av.shape());
  std::vector<double> norms(m);
  for (std::size_t i = 0; i < m; ++i) {
    auto src = av.data().subspan(i * n, n);
    auto normalized = l2_normalize(src);
    std::copy(normalized.begin(), normalized.end(), out.data().begin() + static_cast<std::ptrdiff_t>(i * n));
    const double nr = norm(src);
    norms[i] = nr == 0.0 ? kNormEpsilon : nr;
  }
  return a.graph->op(std::move(out), {a.id}, [m, n, norms = std::move(norms)](Graph& g, std::size_t self) {
    const Tensor& y = g.value(self);
    const Tensor& go = g.grad(self);
    Tensor& ga = g.grad(g.inputs(self)[0]);
    // dx = (g - y (y . g)) / ||x||
    for (std::size_t i = 0; i < m; ++i) {
      double yg = 0.0;
      for (std::size_t j = 0; j < n; ++j) yg += y[i * n + j] * go[i * n + j];
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += (go[i * n + j] - y[i * n + j] * yg) / norms[i];
    }
  });
}

/// Gathers rows of an [r x n] matrix and concatenates each group side by
/// side: row t of the output is [A[idx[t][0]], A[idx[t][1]], ...].
inline Var gather_concat(Var a, const std::vector<std::vector<std::size_t>>& index) {
  const Tensor& av = a.value();
  detail::require_matrix(av, "gather_concat");
  if (index.empty()) throw std::invalid_argument("gather_concat: empty index");
  const std::size_t group = index.front().size();
  const std::size_t n = av.cols();
  Tensor out({index.size(), group * n});
  std::vector<std::size_t> flat;
  flat.reserve(index.size() * group);
  for (std::size_t t = 0; t < index.size(); ++t) {
    if (index[t].size() != group) throw std::invalid_argument("gather_concat: ragged index");
    for (std::size_t s = 0; s < group; ++s) {
      const std::size_t r = index[t][s];
      if (r >= av.rows()) throw std::out_of_range("gather_concat: row index out of range");
      std::copy_n(av.data().begin() + static_cast<std::ptrdiff_t>(r * n), n,
                  out.data().begin() + static_cast<std::ptrdiff_t>((t * group + s) * n));
      flat.push_back(r);
    }
  }
  return a.graph->op(std::move(out), {a.id}, [n, flat = std::move(flat)](Graph& g, std::size_t self) {
    Tensor& ga = g.grad(g.inputs(self)[0]);
    const Tensor& go = g.grad(self);
    for (std::size_t q = 0; q < flat.size(); ++q)
      for (std::size_t j = 0; j < n; ++j) ga[flat[q] * n + j] += go[q * n + j];
  });
}

inline Var gather_rows(Var a, const std::vector<std::size_t>& rows) {
  std::vector<std::vector<std::size_t>> index;
  index.reserve(rows.size());
  for (std::size_t r : rows) index.push_back({r});
  return gather_concat(a, index);
}

/// Row-wise log-sum-exp of an [m x n] matrix, giving a length-m vector.
inline Var logsumexp_rows(Var a) {
  const Tensor& av = a.value();
  detail::require_matrix(av, "logsumexp_rows");
  const std::size_t m = av.rows(), n = av.cols();
  Tensor out({m});
  for (std::size_t i = 0; i < m; ++i) out[i] = logsumexp(av.row(i));
  return a.graph->op(std::move(out), {a.id}, [m, n](Graph& g, std::size_t self) {
    const auto ia = g.inputs(self)[0];
    const Tensor& x = g.value(ia);
    const Tensor& y = g.value(self);
    const Tensor& go = g.grad(self);
    Tensor& ga = g.grad(ia);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += go[i] * std::exp(x[i * n + j] - y[i]);
  });
}

/// Per-row standardization to zero mean and unit variance (no affine part).
inline Var layer_norm_rows(Var a, double eps = 1e-5) {
  const Tensor& av = a.value();
  detail::require_matrix(av, "layer_norm_rows");
  const std::size_t m = av.rows(), n = av.cols();
  Tensor out({m, n});
  std::vector<double> inv_std(m);
  for (std::size_t i = 0; i < m; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += av(i, j);
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (av(i, j) - mu) * (av(i, j) - mu);
    var /= static_cast<double>(n);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) out(i, j) = (av(i, j) - mu) * inv_std[i];
  }
  return a.graph->op(std::move(out), {a.id}, [m, n, inv_std = std::move(inv_std)](Graph& g, std::size_t self) {
    const Tensor& y = g.value(self);
    const Tensor& go = g.grad(self);
    Tensor& ga = g.grad(g.inputs(self)[0]);
    const double dn = static_cast<double>(n);
    for (std::size_t i = 0; i < m; ++i) {
      double sg = 0.0, syg = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        sg += go(i, j);
        syg += y(i, j) * go(i, j);
      }
      for (std::size_t j = 0; j < n; ++j)
        ga(i, j) += inv_std[i] * (go(i, j) - sg / dn - y(i, j) * syg / dn);
    }
  });
}

struct ConvGeometry {
  std::size_t channels = 1;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t padding = 0;

  std::size_t out_height() const { return (height + 2 * padding - kernel) / stride + 1; }
  std::size_t out_width() const { return (width + 2 * padding - kernel) / stride + 1; }
};

namespace detail {

// cols[(c*k + ky)*k + kx][oy*OW + ox]
inline void im2col(const double* img, const ConvGeometry& g, double* cols) {
  const std::size_t oh = g.out_height(), ow = g.out_width();
  for (std::size_t c = 0; c < g.channels; ++c)
    for (std::size_t ky = 0; ky < g.kernel; ++ky)
      for (std::size_t kx = 0; kx < g.kernel; ++kx) {
        const std::size_t row = (c * g.kernel + ky) * g.kernel + kx;
        for (std::size_t oy = 0; oy < oh; ++oy)
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const auto y = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.padding);
            const auto x = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.padding);
            const bool inside = y >= 0 && x >= 0 && y < static_cast<std::ptrdiff_t>(g.height) &&
                                x < static_cast<std::ptrdiff_t>(g.width);
            cols[row * oh * ow + oy * ow + ox] =
                inside ? img[(c * g.height + static_cast<std::size_t>(y)) * g.width + static_cast<std::size_t>(x)] : 0.0;
          }
      }
}

inline void col2im_add(const double* cols, const ConvGeometry& g, double* img) {
  const std::size_t oh = g.out_height(), ow = g.out_width();
  for (std::size_t c = 0; c < g.channels; ++c)
    for (std::size_t ky = 0; ky < g.kernel; ++ky)
      for (std::size_t kx = 0; kx < g.kernel; ++kx) {
        const std::size_t row = (c * g.kernel + ky) * g.kernel + kx;
        for (std::size_t oy = 0; oy < oh; ++oy)
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const auto y = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.padding);
            const auto x = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.padding);
            if (y < 0 || x < 0 || y >= static_cast<std::ptrdiff_t>(g.height) || x >= static_cast<std::ptrdiff_t>(g.width))
              continue;
            img[(c * g.height + static_cast<std::size_t>(y)) * g.width + static_cast<std::size_t>(x)] +=
                cols[row * oh * ow + oy * ow + ox];
          }
      }
}

}  // namespace detail

/// 2-D convolution over a batch stored as [N x C*H*W] with weights
/// [OC x C*K*K] and bias [OC]. Output is [N x OC*OH*OW].
inline Var conv2d(Var x, Var weight, Var bias, const ConvGeometry& geom) {
  detail::require_same_graph(x, weight);
  detail::require_same_graph(x, bias);
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  detail::require_matrix(xv, "conv2d");
  detail::require_matrix(wv, "conv2d");
  const std::size_t in_size = geom.channels * geom.height * geom.width;
  const std::size_t patch = geom.channels * geom.kernel * geom.kernel;
  if (xv.cols() != in_size) throw std::invalid_argument("conv2d: input size does not match geometry");
  if (wv.cols() != patch) throw std::invalid_argument("conv2d: weight size does not match geometry");
  const std::size_t out_ch = wv.rows();
  if (bias.value().size() != out_ch) throw std::invalid_argument("conv2d: bias length mismatch");
  const std::size_t batch = xv.rows();
  const std::size_t spatial = geom.out_height() * geom.out_width();

  Tensor out({batch, out_ch * spatial});
  std::vector<double> cols(patch * spatial);
  for (std::size_t b = 0; b < batch; ++b) {
    detail::im2col(xv.data().data() + b * in_size, geom, cols.data());
    double* o = out.data().data() + b * out_ch * spatial;
    for (std::size_t c = 0; c < out_ch; ++c)
      for (std::size_t s = 0; s < spatial; ++s) o[c * spatial + s] = bias.value()[c];
    kernels::gemm_nn(wv.data().data(), cols.data(), o, out_ch, patch, spatial);
  }
  return x.graph->op(std::move(out), {x.id, weight.id, bias.id},
                     [geom, batch, in_size, patch, out_ch, spatial](Graph& g, std::size_t self) {
                       const auto ix = g.inputs(self)[0], iw = g.inputs(self)[1], ib = g.inputs(self)[2];
                       const Tensor& go = g.grad(self);
                       const Tensor& xv = g.value(ix);
                       const Tensor& wv = g.value(iw);
                       std::vector<double> cols(patch * spatial);
                       std::vector<double> dcols(patch * spatial);
                       for (std::size_t b = 0; b < batch; ++b) {
                         const double* gob = go.data().data() + b * out_ch * spatial;
                         if (g.requires_grad(ib)) {
                           Tensor& gb = g.grad(ib);
                           for (std::size_t c = 0; c < out_ch; ++c)
                             for (std::size_t s = 0; s < spatial; ++s) gb[c] += gob[c * spatial + s];
                         }
                         if (g.requires_grad(iw)) {
                           detail::im2col(xv.data().data() + b * in_size, geom, cols.data());
                           kernels::gemm_nt(gob, cols.data(), g.grad(iw).data().data(), out_ch, spatial, patch);
                         }
                         if (g.requires_grad(ix)) {
                           std::fill(dcols.begin(), dcols.end(), 0.0);
                           kernels::gemm_tn(wv.data().data(), gob, dcols.data(), patch, out_ch, spatial);
                           detail::col2im_add(dcols.data(), geom, g.grad(ix).data().data() + b * in_size);
                         }
                       }
                     });
}

}  // namespace mlcl
