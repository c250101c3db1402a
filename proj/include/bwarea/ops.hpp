// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "bwarea/kernels.hpp"
#include "bwarea/tensor.hpp"

// Differentiable operations over rank-2 row-major tensors. Every op records a
// backward closure on the tape when grad mode is on; see tensor.hpp.
namespace bwarea {

namespace detail {

template <typename T>
void require_rank2(const Tensor<T>& t, const char* op) {
    if (t.rank() != 2) throw DimensionError(std::string(op) + ": expected rank-2 tensor, got " + shape_str(t.shape()));
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (a.shape() != b.shape())
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

template <typename T>
TensorNode<T>& parent(TensorNode<T>& self, std::size_t i) {
    return *self.parents[i];
}

}  // namespace detail

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_rank2(a, "matmul");
    detail::require_rank2(b, "matmul");
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    if (b.rows() != k)
        throw DimensionError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    std::vector<T> out(m * n);
    kernels::gemm_nn(m, n, k, a.data(), b.data(), out.data(), false);
    return make_result<T>({m, n}, std::move(out), "matmul", {&a, &b}, [m, n, k](TensorNode<T>& self) {
        auto& pa = detail::parent(self, 0);
        auto& pb = detail::parent(self, 1);
        if (pa.requires_grad) kernels::gemm_nt(m, k, n, self.grad.data(), pb.value.data(), pa.grad.data(), true);
        if (pb.requires_grad) kernels::gemm_tn(k, n, m, pa.value.data(), self.grad.data(), pb.grad.data(), true);
    });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape(a, b, "add");
    std::vector<T> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
    return make_result<T>(a.shape(), std::move(out), "add", {&a, &b}, [](TensorNode<T>& self) {
        for (std::size_t p = 0; p < 2; ++p) {
            auto& in = detail::parent(self, p);
            if (!in.requires_grad) continue;
            for (std::size_t i = 0; i < self.grad.size(); ++i) in.grad[i] += self.grad[i];
        }
    });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape(a, b, "sub");
    std::vector<T> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
    return make_result<T>(a.shape(), std::move(out), "sub", {&a, &b}, [](TensorNode<T>& self) {
        auto& pa = detail::parent(self, 0);
        auto& pb = detail::parent(self, 1);
        if (pa.requires_grad)
            for (std::size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i];
        if (pb.requires_grad)
            for (std::size_t i = 0; i < self.grad.size(); ++i) pb.grad[i] -= self.grad[i];
    });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape(a, b, "mul");
    std::vector<T> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
    return make_result<T>(a.shape(), std::move(out), "mul", {&a, &b}, [](TensorNode<T>& self) {
        auto& pa = detail::parent(self, 0);
        auto& pb = detail::parent(self, 1);
        if (pa.requires_grad)
            for (std::size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i] * pb.value[i];
        if (pb.requires_grad)
            for (std::size_t i = 0; i < self.grad.size(); ++i) pb.grad[i] += self.grad[i] * pa.value[i];
    });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
    std::vector<T> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * s;
    return make_result<T>(a.shape(), std::move(out), "scale", {&a}, [s](TensorNode<T>& self) {
        auto& pa = detail::parent(self, 0);
        for (std::size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i] * s;
    });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
    T total = 0;
    for (T v : a.values()) total += v;
    return make_result<T>({1, 1}, {total}, "sum", {&a}, [](TensorNode<T>& self) {
        auto& pa = detail::parent(self, 0);
        for (auto& g : pa.grad) g += self.grad[0];
    });
}

/// x[m,n] + bias broadcast over rows; bias holds n values (any shape).
template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias) {
    detail::require_rank2(x, "add_bias");
    const std::size_t m = x.rows(), n = x.cols();
    if (bias.size() != n)
        throw DimensionError("add_bias: bias " + shape_str(bias.shape()) + " does not match " + shape_str(x.shape()));
    std::vector<T> out(x.values().begin(), x.values().end());
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bias.values()[j];
    return make_result<T>(x.shape(), std::move(out), "add_bias", {&x, &bias}, [m, n](TensorNode<T>& self) {
        auto& px = detail::parent(self, 0);
        auto& pb = detail::parent(self, 1);
        if (px.requires_grad)
            for (std::size_t i = 0; i < self.grad.size(); ++i) px.grad[i] += self.grad[i];
        if (pb.requires_grad)
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) pb.grad[j] += self.grad[i * n + j];
    });
}

/// Selects rows of `table` (embedding lookup, codebook lookup, row slicing).
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& table, std::vector<int> indices) {
    detail::require_rank2(table, "gather_rows");
    const std::size_t rows = table.rows(), d = table.cols();
    std::vector<T> out(indices.size() * d);
    for (std::size_t r = 0; r < indices.size(); ++r) {
        const int idx = indices[r];
        if (idx < 0 || static_cast<std::size_t>(idx) >= rows)
            throw std::out_of_range("gather_rows: index " + std::to_string(idx) + " outside [0," +
                                    std::to_string(rows) + ")");
        std::copy_n(table.data() + static_cast<std::size_t>(idx) * d, d, out.data() + r * d);
    }
    const std::size_t n = indices.size();
    return make_result<T>({n, d}, std::move(out), "gather_rows", {&table},
                          [idx = std::move(indices), d](TensorNode<T>& self) {
                              auto& pt = detail::parent(self, 0);
                              for (std::size_t r = 0; r < idx.size(); ++r) {
                                  T* dst = pt.grad.data() + static_cast<std::size_t>(idx[r]) * d;
                                  const T* src = self.grad.data() + r * d;
                                  for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
                              }
                          });
}

/// Row-wise RMS normalization with a learned per-column gain.
template <typename T>
Tensor<T> rms_norm(const Tensor<T>& x, const Tensor<T>& gain, T eps = T(1e-5)) {
    detail::require_rank2(x, "rms_norm");
    const std::size_t m = x.rows(), d = x.cols();
    if (gain.size() != d) throw DimensionError("rms_norm: gain size does not match " + shape_str(x.shape()));
    std::vector<T> out(m * d);
    std::vector<T> inv_rms(m);
    for (std::size_t i = 0; i < m; ++i) {
        const T* row = x.data() + i * d;
        T ss = 0;
        for (std::size_t j = 0; j < d; ++j) ss += row[j] * row[j];
        const T r = T(1) / std::sqrt(ss / T(d) + eps);
        inv_rms[i] = r;
        for (std::size_t j = 0; j < d; ++j) out[i * d + j] = row[j] * r * gain.values()[j];
    }
    return make_result<T>(x.shape(), std::move(out), "rms_norm", {&x, &gain},
                          [m, d, inv = std::move(inv_rms)](TensorNode<T>& self) {
                              auto& px = detail::parent(self, 0);
                              auto& pg = detail::parent(self, 1);
                              for (std::size_t i = 0; i < m; ++i) {
                                  const T r = inv[i];
                                  const T* xr = px.value.data() + i * d;
                                  const T* gr = self.grad.data() + i * d;
                                  if (pg.requires_grad)
                                      for (std::size_t j = 0; j < d; ++j) pg.grad[j] += gr[j] * xr[j] * r;
                                  if (px.requires_grad) {
                                      T dot = 0;
                                      for (std::size_t j = 0; j < d; ++j) dot += gr[j] * pg.value[j] * xr[j] * r;
                                      dot /= T(d);
                                      T* dx = px.grad.data() + i * d;
                                      for (std::size_t j = 0; j < d; ++j)
                                          dx[j] += r * (gr[j] * pg.value[j] - xr[j] * r * dot);
                                  }
                              }
                          });
}

template <typename T>
Tensor<T> silu(const Tensor<T>& x) {
    std::vector<T> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const T v = x.values()[i];
        out[i] = v / (T(1) + std::exp(-v));
    }
    return make_result<T>(x.shape(), std::move(out), "silu", {&x}, [](TensorNode<T>& self) {
        auto& px = detail::parent(self, 0);
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            const T v = px.value[i];
            const T s = T(1) / (T(1) + std::exp(-v));
            px.grad[i] += self.grad[i] * s * (T(1) + v * (T(1) - s));
        }
    });
}

template <typename T>
Tensor<T> concat_cols(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_rank2(a, "concat_cols");
    detail::require_rank2(b, "concat_cols");
    if (a.rows() != b.rows())
        throw DimensionError("concat_cols: row mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    const std::size_t m = a.rows(), p = a.cols(), q = b.cols();
    std::vector<T> out(m * (p + q));
    for (std::size_t i = 0; i < m; ++i) {
        std::copy_n(a.data() + i * p, p, out.data() + i * (p + q));
        std::copy_n(b.data() + i * q, q, out.data() + i * (p + q) + p);
    }
    return make_result<T>({m, p + q}, std::move(out), "concat_cols", {&a, &b}, [m, p, q](TensorNode<T>& self) {
        auto& pa = detail::parent(self, 0);
        auto& pb = detail::parent(self, 1);
        for (std::size_t i = 0; i < m; ++i) {
            const T* g = self.grad.data() + i * (p + q);
            if (pa.requires_grad)
                for (std::size_t j = 0; j < p; ++j) pa.grad[i * p + j] += g[j];
            if (pb.requires_grad)
                for (std::size_t j = 0; j < q; ++j) pb.grad[i * q + j] += g[p + j];
        }
    });
}

/// Values pass through; no gradient reaches `x`.
template <typename T>
Tensor<T> stop_gradient(const Tensor<T>& x) {
    return Tensor<T>::from(x.shape(), std::vector<T>(x.values().begin(), x.values().end()), false);
}

/// Forward value is exactly `code`; the gradient flows to `encoder` as the
/// identity and never to `code`. Same as encoder + stop_gradient(code - encoder)
/// without the rounding of the add/sub pair.
template <typename T>
Tensor<T> straight_through(const Tensor<T>& encoder, const Tensor<T>& code) {
    detail::require_same_shape(encoder, code, "straight_through");
    std::vector<T> out(code.values().begin(), code.values().end());
    return make_result<T>(code.shape(), std::move(out), "straight_through", {&encoder}, [](TensorNode<T>& self) {
        auto& pe = detail::parent(self, 0);
        for (std::size_t i = 0; i < self.grad.size(); ++i) pe.grad[i] += self.grad[i];
    });
}

/// Row-wise softmax.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x) {
    detail::require_rank2(x, "softmax_rows");
    const std::size_t m = x.rows(), n = x.cols();
    std::vector<T> out(m * n);
    for (std::size_t i = 0; i < m; ++i) {
        const T* row = x.data() + i * n;
        T* o = out.data() + i * n;
        const T mx = *std::max_element(row, row + n);
        T z = 0;
        for (std::size_t j = 0; j < n; ++j) z += (o[j] = std::exp(row[j] - mx));
        for (std::size_t j = 0; j < n; ++j) o[j] /= z;
    }
    auto probs = out;
    return make_result<T>(x.shape(), std::move(out), "softmax_rows", {&x},
                          [m, n, p = std::move(probs)](TensorNode<T>& self) {
                              auto& px = detail::parent(self, 0);
                              for (std::size_t i = 0; i < m; ++i) {
                                  const T* pr = p.data() + i * n;
                                  const T* g = self.grad.data() + i * n;
                                  T dot = 0;
                                  for (std::size_t j = 0; j < n; ++j) dot += g[j] * pr[j];
                                  for (std::size_t j = 0; j < n; ++j) px.grad[i * n + j] += pr[j] * (g[j] - dot);
                              }
                          });
}

namespace detail {

/// Shared kernel for the NLL losses: per-row loss, and softmax probabilities
/// for rows with non-zero weight.
template <typename T>
void row_nll(const T* row, std::size_t n, int target, T* probs, T& loss) {
    const T mx = *std::max_element(row, row + n);
    T z = 0;
    for (std::size_t j = 0; j < n; ++j) z += (probs[j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < n; ++j) probs[j] /= z;
    loss = -(row[target] - mx - std::log(z));
}

template <typename T>
void check_targets(const Tensor<T>& logits, std::span<const int> targets, std::size_t weights, const char* op) {
    require_rank2(logits, op);
    if (targets.size() != logits.rows() || weights != logits.rows())
        throw DimensionError(std::string(op) + ": targets/weights length must equal logit rows " +
                             std::to_string(logits.rows()));
    for (int t : targets)
        if (t < 0 || static_cast<std::size_t>(t) >= logits.cols())
            throw std::out_of_range(std::string(op) + ": target " + std::to_string(t) + " outside vocabulary of " +
                                    std::to_string(logits.cols()));
}

}  // namespace detail

/// Weighted mean of -log softmax(logits)[target] over rows with weight > 0.
/// An all-zero weight vector yields 0 with a zero gradient.
template <typename T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> targets, std::span<const T> weights) {
    detail::check_targets(logits, targets, weights.size(), "softmax_cross_entropy");
    const std::size_t m = logits.rows(), n = logits.cols();
    T wsum = 0;
    for (T w : weights) {
        if (w < T(0)) throw std::invalid_argument("softmax_cross_entropy: negative mask weight");
        wsum += w;
    }
    std::vector<T> probs(m * n, T(0));
    T total = 0;
    for (std::size_t i = 0; i < m; ++i) {
        if (weights[i] <= T(0)) continue;
        T loss;
        detail::row_nll(logits.data() + i * n, n, targets[i], probs.data() + i * n, loss);
        total += weights[i] * loss;
    }
    const T value = wsum > T(0) ? total / wsum : T(0);
    return make_result<T>({1, 1}, {value}, "softmax_cross_entropy", {&logits},
                          [m, n, wsum, p = std::move(probs), tg = std::vector<int>(targets.begin(), targets.end()),
                           w = std::vector<T>(weights.begin(), weights.end())](TensorNode<T>& self) {
                              if (wsum <= T(0)) return;
                              auto& pl = detail::parent(self, 0);
                              const T g = self.grad[0] / wsum;
                              for (std::size_t i = 0; i < m; ++i) {
                                  if (w[i] <= T(0)) continue;
                                  T* dst = pl.grad.data() + i * n;
                                  const T* pr = p.data() + i * n;
                                  const T s = g * w[i];
                                  for (std::size_t j = 0; j < n; ++j) dst[j] += s * pr[j];
                                  dst[tg[i]] -= s;
                              }
                          });
}

/// Sum over rows of weight * -log softmax(logits)[target]. Weights may be
/// negative (policy-gradient surrogate); rows with weight 0 are skipped.
template <typename T>
Tensor<T> weighted_nll(const Tensor<T>& logits, std::span<const int> targets, std::span<const T> weights) {
    detail::check_targets(logits, targets, weights.size(), "weighted_nll");
    const std::size_t m = logits.rows(), n = logits.cols();
    std::vector<T> probs(m * n, T(0));
    T total = 0;
    for (std::size_t i = 0; i < m; ++i) {
        if (weights[i] == T(0)) continue;
        T loss;
        detail::row_nll(logits.data() + i * n, n, targets[i], probs.data() + i * n, loss);
        total += weights[i] * loss;
    }
    return make_result<T>({1, 1}, {total}, "weighted_nll", {&logits},
                          [m, n, p = std::move(probs), tg = std::vector<int>(targets.begin(), targets.end()),
                           w = std::vector<T>(weights.begin(), weights.end())](TensorNode<T>& self) {
                              auto& pl = detail::parent(self, 0);
                              const T g = self.grad[0];
                              for (std::size_t i = 0; i < m; ++i) {
                                  if (w[i] == T(0)) continue;
                                  T* dst = pl.grad.data() + i * n;
                                  const T* pr = p.data() + i * n;
                                  const T s = g * w[i];
                                  for (std::size_t j = 0; j < n; ++j) dst[j] += s * pr[j];
                                  dst[tg[i]] -= s;
                              }
                          });
}

/// sum_i w_i * ||x_i||^2 / sum_i w_i; zero total weight yields 0.
template <typename T>
Tensor<T> weighted_mean_sq_norm(const Tensor<T>& x, std::span<const T> weights) {
    detail::require_rank2(x, "weighted_mean_sq_norm");
    const std::size_t m = x.rows(), d = x.cols();
    if (weights.size() != m) throw DimensionError("weighted_mean_sq_norm: weights length must equal rows");
    T wsum = 0, total = 0;
    for (std::size_t i = 0; i < m; ++i) {
        if (weights[i] == T(0)) continue;
        T ss = 0;
        for (std::size_t j = 0; j < d; ++j) ss += x.at(i, j) * x.at(i, j);
        total += weights[i] * ss;
        wsum += weights[i];
    }
    const T value = wsum > T(0) ? total / wsum : T(0);
    return make_result<T>({1, 1}, {value}, "weighted_mean_sq_norm", {&x},
                          [m, d, wsum, w = std::vector<T>(weights.begin(), weights.end())](TensorNode<T>& self) {
                              if (wsum <= T(0)) return;
                              auto& px = detail::parent(self, 0);
                              const T g = self.grad[0] / wsum;
                              for (std::size_t i = 0; i < m; ++i) {
                                  if (w[i] == T(0)) continue;
                                  for (std::size_t j = 0; j < d; ++j)
                                      px.grad[i * d + j] += T(2) * g * w[i] * px.value[i * d + j];
                              }
                          });
}

/// Multi-head causal attention over packed sequences. q, k, v are [R, d]
/// with R = sequences * seq_len; row r belongs to sequence r / seq_len and
/// attends only to rows of the same sequence at positions <= its own.
template <typename T>
Tensor<T> causal_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, std::size_t heads,
                           std::size_t seq_len) {
    detail::require_same_shape(q, k, "causal_attention");
    detail::require_same_shape(q, v, "causal_attention");
    const std::size_t rows = q.rows(), d = q.cols();
    if (heads == 0 || d % heads != 0) throw DimensionError("causal_attention: model width not divisible by heads");
    if (seq_len == 0 || rows % seq_len != 0)
        throw DimensionError("causal_attention: " + std::to_string(rows) + " rows do not pack into sequences of " +
                             std::to_string(seq_len));
    using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using Block = Eigen::Map<Mat, 0, Eigen::OuterStride<>>;
    using ConstBlock = Eigen::Map<const Mat, 0, Eigen::OuterStride<>>;
    using Square = Eigen::Map<Mat>;
    const std::size_t nseq = rows / seq_len, hd = d / heads, t = seq_len;
    const auto T_ = static_cast<Eigen::Index>(t), H_ = static_cast<Eigen::Index>(hd);
    const Eigen::OuterStride<> stride(static_cast<Eigen::Index>(d));
    const T scale = T(1) / std::sqrt(T(hd));
    // Probabilities per (sequence, head), [t, t] with zeros above the diagonal.
    std::vector<T> probs(nseq * heads * t * t, T(0));
    std::vector<T> out(rows * d, T(0));
    for (std::size_t s = 0; s < nseq; ++s) {
        for (std::size_t h = 0; h < heads; ++h) {
            const std::size_t off = s * t * d + h * hd;
            ConstBlock Q(q.data() + off, T_, H_, stride), K(k.data() + off, T_, H_, stride), V(v.data() + off, T_, H_, stride);
            Square P(probs.data() + (s * heads + h) * t * t, T_, T_);
            P.noalias() = (Q * K.transpose()) * scale;
            for (std::size_t i = 0; i < t; ++i) {
                T* prow = P.data() + i * t;
                const T mx = *std::max_element(prow, prow + i + 1);
                T z = 0;
                for (std::size_t j = 0; j <= i; ++j) z += (prow[j] = std::exp(prow[j] - mx));
                const T inv = T(1) / z;
                for (std::size_t j = 0; j <= i; ++j) prow[j] *= inv;
                std::fill(prow + i + 1, prow + t, T(0));
            }
            Block O(out.data() + off, T_, H_, stride);
            O.noalias() = P * V;
        }
    }
    return make_result<T>(
        {rows, d}, std::move(out), "causal_attention", {&q, &k, &v},
        [nseq, heads, hd, t, d, scale, p = std::move(probs)](TensorNode<T>& self) {
            auto& pq = detail::parent(self, 0);
            auto& pk = detail::parent(self, 1);
            auto& pv = detail::parent(self, 2);
            const auto T_ = static_cast<Eigen::Index>(t), H_ = static_cast<Eigen::Index>(hd);
            const Eigen::OuterStride<> stride(static_cast<Eigen::Index>(d));
            Mat dp(T_, T_);
            for (std::size_t s = 0; s < nseq; ++s) {
                for (std::size_t h = 0; h < heads; ++h) {
                    const std::size_t off = s * t * d + h * hd;
                    Eigen::Map<const Mat> P(p.data() + (s * heads + h) * t * t, T_, T_);
                    ConstBlock dO(self.grad.data() + off, T_, H_, stride);
                    ConstBlock V(pv.value.data() + off, T_, H_, stride);
                    if (pv.requires_grad) {
                        Block dV(pv.grad.data() + off, T_, H_, stride);
                        dV.noalias() += P.transpose() * dO;
                    }
                    if (!pq.requires_grad && !pk.requires_grad) continue;
                    dp.noalias() = dO * V.transpose();
                    // softmax backward; entries above the diagonal have P = 0
                    for (std::size_t i = 0; i < t; ++i) {
                        const T* prow = P.data() + i * t;
                        T* drow = dp.data() + i * t;
                        T acc = 0;
                        for (std::size_t j = 0; j <= i; ++j) acc += drow[j] * prow[j];
                        for (std::size_t j = 0; j <= i; ++j) drow[j] = prow[j] * (drow[j] - acc) * scale;
                        std::fill(drow + i + 1, drow + t, T(0));
                    }
                    if (pq.requires_grad) {
                        Block dQ(pq.grad.data() + off, T_, H_, stride);
                        dQ.noalias() += dp * ConstBlock(pk.value.data() + off, T_, H_, stride);
                    }
                    if (pk.requires_grad) {
                        Block dK(pk.grad.data() + off, T_, H_, stride);
                        dK.noalias() += dp.transpose() * ConstBlock(pq.value.data() + off, T_, H_, stride);
                    }
                }
            }
        });
}

}  // namespace bwarea
