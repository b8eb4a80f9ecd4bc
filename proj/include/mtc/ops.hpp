#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "mtc/error.hpp"
#include "mtc/rng.hpp"
#include "mtc/tensor.hpp"

namespace mtc::nn {

namespace detail {

template <class T>
void check_finite(const std::vector<T>& v, const char* op) {
  for (T x : v) {
    if (!std::isfinite(x)) throw NumericError(std::string("non-finite value produced by ") + op);
  }
}

/// Wraps freshly computed values as an op output, wiring the backward rule
/// only when recording is on and some input needs a gradient.
template <class T, class Backward>
Tensor<T> result(Shape shape, std::vector<T> data, std::vector<Tensor<T>> inputs, const char* op,
                 Backward&& rule) {
  check_finite(data, op);
  auto out = Tensor<T>::from(std::move(shape), std::move(data));
  bool needs = false;
  if (GradMode::enabled()) {
    for (const auto& in : inputs) needs = needs || in.requires_grad();
  }
  if (needs) {
    auto& node = *out.node();
    node.requires_grad = true;
    node.op = op;
    for (auto& in : inputs) node.inputs.push_back(in.node());
    node.backward = std::forward<Backward>(rule);
  }
  return out;
}

// C[m x n] (+)= A[m x k] * B[k x n]
template <class T>
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c) {
  for (std::size_t i = 0; i < m; ++i) {
    T* ci = c + i * n;
    const T* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = ai[p];
      const T* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// C[k x n] += A[m x k]^T * B[m x n]
template <class T>
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* ai = a + i * k;
    const T* bi = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = ai[p];
      T* cp = c + p * n;
      for (std::size_t j = 0; j < n; ++j) cp[j] += av * bi[j];
    }
  }
}

// C[m x k] += A[m x n] * B[k x n]^T
template <class T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  std::vector<T> bt(n * k);
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = b[p * n + j];
  gemm_nn(m, n, k, a, bt.data(), c);
}

inline void require(bool ok, const std::string& what) {
  if (!ok) throw DimensionError(what);
}

}  // namespace detail

/// Matrix product of a[m x k] and b[k x n].
template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0),
                  "matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<T> c(m * n, T(0));
  detail::gemm_nn(m, k, n, a.values().data(), b.values().data(), c.data());
  return detail::result<T>({m, n}, std::move(c), {a, b}, "matmul", [m, k, n](Node<T>& self) {
    auto& A = *self.inputs[0];
    auto& B = *self.inputs[1];
    if (A.requires_grad) detail::gemm_nt(m, n, k, self.grad.data(), B.data.data(), A.ensure_grad().data());
    if (B.requires_grad) detail::gemm_tn(m, k, n, A.data.data(), self.grad.data(), B.ensure_grad().data());
  });
}

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require(a.shape() == b.shape(), "add: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
  return detail::result<T>(a.shape(), std::move(out), {a, b}, "add", [](Node<T>& self) {
    for (auto& in : self.inputs) {
      if (!in->requires_grad) continue;
      auto& g = in->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require(a.shape() == b.shape(), "mul: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
  return detail::result<T>(a.shape(), std::move(out), {a, b}, "mul", [](Node<T>& self) {
    auto& A = *self.inputs[0];
    auto& B = *self.inputs[1];
    if (A.requires_grad) {
      auto& g = A.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * B.data[i];
    }
    if (B.requires_grad) {
      auto& g = B.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * A.data[i];
    }
  });
}

template <class T>
Tensor<T> scale(const Tensor<T>& x, T s) {
  std::vector<T> out(x.values());
  for (auto& v : out) v *= s;
  return detail::result<T>(x.shape(), std::move(out), {x}, "scale", [s](Node<T>& self) {
    auto& g = self.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * self.grad[i];
  });
}

/// x[... x n] + bias[n], broadcast over rows.
template <class T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias) {
  const std::size_t n = bias.numel();
  detail::require(bias.rank() == 1 && x.shape().back() == n,
                  "add_bias: " + shape_str(x.shape()) + " + " + shape_str(bias.shape()));
  std::vector<T> out(x.values());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bias.values()[i % n];
  return detail::result<T>(x.shape(), std::move(out), {x, bias}, "add_bias", [n](Node<T>& self) {
    auto& X = *self.inputs[0];
    auto& Bv = *self.inputs[1];
    if (X.requires_grad) {
      auto& g = X.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (Bv.requires_grad) {
      auto& g = Bv.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i % n] += self.grad[i];
    }
  });
}

template <class T>
Tensor<T> relu(const Tensor<T>& x) {
  std::vector<T> out(x.values());
  for (auto& v : out) v = v > T(0) ? v : T(0);
  return detail::result<T>(x.shape(), std::move(out), {x}, "relu", [](Node<T>& self) {
    auto& X = *self.inputs[0];
    auto& g = X.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (X.data[i] > T(0)) g[i] += self.grad[i];
    }
  });
}

template <class T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc = T(0);
  for (T v : x.values()) acc += v;
  return detail::result<T>({1}, {acc}, {x}, "sum", [](Node<T>& self) {
    auto& g = self.inputs[0]->ensure_grad();
    for (auto& v : g) v += self.grad[0];
  });
}

template <class T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

/// Exp-normalizes along `axis` with max subtraction.
template <class T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
  if (axis >= x.rank()) throw ConfigError("softmax: axis " + std::to_string(axis) + " out of range");
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
  for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  const std::size_t len = x.dim(axis);
  std::vector<T> y(x.numel());
  const auto& xv = x.values();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      T mx = xv[base];
      for (std::size_t j = 1; j < len; ++j) mx = std::max(mx, xv[base + j * inner]);
      T z = T(0);
      for (std::size_t j = 0; j < len; ++j) {
        const T e = std::exp(xv[base + j * inner] - mx);
        y[base + j * inner] = e;
        z += e;
      }
      for (std::size_t j = 0; j < len; ++j) y[base + j * inner] /= z;
    }
  }
  return detail::result<T>(x.shape(), std::move(y), {x}, "softmax", [outer, inner, len](Node<T>& self) {
    auto& g = self.inputs[0]->ensure_grad();
    const auto& yv = self.data;
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * len * inner + in;
        T dot = T(0);
        for (std::size_t j = 0; j < len; ++j) dot += self.grad[base + j * inner] * yv[base + j * inner];
        for (std::size_t j = 0; j < len; ++j) {
          const std::size_t idx = base + j * inner;
          g[idx] += yv[idx] * (self.grad[idx] - dot);
        }
      }
    }
  });
}

/// Normalizes each last-axis row to zero mean / unit biased variance, then
/// applies gamma and beta.
template <class T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps = T(1e-5)) {
  if (!(eps > T(0))) throw ConfigError("layer_norm: eps must be positive");
  const std::size_t d = x.shape().back();
  detail::require(gamma.numel() == d && beta.numel() == d,
                  "layer_norm: feature dim " + std::to_string(d) + " vs gamma " + shape_str(gamma.shape()));
  const std::size_t rows = x.numel() / d;
  std::vector<T> y(x.numel()), xhat(x.numel()), rstd(rows);
  const auto& xv = x.values();
  const auto& gv = gamma.values();
  const auto& bv = beta.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = xv.data() + r * d;
    T mu = T(0);
    for (std::size_t j = 0; j < d; ++j) mu += xr[j];
    mu /= static_cast<T>(d);
    T var = T(0);
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<T>(d);
    const T rs = T(1) / std::sqrt(var + eps);
    rstd[r] = rs;
    for (std::size_t j = 0; j < d; ++j) {
      const T h = (xr[j] - mu) * rs;
      xhat[r * d + j] = h;
      y[r * d + j] = gv[j] * h + bv[j];
    }
  }
  return detail::result<T>(
      x.shape(), std::move(y), {x, gamma, beta}, "layer_norm",
      [d, rows, xhat = std::move(xhat), rstd = std::move(rstd)](Node<T>& self) {
        auto& X = *self.inputs[0];
        auto& G = *self.inputs[1];
        auto& Bt = *self.inputs[2];
        const auto& dy = self.grad;
        if (G.requires_grad || Bt.requires_grad) {
          auto& gg = G.ensure_grad();
          auto& gb = Bt.ensure_grad();
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < d; ++j) {
              gg[j] += dy[r * d + j] * xhat[r * d + j];
              gb[j] += dy[r * d + j];
            }
          }
        }
        if (X.requires_grad) {
          auto& gx = X.ensure_grad();
          for (std::size_t r = 0; r < rows; ++r) {
            T mean_dh = T(0), mean_dh_h = T(0);
            for (std::size_t j = 0; j < d; ++j) {
              const T dh = dy[r * d + j] * G.data[j];
              mean_dh += dh;
              mean_dh_h += dh * xhat[r * d + j];
            }
            mean_dh /= static_cast<T>(d);
            mean_dh_h /= static_cast<T>(d);
            for (std::size_t j = 0; j < d; ++j) {
              const T dh = dy[r * d + j] * G.data[j];
              gx[r * d + j] += rstd[r] * (dh - mean_dh - xhat[r * d + j] * mean_dh_h);
            }
          }
        }
      });
}

/// Mean over the batch of -log softmax(logits)[target].
template <class T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const std::size_t> targets) {
  detail::require(logits.rank() == 2 && logits.dim(0) == targets.size(),
                  "cross_entropy: logits " + shape_str(logits.shape()) + " vs " +
                      std::to_string(targets.size()) + " targets");
  const std::size_t B = logits.dim(0), C = logits.dim(1);
  for (std::size_t t : targets) {
    if (t >= C) throw IndexError("cross_entropy: target " + std::to_string(t) + " >= " + std::to_string(C));
  }
  const auto& xv = logits.values();
  std::vector<T> probs(B * C);
  T total = T(0);
  for (std::size_t b = 0; b < B; ++b) {
    const T* row = xv.data() + b * C;
    const T mx = *std::max_element(row, row + C);
    T z = T(0);
    for (std::size_t c = 0; c < C; ++c) {
      probs[b * C + c] = std::exp(row[c] - mx);
      z += probs[b * C + c];
    }
    for (std::size_t c = 0; c < C; ++c) probs[b * C + c] /= z;
    total += (mx + std::log(z)) - row[targets[b]];
  }
  std::vector<std::size_t> tgt(targets.begin(), targets.end());
  return detail::result<T>({1}, {total / static_cast<T>(B)}, {logits}, "cross_entropy",
                           [B, C, probs = std::move(probs), tgt = std::move(tgt)](Node<T>& self) {
                             auto& g = self.inputs[0]->ensure_grad();
                             const T s = self.grad[0] / static_cast<T>(B);
                             for (std::size_t b = 0; b < B; ++b) {
                               for (std::size_t c = 0; c < C; ++c) {
                                 const T onehot = c == tgt[b] ? T(1) : T(0);
                                 g[b * C + c] += s * (probs[b * C + c] - onehot);
                               }
                             }
                           });
}

/// Inverted dropout: survivors are scaled by 1/(1-p) at train time, so the
/// evaluation path is the identity.
template <class T>
Tensor<T> dropout(const Tensor<T>& x, double p, bool training, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw ConfigError("dropout: p must lie in [0,1), got " + std::to_string(p));
  if (!training || p == 0.0) return x;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  std::vector<T> mask(x.numel());
  for (auto& m : mask) m = rng.uniform() >= p ? keep_scale : T(0);
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.values()[i] * mask[i];
  return detail::result<T>(x.shape(), std::move(out), {x}, "dropout", [mask = std::move(mask)](Node<T>& self) {
    auto& g = self.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * mask[i];
  });
}

/// Row gather: out[r] = table[ids[r]].
template <class T>
Tensor<T> embedding(const Tensor<T>& table, std::span<const std::int32_t> ids) {
  detail::require(table.rank() == 2, "embedding: table must be 2-D");
  const std::size_t V = table.dim(0), d = table.dim(1);
  std::vector<T> out(ids.size() * d);
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0 || static_cast<std::size_t>(ids[r]) >= V) {
      throw IndexError("embedding: id " + std::to_string(ids[r]) + " outside vocabulary of " + std::to_string(V));
    }
    std::copy_n(table.values().data() + static_cast<std::size_t>(ids[r]) * d, d, out.data() + r * d);
  }
  std::vector<std::int32_t> idv(ids.begin(), ids.end());
  return detail::result<T>({ids.size(), d}, std::move(out), {table}, "embedding",
                           [d, idv = std::move(idv)](Node<T>& self) {
                             auto& g = self.inputs[0]->ensure_grad();
                             for (std::size_t r = 0; r < idv.size(); ++r) {
                               T* gr = g.data() + static_cast<std::size_t>(idv[r]) * d;
                               const T* dr = self.grad.data() + r * d;
                               for (std::size_t j = 0; j < d; ++j) gr[j] += dr[j];
                             }
                           });
}

/// Padding layout of a batch: `valid[b * len + l]` is true for real tokens.
struct SequenceMask {
  std::size_t batch = 0;
  std::size_t len = 0;
  std::vector<std::uint8_t> valid;

  std::size_t count(std::size_t b) const {
    std::size_t c = 0;
    for (std::size_t l = 0; l < len; ++l) c += valid[b * len + l];
    return c;
  }
};

/// Multi-head scaled dot-product self-attention over q, k, v laid out as
/// [batch*len x d_model]. Keys at padded positions receive zero weight.
/// Attention probabilities (before dropout) are copied to `probs_out` as
/// [batch x heads x len x len] when provided.
template <class T>
Tensor<T> attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, const SequenceMask& mask,
                    std::size_t heads, double dropout_p, bool training, Rng& rng,
                    std::vector<T>* probs_out = nullptr) {
  const std::size_t B = mask.batch, L = mask.len;
  detail::require(q.rank() == 2 && q.shape() == k.shape() && q.shape() == v.shape() && q.dim(0) == B * L,
                  "attention: q/k/v must share shape [batch*len x d]");
  const std::size_t d = q.dim(1);
  if (heads == 0 || d % heads != 0) throw ConfigError("attention: d_model not divisible by heads");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw ConfigError("attention: dropout must lie in [0,1)");
  const std::size_t dh = d / heads;
  const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(dh));
  for (std::size_t b = 0; b < B; ++b) {
    if (mask.count(b) == 0) throw DataError("attention: batch row " + std::to_string(b) + " is all padding");
  }
  const bool drop = training && dropout_p > 0.0;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - dropout_p));
  std::vector<T> probs(B * heads * L * L, T(0));
  std::vector<T> dmask;
  if (drop) dmask.assign(probs.size(), T(0));
  std::vector<T> out(B * L * d, T(0));
  const T* Q = q.values().data();
  const T* K = k.values().data();
  const T* Vv = v.values().data();
  for (std::size_t b = 0; b < B; ++b) {
    const std::uint8_t* valid = mask.valid.data() + b * L;
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t i = 0; i < L; ++i) {
        T* p = probs.data() + ((b * heads + h) * L + i) * L;
        const T* qi = Q + (b * L + i) * d + h * dh;
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t j = 0; j < L; ++j) {
          if (!valid[j]) continue;
          const T* kj = K + (b * L + j) * d + h * dh;
          T s = T(0);
          for (std::size_t t = 0; t < dh; ++t) s += qi[t] * kj[t];
          p[j] = s * inv_sqrt;
          mx = std::max(mx, p[j]);
        }
        T z = T(0);
        for (std::size_t j = 0; j < L; ++j) {
          if (!valid[j]) continue;
          p[j] = std::exp(p[j] - mx);
          z += p[j];
        }
        T* oi = out.data() + (b * L + i) * d + h * dh;
        for (std::size_t j = 0; j < L; ++j) {
          if (!valid[j]) continue;
          p[j] /= z;
          T w = p[j];
          if (drop) {
            const T m = rng.uniform() >= dropout_p ? keep_scale : T(0);
            dmask[((b * heads + h) * L + i) * L + j] = m;
            w *= m;
          }
          const T* vj = Vv + (b * L + j) * d + h * dh;
          for (std::size_t t = 0; t < dh; ++t) oi[t] += w * vj[t];
        }
      }
    }
  }
  if (probs_out) *probs_out = probs;
  return detail::result<T>(
      {B * L, d}, std::move(out), {q, k, v}, "attention",
      [B, L, d, heads, dh, inv_sqrt, drop, valid = mask.valid, probs = std::move(probs),
       dmask = std::move(dmask)](Node<T>& self) {
        auto& Qn = *self.inputs[0];
        auto& Kn = *self.inputs[1];
        auto& Vn = *self.inputs[2];
        T* gq = Qn.requires_grad ? Qn.ensure_grad().data() : nullptr;
        T* gk = Kn.requires_grad ? Kn.ensure_grad().data() : nullptr;
        T* gv = Vn.requires_grad ? Vn.ensure_grad().data() : nullptr;
        std::vector<T> dp(L);
        for (std::size_t b = 0; b < B; ++b) {
          const std::uint8_t* vb = valid.data() + b * L;
          for (std::size_t h = 0; h < heads; ++h) {
            for (std::size_t i = 0; i < L; ++i) {
              const std::size_t prow = ((b * heads + h) * L + i) * L;
              const T* p = probs.data() + prow;
              const T* go = self.grad.data() + (b * L + i) * d + h * dh;
              T dot = T(0);
              for (std::size_t j = 0; j < L; ++j) {
                if (!vb[j]) continue;
                const T m = drop ? dmask[prow + j] : T(1);
                const T* vj = Vn.data.data() + (b * L + j) * d + h * dh;
                T s = T(0);
                for (std::size_t t = 0; t < dh; ++t) s += go[t] * vj[t];
                dp[j] = s * m;
                dot += dp[j] * p[j];
                if (gv) {
                  T* gvj = gv + (b * L + j) * d + h * dh;
                  const T w = p[j] * m;
                  for (std::size_t t = 0; t < dh; ++t) gvj[t] += w * go[t];
                }
              }
              if (!gq && !gk) continue;
              const T* qi = Qn.data.data() + (b * L + i) * d + h * dh;
              for (std::size_t j = 0; j < L; ++j) {
                if (!vb[j]) continue;
                const T ds = p[j] * (dp[j] - dot) * inv_sqrt;
                const T* kj = Kn.data.data() + (b * L + j) * d + h * dh;
                if (gq) {
                  T* gqi = gq + (b * L + i) * d + h * dh;
                  for (std::size_t t = 0; t < dh; ++t) gqi[t] += ds * kj[t];
                }
                if (gk) {
                  T* gkj = gk + (b * L + j) * d + h * dh;
                  for (std::size_t t = 0; t < dh; ++t) gkj[t] += ds * qi[t];
                }
              }
            }
          }
        }
      });
}

/// Mean of the valid rows of each sequence: [batch*len x d] -> [batch x d].
template <class T>
Tensor<T> masked_mean_pool(const Tensor<T>& x, const SequenceMask& mask) {
  const std::size_t B = mask.batch, L = mask.len;
  detail::require(x.rank() == 2 && x.dim(0) == B * L, "masked_mean_pool: expected [batch*len x d]");
  const std::size_t d = x.dim(1);
  std::vector<T> inv(B);
  for (std::size_t b = 0; b < B; ++b) {
    const auto c = mask.count(b);
    if (c == 0) throw DataError("masked_mean_pool: batch row " + std::to_string(b) + " is all padding");
    inv[b] = T(1) / static_cast<T>(c);
  }
  std::vector<T> out(B * d, T(0));
  const T* xv = x.values().data();
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t l = 0; l < L; ++l) {
      if (!mask.valid[b * L + l]) continue;
      for (std::size_t j = 0; j < d; ++j) out[b * d + j] += xv[(b * L + l) * d + j];
    }
    for (std::size_t j = 0; j < d; ++j) out[b * d + j] *= inv[b];
  }
  return detail::result<T>({B, d}, std::move(out), {x}, "masked_mean_pool",
                           [B, L, d, inv = std::move(inv), valid = mask.valid](Node<T>& self) {
                             auto& g = self.inputs[0]->ensure_grad();
                             for (std::size_t b = 0; b < B; ++b) {
                               for (std::size_t l = 0; l < L; ++l) {
                                 if (!valid[b * L + l]) continue;
                                 for (std::size_t j = 0; j < d; ++j) {
                                   g[(b * L + l) * d + j] += self.grad[b * d + j] * inv[b];
                                 }
                               }
                             }
                           });
}

}  // namespace mtc::nn
