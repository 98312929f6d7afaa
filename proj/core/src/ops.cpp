#include "mkdm/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <vector>

#include "kernels.hpp"

namespace mkdm::ops {
namespace {

template <typename T>
void require_matrix(const Var<T>& x, const char* op) {
  if (x.value().rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " + to_string(x.shape()));
  }
}

template <typename T>
void require_same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
  }
}

template <typename T>
void add_into(BasicTensor<T>* dst, const BasicTensor<T>& src) {
  if (!dst) return;
  auto d = dst->values();
  auto s = src.values();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

// Softmax of one row into `out`, reduction carried in double.
template <typename T>
void softmax_row(const T* in, T* out, std::int64_t n) {
  T max_v = in[0];
  for (std::int64_t j = 1; j < n; ++j) max_v = std::max(max_v, in[j]);
  double total = 0.0;
  for (std::int64_t j = 0; j < n; ++j) {
    const double e = std::exp(static_cast<double>(in[j] - max_v));
    out[j] = static_cast<T>(e);
    total += e;
  }
  const double inv = 1.0 / total;
  for (std::int64_t j = 0; j < n; ++j) out[j] = static_cast<T>(static_cast<double>(out[j]) * inv);
}

// dx = p ∘ (dp − Σ dp∘p), one row.
template <typename T>
void softmax_row_backward(const T* p, const T* dp, T* dx, std::int64_t n) {
  double dot = 0.0;
  for (std::int64_t j = 0; j < n; ++j) dot += static_cast<double>(dp[j]) * p[j];
  for (std::int64_t j = 0; j < n; ++j) dx[j] += static_cast<T>(p[j] * (dp[j] - dot));
}

}  // namespace

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const auto m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw DimensionError("matmul: inner dimensions differ, " + to_string(a.shape()) + " x " + to_string(b.shape()));
  }
  BasicTensor<T> out({m, n});
  kernels::gemm_nn(m, n, k, a.value().data(), b.value().data(), out.data(), false);
  return a.tape()->record(std::move(out), {a, b}, [a, b, m, n, k](Tape<T>& tape, const BasicTensor<T>& g) {
    if (auto* ga = tape.grad_sink(a)) kernels::gemm_nt(m, k, n, g.data(), b.value().data(), ga->data(), true);
    if (auto* gb = tape.grad_sink(b)) kernels::gemm_tn(k, n, m, a.value().data(), g.data(), gb->data(), true);
  });
}

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& bias) {
  require_matrix(x, "linear");
  require_matrix(w, "linear");
  const auto m = x.shape()[0], k = x.shape()[1], n = w.shape()[1];
  if (w.shape()[0] != k) {
    throw DimensionError("linear: inner dimensions differ, " + to_string(x.shape()) + " x " + to_string(w.shape()));
  }
  const bool has_bias = bias.valid();
  if (has_bias && static_cast<std::int64_t>(bias.value().size()) != n) {
    throw DimensionError("linear: bias " + to_string(bias.shape()) + " does not match output width " +
                         std::to_string(n));
  }
  BasicTensor<T> out({m, n});
  if (has_bias) {
    const T* b = bias.value().data();
    for (std::int64_t i = 0; i < m; ++i) std::copy(b, b + n, out.data() + i * n);
  }
  kernels::gemm_nn(m, n, k, x.value().data(), w.value().data(), out.data(), has_bias);
  auto backward = [x, w, bias, has_bias, m, n, k](Tape<T>& tape, const BasicTensor<T>& g) {
    if (auto* gx = tape.grad_sink(x)) kernels::gemm_nt(m, k, n, g.data(), w.value().data(), gx->data(), true);
    if (auto* gw = tape.grad_sink(w)) kernels::gemm_tn(k, n, m, x.value().data(), g.data(), gw->data(), true);
    if (has_bias) {
      if (auto* gb = tape.grad_sink(bias)) {
        for (std::int64_t i = 0; i < m; ++i) {
          for (std::int64_t j = 0; j < n; ++j) (*gb)[j] += g[i * n + j];
        }
      }
    }
  };
  if (has_bias) return x.tape()->record(std::move(out), {x, w, bias}, backward);
  return x.tape()->record(std::move(out), {x, w}, backward);
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a, b, "add");
  BasicTensor<T> out = a.value();
  add_into(&out, b.value());
  return a.tape()->record(std::move(out), {a, b}, [a, b](Tape<T>& tape, const BasicTensor<T>& g) {
    add_into(tape.grad_sink(a), g);
    add_into(tape.grad_sink(b), g);
  });
}

template <typename T>
Var<T> add_bias(const Var<T>& x, const Var<T>& bias) {
  const auto n = x.value().cols();
  const auto m = x.value().rows();
  if (static_cast<std::int64_t>(bias.value().size()) != n) {
    throw DimensionError("add_bias: " + to_string(bias.shape()) + " does not broadcast over " + to_string(x.shape()));
  }
  BasicTensor<T> out = x.value();
  for (std::int64_t i = 0; i < m; ++i) {
    for (std::int64_t j = 0; j < n; ++j) out[i * n + j] += bias.value()[j];
  }
  return x.tape()->record(std::move(out), {x, bias}, [x, bias, m, n](Tape<T>& tape, const BasicTensor<T>& g) {
    add_into(tape.grad_sink(x), g);
    if (auto* gb = tape.grad_sink(bias)) {
      for (std::int64_t i = 0; i < m; ++i) {
        for (std::int64_t j = 0; j < n; ++j) (*gb)[j] += g[i * n + j];
      }
    }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a, b, "mul");
  BasicTensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return a.tape()->record(std::move(out), {a, b}, [a, b](Tape<T>& tape, const BasicTensor<T>& g) {
    if (auto* ga = tape.grad_sink(a)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * b.value()[i];
    }
    if (auto* gb = tape.grad_sink(b)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * a.value()[i];
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& x, T factor) {
  BasicTensor<T> out = x.value();
  for (auto& v : out.values()) v *= factor;
  return x.tape()->record(std::move(out), {x}, [x, factor](Tape<T>& tape, const BasicTensor<T>& g) {
    if (auto* gx = tape.grad_sink(x)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i] * factor;
    }
  });
}

template <typename T>
Var<T> sum(const Var<T>& x) {
  double total = 0.0;
  for (T v : x.value().values()) total += v;
  return x.tape()->record(BasicTensor<T>::scalar(static_cast<T>(total)), {x},
                          [x](Tape<T>& tape, const BasicTensor<T>& g) {
                            if (auto* gx = tape.grad_sink(x)) {
                              for (auto& v : gx->values()) v += g[0];
                            }
                          });
}

template <typename T>
Var<T> mean(const Var<T>& x) {
  const auto n = static_cast<double>(x.value().size());
  double total = 0.0;
  for (T v : x.value().values()) total += v;
  return x.tape()->record(BasicTensor<T>::scalar(static_cast<T>(total / n)), {x},
                          [x, n](Tape<T>& tape, const BasicTensor<T>& g) {
                            if (auto* gx = tape.grad_sink(x)) {
                              const T share = static_cast<T>(g[0] / n);
                              for (auto& v : gx->values()) v += share;
                            }
                          });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
  BasicTensor<T> out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T v = x.value()[i];
    // Split on sign so exp() never overflows.
    out[i] = v >= 0 ? T{1} / (T{1} + std::exp(-v)) : std::exp(v) / (T{1} + std::exp(v));
  }
  Tape<T>* tape = x.tape();
  const std::size_t out_id = tape->size();
  return tape->record(std::move(out), {x}, [x, out_id](Tape<T>& tp, const BasicTensor<T>& g) {
    if (auto* gx = tp.grad_sink(x)) {
      const auto& y = tp.value(out_id);
      for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i] * y[i] * (T{1} - y[i]);
    }
  });
}

template <typename T>
Var<T> gelu(const Var<T>& x) {
  constexpr double c = 0.7978845608028654;  // √(2/π)
  constexpr double a = 0.044715;
  BasicTensor<T> out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = x.value()[i];
    out[i] = static_cast<T>(0.5 * v * (1.0 + std::tanh(c * (v + a * v * v * v))));
  }
  return x.tape()->record(std::move(out), {x}, [x](Tape<T>& tape, const BasicTensor<T>& g) {
    if (auto* gx = tape.grad_sink(x)) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double v = x.value()[i];
        const double t = std::tanh(c * (v + a * v * v * v));
        const double d = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * c * (1.0 + 3.0 * a * v * v);
        (*gx)[i] += static_cast<T>(g[i] * d);
      }
    }
  });
}

template <typename T>
Var<T> softmax_rows(const Var<T>& x) {
  const auto m = x.value().rows(), n = x.value().cols();
  BasicTensor<T> out(x.shape());
  for (std::int64_t i = 0; i < m; ++i) softmax_row(x.value().data() + i * n, out.data() + i * n, n);
  Tape<T>* tape = x.tape();
  const std::size_t out_id = tape->size();
  return tape->record(std::move(out), {x}, [x, out_id, m, n](Tape<T>& tp, const BasicTensor<T>& g) {
    if (auto* gx = tp.grad_sink(x)) {
      const auto& p = tp.value(out_id);
      for (std::int64_t i = 0; i < m; ++i) softmax_row_backward(p.data() + i * n, g.data() + i * n, gx->data() + i * n, n);
    }
  });
}

template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gain, const Var<T>& bias, double eps) {
  const auto m = x.value().rows(), n = x.value().cols();
  if (static_cast<std::int64_t>(gain.value().size()) != n || static_cast<std::int64_t>(bias.value().size()) != n) {
    throw DimensionError("layer_norm: gain " + to_string(gain.shape()) + " / bias " + to_string(bias.shape()) +
                         " do not match " + to_string(x.shape()));
  }
  BasicTensor<T> normed(x.shape());
  std::vector<double> inv_std(static_cast<std::size_t>(m));
  BasicTensor<T> out(x.shape());
  for (std::int64_t i = 0; i < m; ++i) {
    const T* row = x.value().data() + i * n;
    double mu = 0.0;
    for (std::int64_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::int64_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(n);
    const double r = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<std::size_t>(i)] = r;
    for (std::int64_t j = 0; j < n; ++j) {
      const T xh = static_cast<T>((row[j] - mu) * r);
      normed[i * n + j] = xh;
      out[i * n + j] = gain.value()[j] * xh + bias.value()[j];
    }
  }
  return x.tape()->record(
      std::move(out), {x, gain, bias},
      [x, gain, bias, m, n, normed = std::move(normed), inv_std = std::move(inv_std)](Tape<T>& tape,
                                                                                      const BasicTensor<T>& g) {
        if (auto* gg = tape.grad_sink(gain)) {
          for (std::int64_t i = 0; i < m; ++i) {
            for (std::int64_t j = 0; j < n; ++j) (*gg)[j] += g[i * n + j] * normed[i * n + j];
          }
        }
        if (auto* gb = tape.grad_sink(bias)) {
          for (std::int64_t i = 0; i < m; ++i) {
            for (std::int64_t j = 0; j < n; ++j) (*gb)[j] += g[i * n + j];
          }
        }
        if (auto* gx = tape.grad_sink(x)) {
          for (std::int64_t i = 0; i < m; ++i) {
            double mean_d = 0.0, mean_dx = 0.0;
            for (std::int64_t j = 0; j < n; ++j) {
              const double d = static_cast<double>(g[i * n + j]) * gain.value()[j];
              mean_d += d;
              mean_dx += d * normed[i * n + j];
            }
            mean_d /= static_cast<double>(n);
            mean_dx /= static_cast<double>(n);
            const double r = inv_std[static_cast<std::size_t>(i)];
            for (std::int64_t j = 0; j < n; ++j) {
              const double d = static_cast<double>(g[i * n + j]) * gain.value()[j];
              (*gx)[i * n + j] += static_cast<T>(r * (d - mean_d - normed[i * n + j] * mean_dx));
            }
          }
        }
      });
}

template <typename T>
Var<T> dropout(const Var<T>& x, double rate, Rng& rng, bool active) {
  if (!active || rate <= 0.0) return x;
  if (rate >= 1.0) throw ContractError("dropout rate must be in [0, 1), got " + std::to_string(rate));
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  BasicTensor<T> mask(x.shape());
  BasicTensor<T> out(x.shape());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    mask[i] = rng.uniform() < rate ? T{0} : keep_scale;
    out[i] = x.value()[i] * mask[i];
  }
  return x.tape()->record(std::move(out), {x}, [x, mask = std::move(mask)](Tape<T>& tape, const BasicTensor<T>& g) {
    if (auto* gx = tape.grad_sink(x)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i] * mask[i];
    }
  });
}

template <typename T>
Var<T> embedding(const Var<T>& table, std::span<const std::int32_t> ids) {
  require_matrix(table, "embedding");
  const auto vocab = table.shape()[0], h = table.shape()[1];
  const auto n = static_cast<std::int64_t>(ids.size());
  if (n == 0) throw ContractError("embedding: no ids");
  BasicTensor<T> out({n, h});
  for (std::int64_t i = 0; i < n; ++i) {
    const auto id = ids[static_cast<std::size_t>(i)];
    if (id < 0 || id >= vocab) {
      throw ContractError("embedding: id " + std::to_string(id) + " outside table of " + std::to_string(vocab) + " rows");
    }
    std::copy_n(table.value().data() + id * h, h, out.data() + i * h);
  }
  std::vector<std::int32_t> saved(ids.begin(), ids.end());
  return table.tape()->record(std::move(out), {table},
                              [table, h, saved = std::move(saved)](Tape<T>& tape, const BasicTensor<T>& g) {
                                if (auto* gt = tape.grad_sink(table)) {
                                  for (std::size_t i = 0; i < saved.size(); ++i) {
                                    T* dst = gt->data() + saved[i] * h;
                                    const T* src = g.data() + static_cast<std::int64_t>(i) * h;
                                    for (std::int64_t j = 0; j < h; ++j) dst[j] += src[j];
                                  }
                                }
                              });
}

template <typename T>
Var<T> select_rows(const Var<T>& x, std::span<const std::int64_t> indices) {
  const auto m = x.value().rows(), n = x.value().cols();
  const auto r = static_cast<std::int64_t>(indices.size());
  if (r == 0) throw ContractError("select_rows: no indices");
  BasicTensor<T> out({r, n});
  for (std::int64_t i = 0; i < r; ++i) {
    const auto src = indices[static_cast<std::size_t>(i)];
    if (src < 0 || src >= m) throw ContractError("select_rows: row " + std::to_string(src) + " out of range");
    std::copy_n(x.value().data() + src * n, n, out.data() + i * n);
  }
  std::vector<std::int64_t> saved(indices.begin(), indices.end());
  return x.tape()->record(std::move(out), {x}, [x, n, saved = std::move(saved)](Tape<T>& tape, const BasicTensor<T>& g) {
    if (auto* gx = tape.grad_sink(x)) {
      for (std::size_t i = 0; i < saved.size(); ++i) {
        for (std::int64_t j = 0; j < n; ++j) (*gx)[saved[i] * n + j] += g[static_cast<std::int64_t>(i) * n + j];
      }
    }
  });
}

template <typename T>
Var<T> pick(const Var<T>& x, std::span<const std::int32_t> cols) {
  const auto m = x.value().rows(), c = x.value().cols();
  if (static_cast<std::int64_t>(cols.size()) != m) {
    throw DimensionError("pick: " + std::to_string(cols.size()) + " indices for " + to_string(x.shape()));
  }
  BasicTensor<T> out({m});
  for (std::int64_t i = 0; i < m; ++i) {
    const auto j = cols[static_cast<std::size_t>(i)];
    if (j < 0 || j >= c) throw ContractError("pick: column " + std::to_string(j) + " out of range");
    out[i] = x.value()[i * c + j];
  }
  std::vector<std::int32_t> saved(cols.begin(), cols.end());
  return x.tape()->record(std::move(out), {x}, [x, c, saved = std::move(saved)](Tape<T>& tape, const BasicTensor<T>& g) {
    if (auto* gx = tape.grad_sink(x)) {
      for (std::size_t i = 0; i < saved.size(); ++i) (*gx)[static_cast<std::int64_t>(i) * c + saved[i]] += g[i];
    }
  });
}

template <typename T>
Var<T> neg_log(const Var<T>& x, double floor) {
  BasicTensor<T> out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<T>(-std::log(std::max(static_cast<double>(x.value()[i]), floor)));
  }
  return x.tape()->record(std::move(out), {x}, [x, floor](Tape<T>& tape, const BasicTensor<T>& g) {
    if (auto* gx = tape.grad_sink(x)) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double v = x.value()[i];
        if (v > floor) (*gx)[i] -= static_cast<T>(g[i] / v);
      }
    }
  });
}

template <typename T>
Var<T> squared_error(const Var<T>& x, const BasicTensor<T>& target) {
  if (target.size() != x.value().size()) {
    throw DimensionError("squared_error: target " + to_string(target.shape()) + " vs " + to_string(x.shape()));
  }
  BasicTensor<T> out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T d = x.value()[i] - target[i];
    out[i] = d * d;
  }
  return x.tape()->record(std::move(out), {x}, [x, target](Tape<T>& tape, const BasicTensor<T>& g) {
    if (auto* gx = tape.grad_sink(x)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i] * T{2} * (x.value()[i] - target[i]);
    }
  });
}

template <typename T>
Var<T> sigmoid_cross_entropy(const Var<T>& logits, const BasicTensor<T>& target) {
  if (target.size() != logits.value().size()) {
    throw DimensionError("sigmoid_cross_entropy: target " + to_string(target.shape()) + " vs " +
                         to_string(logits.shape()));
  }
  BasicTensor<T> out(logits.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = logits.value()[i];
    // softplus(x) − y·x, written so that exp() only sees non-positive arguments
    out[i] = static_cast<T>(std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))) - target[i] * x);
  }
  return logits.tape()->record(std::move(out), {logits}, [logits, target](Tape<T>& tape, const BasicTensor<T>& g) {
    if (auto* gx = tape.grad_sink(logits)) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double x = logits.value()[i];
        const double s = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
        (*gx)[i] += static_cast<T>(g[i] * (s - target[i]));
      }
    }
  });
}

template <typename T>
Var<T> attention(const Var<T>& q, const Var<T>& k, const Var<T>& v, const AttentionLayout& layout,
                 std::span<const std::uint8_t> key_mask) {
  require_same_shape(q, k, "attention");
  require_same_shape(q, v, "attention");
  require_matrix(q, "attention");
  const auto B = layout.batch, L = layout.seq_len, A = layout.heads;
  const auto h = q.shape()[1];
  if (q.shape()[0] != B * L) {
    throw DimensionError("attention: " + to_string(q.shape()) + " rows do not match batch " + std::to_string(B) +
                         " x length " + std::to_string(L));
  }
  if (A <= 0 || h % A != 0) throw DimensionError("attention: hidden " + std::to_string(h) + " not divisible by heads");
  if (static_cast<std::int64_t>(key_mask.size()) != B * L) throw DimensionError("attention: mask size mismatch");
  for (std::int64_t b = 0; b < B; ++b) {
    bool any = false;
    for (std::int64_t t = 0; t < L; ++t) any = any || key_mask[static_cast<std::size_t>(b * L + t)];
    if (!any) throw ContractError("attention: example " + std::to_string(b) + " is fully masked");
  }
  const auto d = h / A;
  const T inv_sqrt = static_cast<T>(1.0 / std::sqrt(static_cast<double>(d)));

  // probs: [B, A, L, L]
  auto probs = std::make_shared<std::vector<T>>(static_cast<std::size_t>(B * A * L * L));
  BasicTensor<T> out({B * L, h});
  std::vector<T> qh(static_cast<std::size_t>(L * d)), kh(qh.size()), vh(qh.size()), oh(qh.size());
  std::vector<T> scores(static_cast<std::size_t>(L * L));

  auto gather = [&](const BasicTensor<T>& src, std::int64_t b, std::int64_t a, std::vector<T>& dst) {
    for (std::int64_t t = 0; t < L; ++t) std::copy_n(src.data() + (b * L + t) * h + a * d, d, dst.data() + t * d);
  };

  for (std::int64_t b = 0; b < B; ++b) {
    for (std::int64_t a = 0; a < A; ++a) {
      gather(q.value(), b, a, qh);
      gather(k.value(), b, a, kh);
      gather(v.value(), b, a, vh);
      kernels::gemm_nt(L, L, d, qh.data(), kh.data(), scores.data(), false);
      T* p = probs->data() + (b * A + a) * L * L;
      for (std::int64_t i = 0; i < L; ++i) {
        T* row = scores.data() + i * L;
        for (std::int64_t j = 0; j < L; ++j) {
          row[j] *= inv_sqrt;
          if (!key_mask[static_cast<std::size_t>(b * L + j)]) row[j] += static_cast<T>(kMaskBias);
        }
        softmax_row(row, p + i * L, L);
      }
      kernels::gemm_nn(L, d, L, p, vh.data(), oh.data(), false);
      for (std::int64_t t = 0; t < L; ++t) std::copy_n(oh.data() + t * d, d, out.data() + (b * L + t) * h + a * d);
    }
  }

  return q.tape()->record(std::move(out), {q, k, v}, [q, k, v, B, L, A, h, d, inv_sqrt, probs](Tape<T>& tape, const BasicTensor<T>& g) {
    auto* gq = tape.grad_sink(q);
    auto* gk = tape.grad_sink(k);
    auto* gv = tape.grad_sink(v);
    std::vector<T> qh(static_cast<std::size_t>(L * d)), kh(qh.size()), vh(qh.size()), goh(qh.size());
    std::vector<T> dqh(qh.size()), dkh(qh.size()), dvh(qh.size());
    std::vector<T> dp(static_cast<std::size_t>(L * L)), ds(dp.size());
    auto gather = [&](const BasicTensor<T>& src, std::int64_t b, std::int64_t a, std::vector<T>& dst) {
      for (std::int64_t t = 0; t < L; ++t) std::copy_n(src.data() + (b * L + t) * h + a * d, d, dst.data() + t * d);
    };
    auto scatter_add = [&](const std::vector<T>& src, std::int64_t b, std::int64_t a, BasicTensor<T>* dst) {
      for (std::int64_t t = 0; t < L; ++t) {
        T* row = dst->data() + (b * L + t) * h + a * d;
        for (std::int64_t j = 0; j < d; ++j) row[j] += src[static_cast<std::size_t>(t * d + j)];
      }
    };
    for (std::int64_t b = 0; b < B; ++b) {
      for (std::int64_t a = 0; a < A; ++a) {
        const T* p = probs->data() + (b * A + a) * L * L;
        gather(g, b, a, goh);
        if (gv) {
          kernels::gemm_tn(L, d, L, p, goh.data(), dvh.data(), false);
          scatter_add(dvh, b, a, gv);
        }
        if (!gq && !gk) continue;
        gather(v.value(), b, a, vh);
        kernels::gemm_nt(L, L, d, goh.data(), vh.data(), dp.data(), false);
        std::fill(ds.begin(), ds.end(), T{0});
        for (std::int64_t i = 0; i < L; ++i) softmax_row_backward(p + i * L, dp.data() + i * L, ds.data() + i * L, L);
        for (auto& x : ds) x *= inv_sqrt;
        if (gq) {
          gather(k.value(), b, a, kh);
          kernels::gemm_nn(L, d, L, ds.data(), kh.data(), dqh.data(), false);
          scatter_add(dqh, b, a, gq);
        }
        if (gk) {
          gather(q.value(), b, a, qh);
          kernels::gemm_tn(L, d, L, ds.data(), qh.data(), dkh.data(), false);
          scatter_add(dkh, b, a, gk);
        }
      }
    }
  });
}

#define MKDM_INSTANTIATE_OPS(T)                                                                                  \
  template Var<T> matmul(const Var<T>&, const Var<T>&);                                                          \
  template Var<T> linear(const Var<T>&, const Var<T>&, const Var<T>&);                                           \
  template Var<T> add(const Var<T>&, const Var<T>&);                                                             \
  template Var<T> add_bias(const Var<T>&, const Var<T>&);                                                        \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                                             \
  template Var<T> scale(const Var<T>&, T);                                                                       \
  template Var<T> sum(const Var<T>&);                                                                            \
  template Var<T> mean(const Var<T>&);                                                                           \
  template Var<T> sigmoid(const Var<T>&);                                                                        \
  template Var<T> gelu(const Var<T>&);                                                                           \
  template Var<T> softmax_rows(const Var<T>&);                                                                   \
  template Var<T> layer_norm(const Var<T>&, const Var<T>&, const Var<T>&, double);                               \
  template Var<T> dropout(const Var<T>&, double, Rng&, bool);                                                    \
  template Var<T> embedding(const Var<T>&, std::span<const std::int32_t>);                                       \
  template Var<T> select_rows(const Var<T>&, std::span<const std::int64_t>);                                     \
  template Var<T> pick(const Var<T>&, std::span<const std::int32_t>);                                            \
  template Var<T> neg_log(const Var<T>&, double);                                                                \
  template Var<T> squared_error(const Var<T>&, const BasicTensor<T>&);                                           \
  template Var<T> sigmoid_cross_entropy(const Var<T>&, const BasicTensor<T>&);                                   \
  template Var<T> attention(const Var<T>&, const Var<T>&, const Var<T>&, const AttentionLayout&,                 \
                            std::span<const std::uint8_t>);

MKDM_INSTANTIATE_OPS(float)
MKDM_INSTANTIATE_OPS(double)

}  // namespace mkdm::ops
