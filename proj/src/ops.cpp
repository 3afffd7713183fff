#include "cdistill/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "cdistill/error.hpp"

namespace cdistill::ops {

namespace {

using detail::Node;
using BackwardFn = std::function<void(Node&)>;

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw Error(ErrorCode::EmptyTensor, std::string(op) + ": undefined tensor");
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require_defined(a, op);
  require_defined(b, op);
  if (a.shape() != b.shape()) {
    throw Error(ErrorCode::ShapeMismatch,
                std::string(op) + ": " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  require_defined(t, op);
  if (t.rank() != rank) {
    throw Error(ErrorCode::ShapeMismatch, std::string(op) + ": expected rank " + std::to_string(rank) +
                                              ", got " + shape_string(t.shape()));
  }
}

// Wraps a computed buffer into a tensor, recording history when any input
// tracks gradients and recording is enabled.
Tensor make_result(const char* op, Shape shape, std::vector<double> data, std::initializer_list<Tensor> inputs,
                   BackwardFn backward) {
  for (double v : data) {
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFinite, std::string(op) + " produced a non-finite value");
  }
  Tensor out = Tensor::from(std::move(shape), std::move(data));
  bool track = false;
  if (grad_enabled()) {
    for (const auto& in : inputs) track = track || in.requires_grad();
  }
  if (track) {
    auto node = out.node();
    node->requires_grad = true;
    for (const auto& in : inputs) node->parents.push_back(in.node());
    node->backward_fn = std::move(backward);
  }
  return out;
}

// Gradient buffer of parent i, or nullptr if it does not track gradients.
std::vector<double>* parent_grad(Node& self, std::size_t i) {
  Node& p = *self.parents[i];
  return p.requires_grad ? &p.ensure_grad() : nullptr;
}

const std::vector<double>& parent_data(Node& self, std::size_t i) { return self.parents[i]->data; }

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return make_result("add", a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      if (auto* g = parent_grad(self, p)) {
        for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
      }
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  return make_result("sub", a.shape(), std::move(out), {a, b}, [](Node& self) {
    if (auto* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    }
    if (auto* g = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return make_result("mul", a.shape(), std::move(out), {a, b}, [](Node& self) {
    const auto& x = parent_data(self, 0);
    const auto& y = parent_data(self, 1);
    if (auto* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * y[i];
    }
    if (auto* g = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * x[i];
    }
  });
}

Tensor scale(const Tensor& x, double factor) {
  require_defined(x, "scale");
  std::vector<double> out(x.data().begin(), x.data().end());
  for (auto& v : out) v *= factor;
  return make_result("scale", x.shape(), std::move(out), {x}, [factor](Node& self) {
    if (auto* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * factor;
    }
  });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require_defined(x, "add_bias");
  require_rank(bias, 1, "add_bias");
  const std::size_t n = bias.numel();
  if (x.shape().back() != n) {
    throw Error(ErrorCode::ShapeMismatch, "add_bias: " + shape_string(x.shape()) + " + " + shape_string(bias.shape()));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  auto b = bias.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i % n];
  return make_result("add_bias", x.shape(), std::move(out), {x, bias}, [n](Node& self) {
    if (auto* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    }
    if (auto* g = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i % n] += self.grad[i];
    }
  });
}

namespace {

// c[m,n] += a[m,k] * b[k,n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      if (aip == 0.0) continue;
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

// c[m,n] += a[m,k] * b[n,k]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* bj = b + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
      c[i * n + j] += acc;
    }
  }
}

// c[k,n] += a[m,k]^T * b[m,n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    const double* bi = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ai[p];
      if (aip == 0.0) continue;
      double* cp = c + p * n;
      for (std::size_t j = 0; j < n; ++j) cp[j] += aip * bi[j];
    }
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw Error(ErrorCode::ShapeMismatch, "matmul: " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  gemm_nn(a.data().data(), b.data().data(), out.data(), m, k, n);
  return make_result("matmul", {m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    const auto& x = parent_data(self, 0);
    const auto& w = parent_data(self, 1);
    if (auto* g = parent_grad(self, 0)) gemm_nt(self.grad.data(), w.data(), g->data(), m, n, k);
    if (auto* g = parent_grad(self, 1)) gemm_tn(x.data(), self.grad.data(), g->data(), m, k, n);
  });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank(x, 2, "linear");
  require_rank(weight, 2, "linear");
  require_rank(bias, 1, "linear");
  const std::size_t m = x.dim(0), k = x.dim(1), n = weight.dim(1);
  if (weight.dim(0) != k || bias.numel() != n) {
    throw Error(ErrorCode::ShapeMismatch, "linear: " + shape_string(x.shape()) + " x " +
                                              shape_string(weight.shape()) + " + " + shape_string(bias.shape()));
  }
  std::vector<double> out(m * n);
  auto b = bias.data();
  for (std::size_t i = 0; i < m; ++i) std::copy(b.begin(), b.end(), out.begin() + i * n);
  gemm_nn(x.data().data(), weight.data().data(), out.data(), m, k, n);
  return make_result("linear", {m, n}, std::move(out), {x, weight, bias}, [m, k, n](Node& self) {
    const auto& xd = parent_data(self, 0);
    const auto& wd = parent_data(self, 1);
    if (auto* g = parent_grad(self, 0)) gemm_nt(self.grad.data(), wd.data(), g->data(), m, n, k);
    if (auto* g = parent_grad(self, 1)) gemm_tn(xd.data(), self.grad.data(), g->data(), m, k, n);
    if (auto* g = parent_grad(self, 2)) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) (*g)[j] += self.grad[i * n + j];
      }
    }
  });
}

Tensor bmm(const Tensor& a, const Tensor& b) {
  require_rank(a, 3, "bmm");
  require_rank(b, 3, "bmm");
  const std::size_t batch = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
  if (b.dim(0) != batch || b.dim(1) != k) {
    throw Error(ErrorCode::ShapeMismatch, "bmm: " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  }
  std::vector<double> out(batch * m * n, 0.0);
  for (std::size_t s = 0; s < batch; ++s) {
    gemm_nn(a.data().data() + s * m * k, b.data().data() + s * k * n, out.data() + s * m * n, m, k, n);
  }
  return make_result("bmm", {batch, m, n}, std::move(out), {a, b}, [batch, m, k, n](Node& self) {
    const auto& x = parent_data(self, 0);
    const auto& y = parent_data(self, 1);
    auto* ga = parent_grad(self, 0);
    auto* gb = parent_grad(self, 1);
    for (std::size_t s = 0; s < batch; ++s) {
      const double* gs = self.grad.data() + s * m * n;
      if (ga) gemm_nt(gs, y.data() + s * k * n, ga->data() + s * m * k, m, n, k);
      if (gb) gemm_tn(x.data() + s * m * k, gs, gb->data() + s * k * n, m, k, n);
    }
  });
}

Tensor bmm_nt(const Tensor& a, const Tensor& b) {
  require_rank(a, 3, "bmm_nt");
  require_rank(b, 3, "bmm_nt");
  const std::size_t batch = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(1);
  if (b.dim(0) != batch || b.dim(2) != k) {
    throw Error(ErrorCode::ShapeMismatch, "bmm_nt: " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  }
  std::vector<double> out(batch * m * n, 0.0);
  for (std::size_t s = 0; s < batch; ++s) {
    gemm_nt(a.data().data() + s * m * k, b.data().data() + s * n * k, out.data() + s * m * n, m, k, n);
  }
  return make_result("bmm_nt", {batch, m, n}, std::move(out), {a, b}, [batch, m, k, n](Node& self) {
    const auto& x = parent_data(self, 0);
    const auto& y = parent_data(self, 1);
    auto* ga = parent_grad(self, 0);
    auto* gb = parent_grad(self, 1);
    for (std::size_t s = 0; s < batch; ++s) {
      const double* gs = self.grad.data() + s * m * n;
      // dA = dC * B ; dB = dC^T * A
      if (ga) gemm_nn(gs, y.data() + s * n * k, ga->data() + s * m * k, m, n, k);
      if (gb) gemm_tn(gs, x.data() + s * m * k, gb->data() + s * n * k, m, n, k);
    }
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  require_defined(x, "reshape");
  if (numel_of(shape) != x.numel()) {
    throw Error(ErrorCode::ShapeMismatch, "reshape: " + shape_string(x.shape()) + " -> " + shape_string(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_result("reshape", std::move(shape), std::move(out), {x}, [](Node& self) {
    if (auto* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    }
  });
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes) {
  require_defined(x, "permute");
  const std::size_t r = x.rank();
  std::vector<bool> seen(r, false);
  bool valid = axes.size() == r;
  for (auto a : axes) {
    if (!valid || a >= r || seen[a]) {
      valid = false;
      break;
    }
    seen[a] = true;
  }
  if (!valid) throw Error(ErrorCode::ShapeMismatch, "permute: invalid axes for " + shape_string(x.shape()));

  const Shape& in_shape = x.shape();
  std::vector<std::size_t> in_strides(r, 1);
  for (std::size_t i = r; i-- > 1;) in_strides[i - 1] = in_strides[i] * in_shape[i];
  Shape out_shape(r);
  for (std::size_t i = 0; i < r; ++i) out_shape[i] = in_shape[axes[i]];

  // source offset for every output element
  const std::size_t n = x.numel();
  std::vector<std::size_t> source(n);
  std::vector<std::size_t> idx(r, 0);
  for (std::size_t o = 0; o < n; ++o) {
    std::size_t off = 0;
    for (std::size_t i = 0; i < r; ++i) off += idx[i] * in_strides[axes[i]];
    source[o] = off;
    for (std::size_t i = r; i-- > 0;) {
      if (++idx[i] < out_shape[i]) break;
      idx[i] = 0;
    }
  }
  std::vector<double> out(n);
  auto xd = x.data();
  for (std::size_t o = 0; o < n; ++o) out[o] = xd[source[o]];
  return make_result("permute", std::move(out_shape), std::move(out), {x},
                     [source = std::move(source)](Node& self) {
                       if (auto* g = parent_grad(self, 0)) {
                         for (std::size_t o = 0; o < source.size(); ++o) (*g)[source[o]] += self.grad[o];
                       }
                     });
}

Tensor gelu(const Tensor& x) {
  require_defined(x, "gelu");
  std::vector<double> out(x.numel());
  auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 0.5 * xd[i] * (1.0 + std::erf(xd[i] / std::numbers::sqrt2));
  return make_result("gelu", x.shape(), std::move(out), {x}, [](Node& self) {
    if (auto* g = parent_grad(self, 0)) {
      const auto& xd = parent_data(self, 0);
      const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
      for (std::size_t i = 0; i < g->size(); ++i) {
        const double v = xd[i];
        const double cdf = 0.5 * (1.0 + std::erf(v / std::numbers::sqrt2));
        const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
        (*g)[i] += self.grad[i] * (cdf + v * pdf);
      }
    }
  });
}

Tensor tanh(const Tensor& x) {
  require_defined(x, "tanh");
  std::vector<double> out(x.numel());
  auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(xd[i]);
  return make_result("tanh", x.shape(), std::move(out), {x}, [](Node& self) {
    if (auto* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * (1.0 - self.data[i] * self.data[i]);
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  require_defined(x, "layer_norm");
  require_rank(gain, 1, "layer_norm");
  require_rank(bias, 1, "layer_norm");
  const std::size_t n = x.shape().back();
  if (gain.numel() != n || bias.numel() != n) {
    throw Error(ErrorCode::ShapeMismatch, "layer_norm: " + shape_string(x.shape()) + " with gain " +
                                              shape_string(gain.shape()));
  }
  const std::size_t rows = x.numel() / n;
  std::vector<double> out(x.numel());
  std::vector<double> normalized(x.numel());
  std::vector<double> rstd(rows);
  auto xd = x.data();
  auto gd = gain.data();
  auto bd = bias.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xd.data() + r * n;
    double mu = 0.0;
    for (std::size_t i = 0; i < n; ++i) mu += row[i];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += (row[i] - mu) * (row[i] - mu);
    var /= static_cast<double>(n);
    rstd[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t i = 0; i < n; ++i) {
      const double xh = (row[i] - mu) * rstd[r];
      normalized[r * n + i] = xh;
      out[r * n + i] = xh * gd[i] + bd[i];
    }
  }
  return make_result("layer_norm", x.shape(), std::move(out), {x, gain, bias},
                     [n, rows, normalized = std::move(normalized), rstd = std::move(rstd)](Node& self) {
                       const auto& gd = parent_data(self, 1);
                       if (auto* g = parent_grad(self, 0)) {
                         std::vector<double> dxh(n);
                         for (std::size_t r = 0; r < rows; ++r) {
                           double mean_d = 0.0, mean_dx = 0.0;
                           for (std::size_t i = 0; i < n; ++i) {
                             dxh[i] = self.grad[r * n + i] * gd[i];
                             mean_d += dxh[i];
                             mean_dx += dxh[i] * normalized[r * n + i];
                           }
                           mean_d /= static_cast<double>(n);
                           mean_dx /= static_cast<double>(n);
                           for (std::size_t i = 0; i < n; ++i) {
                             (*g)[r * n + i] += rstd[r] * (dxh[i] - mean_d - normalized[r * n + i] * mean_dx);
                           }
                         }
                       }
                       if (auto* g = parent_grad(self, 1)) {
                         for (std::size_t e = 0; e < self.grad.size(); ++e) (*g)[e % n] += self.grad[e] * normalized[e];
                       }
                       if (auto* g = parent_grad(self, 2)) {
                         for (std::size_t e = 0; e < self.grad.size(); ++e) (*g)[e % n] += self.grad[e];
                       }
                     });
}

Tensor softmax_rows(const Tensor& x, std::span<const std::uint8_t> mask) {
  require_defined(x, "softmax_rows");
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.numel() / n;
  if (!mask.empty() && mask.size() != n && mask.size() != x.numel()) {
    throw Error(ErrorCode::ShapeMismatch, "softmax_rows: mask of " + std::to_string(mask.size()) +
                                              " entries for " + shape_string(x.shape()));
  }
  const bool per_element = mask.size() == x.numel() && mask.size() != n;
  auto keep = [&](std::size_t r, std::size_t i) {
    if (mask.empty()) return true;
    return (per_element ? mask[r * n + i] : mask[i]) != 0;
  };

  std::vector<double> out(x.numel(), 0.0);
  auto xd = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      if (keep(r, i)) mx = std::max(mx, xd[r * n + i]);
    }
    if (mx == -std::numeric_limits<double>::infinity()) {
      throw Error(ErrorCode::AllMasked, "softmax_rows: row " + std::to_string(r) + " has no unmasked entry");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (keep(r, i)) {
        out[r * n + i] = std::exp(xd[r * n + i] - mx);
        total += out[r * n + i];
      }
    }
    for (std::size_t i = 0; i < n; ++i) out[r * n + i] /= total;
  }
  return make_result("softmax_rows", x.shape(), std::move(out), {x}, [n, rows](Node& self) {
    if (auto* g = parent_grad(self, 0)) {
      for (std::size_t r = 0; r < rows; ++r) {
        const double* y = self.data.data() + r * n;
        const double* dy = self.grad.data() + r * n;
        double dot = 0.0;
        for (std::size_t i = 0; i < n; ++i) dot += y[i] * dy[i];
        for (std::size_t i = 0; i < n; ++i) (*g)[r * n + i] += y[i] * (dy[i] - dot);
      }
    }
  });
}

Tensor dropout(const Tensor& x, double rate, std::mt19937_64& rng) {
  require_defined(x, "dropout");
  if (rate <= 0.0) return x;
  if (rate >= 1.0) throw Error(ErrorCode::InvalidConfig, "dropout rate must be in [0,1)");
  const double keep_scale = 1.0 / (1.0 - rate);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::vector<double> factor(x.numel());
  for (auto& f : factor) f = uniform(rng) < rate ? 0.0 : keep_scale;
  std::vector<double> out(x.numel());
  auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[i] * factor[i];
  return make_result("dropout", x.shape(), std::move(out), {x}, [factor = std::move(factor)](Node& self) {
    if (auto* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * factor[i];
    }
  });
}

Tensor embedding(const Tensor& table, std::span<const std::size_t> ids) {
  require_rank(table, 2, "embedding");
  const std::size_t vocab = table.dim(0), d = table.dim(1);
  std::vector<double> out(ids.size() * d);
  auto td = table.data();
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] >= vocab) {
      throw Error(ErrorCode::TokenOutOfRange, "id " + std::to_string(ids[r]) + " >= " + std::to_string(vocab));
    }
    std::copy_n(td.begin() + static_cast<std::ptrdiff_t>(ids[r] * d), d, out.begin() + static_cast<std::ptrdiff_t>(r * d));
  }
  std::vector<std::size_t> rows(ids.begin(), ids.end());
  return make_result("embedding", {ids.size(), d}, std::move(out), {table}, [d, rows = std::move(rows)](Node& self) {
    if (auto* g = parent_grad(self, 0)) {
      for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t i = 0; i < d; ++i) (*g)[rows[r] * d + i] += self.grad[r * d + i];
      }
    }
  });
}

Tensor select_position(const Tensor& x, std::size_t position) {
  require_rank(x, 3, "select_position");
  const std::size_t batch = x.dim(0), len = x.dim(1), d = x.dim(2);
  if (position >= len) throw Error(ErrorCode::ShapeMismatch, "select_position: position out of range");
  std::vector<double> out(batch * d);
  auto xd = x.data();
  for (std::size_t b = 0; b < batch; ++b) {
    std::copy_n(xd.begin() + static_cast<std::ptrdiff_t>((b * len + position) * d), d,
                out.begin() + static_cast<std::ptrdiff_t>(b * d));
  }
  return make_result("select_position", {batch, d}, std::move(out), {x}, [batch, len, d, position](Node& self) {
    if (auto* g = parent_grad(self, 0)) {
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t i = 0; i < d; ++i) (*g)[(b * len + position) * d + i] += self.grad[b * d + i];
      }
    }
  });
}

Tensor sum(const Tensor& x) {
  require_defined(x, "sum");
  double total = 0.0;
  for (double v : x.data()) total += v;
  return make_result("sum", {1}, {total}, {x}, [](Node& self) {
    if (auto* g = parent_grad(self, 0)) {
      for (auto& v : *g) v += self.grad[0];
    }
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor mse(const Tensor& x, const Tensor& y) {
  require_same_shape(x, y, "mse");
  const double inv = 1.0 / static_cast<double>(x.numel());
  double total = 0.0;
  auto xd = x.data(), yd = y.data();
  for (std::size_t i = 0; i < xd.size(); ++i) total += (xd[i] - yd[i]) * (xd[i] - yd[i]);
  return make_result("mse", {1}, {total * inv}, {x, y}, [inv](Node& self) {
    const auto& xd = parent_data(self, 0);
    const auto& yd = parent_data(self, 1);
    const double s = 2.0 * inv * self.grad[0];
    if (auto* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += s * (xd[i] - yd[i]);
    }
    if (auto* g = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= s * (xd[i] - yd[i]);
    }
  });
}

Tensor weighted_squared_error(const Tensor& x, const Tensor& y, std::span<const double> weights) {
  require_same_shape(x, y, "weighted_squared_error");
  if (weights.size() != x.numel()) {
    throw Error(ErrorCode::ShapeMismatch, "weighted_squared_error: " + std::to_string(weights.size()) +
                                              " weights for " + shape_string(x.shape()));
  }
  double total = 0.0;
  auto xd = x.data(), yd = y.data();
  for (std::size_t i = 0; i < xd.size(); ++i) total += weights[i] * (xd[i] - yd[i]) * (xd[i] - yd[i]);
  std::vector<double> w(weights.begin(), weights.end());
  return make_result("weighted_squared_error", {1}, {total}, {x, y}, [w = std::move(w)](Node& self) {
    const auto& xd = parent_data(self, 0);
    const auto& yd = parent_data(self, 1);
    const double s = 2.0 * self.grad[0];
    if (auto* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += s * w[i] * (xd[i] - yd[i]);
    }
    if (auto* g = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= s * w[i] * (xd[i] - yd[i]);
    }
  });
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> labels) {
  require_rank(logits, 2, "cross_entropy");
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  if (classes < 2) throw Error(ErrorCode::ShapeMismatch, "cross_entropy: need at least 2 classes");
  if (labels.size() != batch) {
    throw Error(ErrorCode::ShapeMismatch, "cross_entropy: " + std::to_string(labels.size()) + " labels for batch " +
                                              std::to_string(batch));
  }
  std::vector<double> probs(batch * classes);
  double total = 0.0;
  auto ld = logits.data();
  for (std::size_t b = 0; b < batch; ++b) {
    if (labels[b] >= classes) {
      throw Error(ErrorCode::LabelOutOfRange, "label " + std::to_string(labels[b]) + " with " +
                                                  std::to_string(classes) + " classes");
    }
    const double* row = ld.data() + b * classes;
    const double mx = *std::max_element(row, row + classes);
    double z = 0.0;
    for (std::size_t c = 0; c < classes; ++c) z += std::exp(row[c] - mx);
    const double log_z = mx + std::log(z);
    for (std::size_t c = 0; c < classes; ++c) probs[b * classes + c] = std::exp(row[c] - log_z);
    total += log_z - row[labels[b]];
  }
  const double inv = 1.0 / static_cast<double>(batch);
  std::vector<std::size_t> lab(labels.begin(), labels.end());
  return make_result("cross_entropy", {1}, {total * inv}, {logits},
                     [inv, classes, probs = std::move(probs), lab = std::move(lab)](Node& self) {
                       if (auto* g = parent_grad(self, 0)) {
                         const double s = inv * self.grad[0];
                         for (std::size_t b = 0; b < lab.size(); ++b) {
                           for (std::size_t c = 0; c < classes; ++c) {
                             const double onehot = c == lab[b] ? 1.0 : 0.0;
                             (*g)[b * classes + c] += s * (probs[b * classes + c] - onehot);
                           }
                         }
                       }
                     });
}

}  // namespace cdistill::ops
