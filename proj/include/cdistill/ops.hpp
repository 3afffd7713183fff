#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "cdistill/tensor.hpp"

namespace cdistill::ops {

// Elementwise, identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);

// x (..., n) + bias (n)
Tensor add_bias(const Tensor& x, const Tensor& bias);

// (m,k) x (k,n)
Tensor matmul(const Tensor& a, const Tensor& b);
// x (rows, in) * weight (in, out) + bias (out)
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);
// Batched: (B,m,k) x (B,k,n)
Tensor bmm(const Tensor& a, const Tensor& b);
// Batched against transposed rhs: (B,m,k) x (B,n,k)^T -> (B,m,n)
Tensor bmm_nt(const Tensor& a, const Tensor& b);

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes);

Tensor gelu(const Tensor& x);
Tensor tanh(const Tensor& x);

// Normalizes over the last axis, then applies gain and bias (both (n)).
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-12);

// Softmax over the last axis. `mask` is empty, one flag per last-axis entry
// (broadcast to every row), or one flag per element. Masked entries are 0.
Tensor softmax_rows(const Tensor& x, std::span<const std::uint8_t> mask = {});

// Inverted dropout; identity when rate == 0.
Tensor dropout(const Tensor& x, double rate, std::mt19937_64& rng);

// Gathers rows of table (vocab, d) -> (ids.size(), d).
Tensor embedding(const Tensor& table, std::span<const std::size_t> ids);

// x (B,T,d) -> (B,d) at sequence position `position`.
Tensor select_position(const Tensor& x, std::size_t position);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// (1/numel) * sum (x - y)^2
Tensor mse(const Tensor& x, const Tensor& y);
// sum_i weights[i] * (x_i - y_i)^2; weights are constants.
Tensor weighted_squared_error(const Tensor& x, const Tensor& y, std::span<const double> weights);

// Mean over rows of -log softmax(logits)[label].
Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> labels);

}  // namespace cdistill::ops
