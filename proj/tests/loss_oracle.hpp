#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "cdistill/model.hpp"
#include "numeric_support.hpp"

namespace cdistill::testing {

struct RandomTraces {
  ForwardTrace teacher, student;
};

inline RandomTraces random_traces(std::size_t n, bool padded, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> pick(1, 4);
  const std::size_t B = pick(rng), T = pick(rng) + 1, H = pick(rng), d = pick(rng);
  std::vector<std::uint8_t> mask(B * T, 1);
  if (padded) {
    std::bernoulli_distribution drop(0.4);
    for (std::size_t b = 0; b < B; ++b) {
      std::size_t kept = 0;
      for (std::size_t t = 0; t < T; ++t) {
        mask[b * T + t] = drop(rng) ? 0 : 1;
        kept += mask[b * T + t];
      }
      if (kept == 0) mask[b * T + pick(rng) % T] = 1;
    }
  }
  auto make = [&](std::size_t layers) {
    ForwardTrace t;
    t.batch_size = B;
    t.seq_len = T;
    t.num_heads = H;
    t.attention_mask = mask;
    for (std::size_t k = 0; k <= layers; ++k) t.hidden.push_back(testing::random_tensor({B, T, d}, rng));
    for (std::size_t j = 0; j < layers; ++j) t.attentions.push_back(testing::random_tensor({B, H, T, T}, rng));
    return t;
  };
  return {make(n + 1), make(n)};
}

// The per-layer losses and their combination written out index by index:
// every sequence contributes the mean over its real positions, and the batch
// value is the mean over sequences.
inline double loop_oracle(const ForwardTrace& te, const ForwardTrace& st) {
  const std::size_t n = st.attentions.size(), B = st.batch_size, T = st.seq_len, H = st.num_heads;
  const std::size_t d = st.hidden[0].dim(2);
  double batch_total = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    std::vector<std::size_t> real;
    for (std::size_t t = 0; t < T; ++t) {
      if (st.attention_mask[b * T + t]) real.push_back(t);
    }
    const double nb = static_cast<double>(real.size());
    double seq = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      double heads = 0.0;
      for (std::size_t l = 0; l < H; ++l) {
        double sq = 0.0;
        for (std::size_t q : real) {
          for (std::size_t k : real) {
            const std::size_t i = ((b * H + l) * T + q) * T + k;
            const double target = 0.5 * (te.attentions[j].data()[i] + te.attentions[j + 1].data()[i]);
            const double diff = target - st.attentions[j].data()[i];
            sq += diff * diff;
          }
        }
        heads += sq / (nb * nb);
      }
      seq += heads / static_cast<double>(H);
    }
    for (std::size_t k = 0; k <= n; ++k) {
      double sq = 0.0;
      for (std::size_t t : real) {
        for (std::size_t e = 0; e < d; ++e) {
          const std::size_t i = (b * T + t) * d + e;
          const double target = 0.5 * (te.hidden[k].data()[i] + te.hidden[k + 1].data()[i]);
          const double diff = target - st.hidden[k].data()[i];
          sq += diff * diff;
        }
      }
      seq += sq / (nb * static_cast<double>(d));
    }
    batch_total += seq / static_cast<double>(n);
  }
  return batch_total / static_cast<double>(B);
}

}  // namespace cdistill::testing
