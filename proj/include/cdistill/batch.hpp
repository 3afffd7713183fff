#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

namespace cdistill {

// Row-major (batch, seq_len) token ids with a matching attention mask
// (1 = real token, 0 = padding) and optional class labels.
struct Batch {
  std::size_t batch_size = 0;
  std::size_t seq_len = 0;
  std::vector<std::size_t> token_ids;
  std::vector<std::uint8_t> attention_mask;
  std::optional<std::vector<std::size_t>> labels;

  // Copies rows [begin, end) into a new batch.
  Batch slice(std::size_t begin, std::size_t end) const;
  // Rows in the given order.
  Batch gather(const std::vector<std::size_t>& rows) const;
  // Concatenates rows of batches with equal seq_len.
  static Batch concat(const std::vector<Batch>& parts);
};

}  // namespace cdistill
