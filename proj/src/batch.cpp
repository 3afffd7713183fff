#include "cdistill/batch.hpp"

#include "cdistill/error.hpp"

namespace cdistill {

Batch Batch::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > batch_size) throw Error(ErrorCode::ShapeMismatch, "Batch::slice out of range");
  std::vector<std::size_t> rows;
  for (std::size_t r = begin; r < end; ++r) rows.push_back(r);
  return gather(rows);
}

Batch Batch::gather(const std::vector<std::size_t>& rows) const {
  Batch out;
  out.batch_size = rows.size();
  out.seq_len = seq_len;
  out.token_ids.reserve(rows.size() * seq_len);
  out.attention_mask.reserve(rows.size() * seq_len);
  if (labels) out.labels.emplace();
  for (auto r : rows) {
    if (r >= batch_size) throw Error(ErrorCode::ShapeMismatch, "Batch::gather row out of range");
    for (std::size_t t = 0; t < seq_len; ++t) {
      out.token_ids.push_back(token_ids[r * seq_len + t]);
      out.attention_mask.push_back(attention_mask[r * seq_len + t]);
    }
    if (labels) out.labels->push_back((*labels)[r]);
  }
  return out;
}

Batch Batch::concat(const std::vector<Batch>& parts) {
  Batch out;
  if (parts.empty()) return out;
  out.seq_len = parts.front().seq_len;
  const bool labelled = parts.front().labels.has_value();
  if (labelled) out.labels.emplace();
  for (const auto& p : parts) {
    if (p.seq_len != out.seq_len || p.labels.has_value() != labelled) {
      throw Error(ErrorCode::ShapeMismatch, "Batch::concat of incompatible batches");
    }
    out.batch_size += p.batch_size;
    out.token_ids.insert(out.token_ids.end(), p.token_ids.begin(), p.token_ids.end());
    out.attention_mask.insert(out.attention_mask.end(), p.attention_mask.begin(), p.attention_mask.end());
    if (labelled) out.labels->insert(out.labels->end(), p.labels->begin(), p.labels->end());
  }
  return out;
}

}  // namespace cdistill
