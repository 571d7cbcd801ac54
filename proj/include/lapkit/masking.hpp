#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lapkit/vocab.hpp"

namespace lapkit {

struct PretrainingInstance {
  std::vector<int> input_ids;        // [CLS] pieces [SEP], <= max_seq
  std::vector<int> attention_mask;   // 1 per real position
  std::vector<int> masked_positions; // strictly increasing, <= max_pred
  std::vector<int> masked_labels;    // original ids at masked positions
};

struct MaskingConfig {
  int max_seq = 128;
  int max_pred = 20;
  double mask_prob = 0.15;
  int dup_factor = 5;
};

// Number of positions to mask for a given content length:
// min(max_pred, max(1, round-half-up(mask_prob * content_len))).
int masked_position_count(int content_len, const MaskingConfig& config);

// Frames each sentence as [CLS] pieces [SEP] (truncated), duplicates it
// dup_factor times and masks each duplicate independently with the
// 80/10/10 mask/random/keep rule. Sentences with no content pieces are
// skipped (reported on stderr).
std::vector<PretrainingInstance> build_instances(
    const std::vector<std::vector<int>>& sentences, const Vocabulary& vocab,
    const MaskingConfig& config, std::uint64_t seed);

// JSON-lines shard with a versioned header line.
void write_shard(const std::string& path,
                 const std::vector<PretrainingInstance>& instances,
                 std::uint64_t vocab_fingerprint);
std::vector<PretrainingInstance> read_shard(const std::string& path,
                                            std::uint64_t* vocab_fingerprint = nullptr);

}  // namespace lapkit
