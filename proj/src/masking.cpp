#include "lapkit/masking.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <stdexcept>

#include "json.hpp"
#include "lapkit/rng.hpp"

namespace lapkit {

int masked_position_count(int content_len, const MaskingConfig& config) {
  const int rounded =
      static_cast<int>(std::floor(config.mask_prob * content_len + 0.5));
  return std::min(config.max_pred, std::max(1, rounded));
}

std::vector<PretrainingInstance> build_instances(
    const std::vector<std::vector<int>>& sentences, const Vocabulary& vocab,
    const MaskingConfig& config, std::uint64_t seed) {
  if (config.max_seq < 3)
    throw std::invalid_argument("max_seq leaves no room for content");
  std::vector<PretrainingInstance> out;
  out.reserve(sentences.size() * config.dup_factor);
  std::size_t skipped = 0;
  for (std::size_t si = 0; si < sentences.size(); ++si) {
    const std::vector<int>& pieces = sentences[si];
    if (pieces.empty()) {
      ++skipped;
      continue;
    }
    const int content_len = std::min(static_cast<int>(pieces.size()),
                                     config.max_seq - 2);
    std::vector<int> base;
    base.reserve(content_len + 2);
    base.push_back(vocab.cls_id());
    base.insert(base.end(), pieces.begin(), pieces.begin() + content_len);
    base.push_back(vocab.sep_id());

    const int n_mask = masked_position_count(content_len, config);
    for (int dup = 0; dup < config.dup_factor; ++dup) {
      Rng rng(derive_seed(seed, si, static_cast<std::uint64_t>(dup)));
      PretrainingInstance inst;
      inst.input_ids = base;
      inst.attention_mask.assign(base.size(), 1);

      // Content positions are 1..content_len; partial Fisher-Yates draw.
      std::vector<int> positions(content_len);
      for (int i = 0; i < content_len; ++i) positions[i] = i + 1;
      for (int i = 0; i < n_mask; ++i) {
        const int j =
            i + static_cast<int>(rng.uniform_int(content_len - i));
        std::swap(positions[i], positions[j]);
      }
      positions.resize(n_mask);
      std::sort(positions.begin(), positions.end());

      for (int pos : positions) {
        inst.masked_positions.push_back(pos);
        inst.masked_labels.push_back(inst.input_ids[pos]);
        const double u = rng.uniform();
        if (u < 0.8)
          inst.input_ids[pos] = vocab.mask_id();
        else if (u < 0.9)
          inst.input_ids[pos] = static_cast<int>(rng.uniform_int(vocab.size()));
        // else: keep the original piece
      }
      out.push_back(std::move(inst));
    }
  }
  if (skipped > 0)
    std::cerr << "build_instances: skipped " << skipped
              << " empty sentence(s)\n";
  return out;
}

void write_shard(const std::string& path,
                 const std::vector<PretrainingInstance>& instances,
                 std::uint64_t vocab_fingerprint) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write shard file: " + path);
  nlohmann::json header = {{"format", "lapkit-pretrain-shard"},
                           {"version", 1},
                           {"count", instances.size()},
                           {"vocab_fingerprint", vocab_fingerprint}};
  out << header.dump() << '\n';
  for (const PretrainingInstance& inst : instances) {
    nlohmann::json rec = {{"input_ids", inst.input_ids},
                          {"attention_mask", inst.attention_mask},
                          {"masked_positions", inst.masked_positions},
                          {"masked_labels", inst.masked_labels}};
    out << rec.dump() << '\n';
  }
}

std::vector<PretrainingInstance> read_shard(const std::string& path,
                                            std::uint64_t* vocab_fingerprint) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open shard file: " + path);
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("shard file is empty: " + path);
  auto header = nlohmann::json::parse(line);
  if (header.value("format", "") != "lapkit-pretrain-shard")
    throw std::runtime_error("not a pretraining shard file: " + path);
  if (header.value("version", 0) != 1)
    throw std::runtime_error("unsupported shard version in " + path);
  if (vocab_fingerprint)
    *vocab_fingerprint = header.value("vocab_fingerprint", std::uint64_t{0});
  std::vector<PretrainingInstance> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto rec = nlohmann::json::parse(line);
    PretrainingInstance inst;
    inst.input_ids = rec.at("input_ids").get<std::vector<int>>();
    inst.attention_mask = rec.at("attention_mask").get<std::vector<int>>();
    inst.masked_positions = rec.at("masked_positions").get<std::vector<int>>();
    inst.masked_labels = rec.at("masked_labels").get<std::vector<int>>();
    out.push_back(std::move(inst));
  }
  return out;
}

}  // namespace lapkit
