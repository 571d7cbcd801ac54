#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lapkit/autodiff.hpp"
#include "lapkit/masking.hpp"
#include "lapkit/rng.hpp"

namespace lapkit {

using ad::Mat;
using ad::Parameter;
using ad::ParameterStore;
using ad::Tape;
using ad::Var;

struct EncoderConfig {
  int n_layers = 4;
  int hidden = 128;
  int n_heads = 4;
  int ff_dim = 512;
  int vocab_size = 0;
  int max_positions = 128;
  double dropout = 0.1;
  bool tie_mlm_head = true;
  // Test switch: bypassing layer norm makes zero-parameter forwards exactly
  // zero and hand-checkable.
  bool use_layer_norm = true;
};

// BERT-style post-LN transformer encoder with a tied MLM head.
struct EncoderModel {
  EncoderConfig config;
  ParameterStore params;
  // Embedding rows introduced by vocabulary augmentation (slot ids).
  std::vector<int> new_slot_ids;

  Parameter& piece_embeddings() { return params.at("emb.piece"); }
  const Parameter& piece_embeddings() const { return params.at("emb.piece"); }
};

EncoderModel create_encoder(const EncoderConfig& config, std::uint64_t seed);

struct EncoderActivations {
  // activations[0] = embedding output, activations[j] = output of layer j;
  // each is T x hidden for a T-position instance.
  std::vector<Var> layers;
  // |masked_positions| x V, present when the instance has masked positions.
  Var mlm_logits;
};

// Runs the encoder over one unpadded instance. When `frozen` is set the
// parameters enter the graph as constants and receive no gradient.
EncoderActivations encoder_forward(Tape& tape, const PretrainingInstance& inst,
                                   EncoderModel& model, bool training,
                                   Rng& rng, bool frozen = false);

// Hidden states only (no MLM head) for arbitrary piece-id sequences.
std::vector<Var> encode_pieces(Tape& tape, const std::vector<int>& piece_ids,
                               EncoderModel& model, bool training, Rng& rng,
                               bool frozen = false);

// Mean cross-entropy over a batch of per-instance masked logits.
Var mlm_loss(Tape& tape, const std::vector<Var>& logits,
             const std::vector<std::vector<int>>& labels);

}  // namespace lapkit
