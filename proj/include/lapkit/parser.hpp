#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lapkit/conllu.hpp"
#include "lapkit/pretrain.hpp"
#include "lapkit/representation.hpp"
#include "lapkit/run_config.hpp"
#include "lapkit/tree_decode.hpp"

namespace lapkit {

struct ParserConfig {
  int arc_dim = 100;
  int label_dim = 100;
  int bilstm_layers = 3;
  int bilstm_hidden = 400;  // per direction unless bilstm_hidden_is_total
  bool bilstm_hidden_is_total = false;
  double input_dropout = 0.3;
  double parser_dropout = 0.3;
  double mix_layer_dropout = 0.1;
  double parser_lr = 1e-3;
  double encoder_lr = 5e-5;
  int warmup_epochs = 1;
  int max_epochs = 200;
  int patience = 20;
  int batch_size = 8;
  double unfreeze_eta = 0.9;  // discriminative finetuning decay per layer
  RepresentationMode mode = RepresentationMode::kFrozen;
};

// Biaffine parser over encoder representations: scalar mix, then (frozen
// mode only) a BiLSTM front-end, then arc/label projections and biaffine
// scorers. Owns its encoder and vocabulary so checkpoints are
// self-contained; ft mode adapts the encoder in place.
struct ParserModel {
  ParserConfig config;
  EncoderModel encoder;
  Vocabulary vocab;
  std::vector<std::string> relations;  // label id -> relation name
  ParameterStore params;
  ScalarMix mix;

  int context_dim() const;          // width fed to the projections
  int bilstm_dir_hidden() const;    // per-direction hidden size
  void rebind_mix();                // refresh mix pointers after store swaps
};

ParserModel create_parser(const EncoderModel& encoder, const Vocabulary& vocab,
                          std::vector<std::string> relations,
                          const ParserConfig& config, std::uint64_t seed);

// 3-layer bidirectional LSTM over word vectors (n x in) -> n x 2H with
// input dropout on each layer's input during training.
Var bilstm_encode(Tape& tape, ParserModel& model, Var word_vectors,
                  bool training, Rng& rng);

// S(i, j) = dep_i^T U head_j + u . head_j for dependent rows and head rows
// (row 0 of h_arc_head is the root).
Var biaffine_arc_scores(Tape& tape, Var h_arc_dep, Var h_arc_head, Var U,
                        Var u);

// Per-dependent logits over relations, scored at the supplied heads:
// logits_r = dep^T U_r head + v_r . [dep; head] + b_r.
Var biaffine_label_scores(Tape& tape, Var h_lab_dep, Var h_lab_head,
                          const std::vector<int>& heads,
                          const std::vector<Var>& label_U,
                          const std::vector<Var>& label_v, Var label_b);

// All score ingredients for one sentence's word vectors.
struct ParserScores {
  Var arc_scores;  // n x (n+1)
  Var lab_dep;     // n x label_dim
  Var lab_head;    // (n+1) x label_dim, row 0 = root
};
ParserScores score_words(Tape& tape, ParserModel& model, Var word_vectors,
                         bool training, Rng& rng);

Var label_logits_at(Tape& tape, ParserModel& model, const ParserScores& scores,
                    const std::vector<int>& heads);

// Mean head cross-entropy plus mean label cross-entropy at the gold arcs.
Var parser_loss(Tape& tape, ParserModel& model, const ParserScores& scores,
                const DependencyTree& gold);

// Inverse-square-root decay with linear warmup:
// lr(t) = peak * min(t / warmup, sqrt(warmup / t)), t >= 1.
double parser_lr_schedule(long step, long total_steps, long warmup_steps,
                          double peak);

// Gradual unfreezing (ft mode): epoch k trains the top min(k, L) encoder
// layers; embeddings unfreeze after every layer. Discriminative
// finetuning multiplies the encoder rate by eta^(distance from top).
struct UnfreezingPlan {
  std::vector<int> layers;            // trainable encoder layers, 0-based
  std::vector<double> multipliers;    // aligned with `layers`
  bool embeddings = false;
  double embedding_multiplier = 1.0;
};
UnfreezingPlan unfreezing_plan(int epoch, int n_encoder_layers,
                               RepresentationMode mode, double eta = 0.9);

// Optimizer groups for one training epoch: every parser tensor at
// parser_lr plus, in ft mode, the currently unfrozen encoder slices at
// discriminatively scaled encoder_lr.
std::vector<ParamGroup> parser_epoch_groups(ParserModel& model, int epoch);

DependencyTree predict_tree(ParserModel& model,
                            const std::vector<std::string>& tokens);

struct ParserTrainResult {
  std::vector<double> valid_las_by_epoch;
  int best_epoch = 0;      // 1-based; 0 if training never evaluated
  double best_las = 0.0;
  int sentences_skipped = 0;  // longer than the encoder's positions
};

// Trains with Adam (betas/clip from `run`), early stopping on validation
// LAS, and restores the best-validation checkpoint into `model`.
ParserTrainResult train_parser(ParserModel& model,
                               const std::vector<TreebankSentence>& train,
                               const std::vector<TreebankSentence>& valid,
                               const RunConfig& run);

}  // namespace lapkit
