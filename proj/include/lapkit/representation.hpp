#pragma once

#include <string>
#include <vector>

#include "lapkit/encoder.hpp"

namespace lapkit {

// Trainable softmax-weighted combination of the L+1 encoder activations
// (embedding output counts as layer 0) with a global scale.
struct ScalarMix {
  Parameter* scalars = nullptr;  // 1 x (L+1), softmaxed into mix weights
  Parameter* gamma = nullptr;    // 1 x 1 output scale
  double layer_dropout_p = 0.1;
};

// Registers mix parameters in `store` (scalars zero -> uniform weights,
// gamma one). n_layers is the encoder's layer count L.
ScalarMix create_scalar_mix(ParameterStore& store, int n_layers,
                            double layer_dropout_p = 0.1,
                            const std::string& prefix = "mix");

// gamma * sum_j w_j * layers[j] with w = softmax over the retained layers'
// scalars. During training each layer is independently dropped with
// probability layer_dropout_p (redrawn if everything drops); at evaluation
// all layers are retained. retained_out, when given, reports the draw.
Var scalar_mix(Tape& tape, const std::vector<Var>& layers,
               const ScalarMix& mix, bool training, Rng& rng,
               std::vector<int>* retained_out = nullptr);

// One sentence rendered for the encoder: [CLS] pieces [SEP] with per-word
// piece spans (begin/end positions into piece_ids, CLS excluded).
struct WordSpan {
  int begin = 0;
  int end = 0;  // exclusive
};

struct SentencePieces {
  std::vector<int> piece_ids;
  std::vector<WordSpan> alignment;  // one span per input token
};

// Tokenizes and frames a sentence; throws if it does not fit into
// max_positions encoder positions or is empty.
SentencePieces pieces_for_sentence(const std::vector<std::string>& tokens,
                                   const Vocabulary& vocab, int max_positions,
                                   UnkPolicy policy = UnkPolicy::kPerChar);

// First-subpiece pooling: word i is represented by the vector at
// alignment[i].begin. Spans must partition the content positions.
Var pool_to_words(Tape& tape, Var piece_vectors,
                  const std::vector<WordSpan>& alignment);

enum class RepresentationMode { kFrozen, kFt };

RepresentationMode representation_mode_from_string(const std::string& s);
std::string to_string(RepresentationMode mode);

// Evaluation-mode encoder activations captured as plain matrices so frozen
// consumers can splice them into a graph as constants.
std::vector<Mat> frozen_layer_activations(const SentencePieces& pieces,
                                          EncoderModel& model);

// tokenize -> encode -> scalar mix -> first-subpiece pooling. Frozen mode
// treats encoder activations as constants (no gradient reaches the
// encoder); ft mode leaves them differentiable.
Var embed_sentence(Tape& tape, const std::vector<std::string>& tokens,
                   const Vocabulary& vocab, EncoderModel& model,
                   const ScalarMix& mix, RepresentationMode mode,
                   bool training, Rng& rng);

// Same, from precomputed pieces (and, frozen mode, cached activations).
Var embed_pieces(Tape& tape, const SentencePieces& pieces, EncoderModel& model,
                 const ScalarMix& mix, RepresentationMode mode, bool training,
                 Rng& rng);
Var embed_frozen_cached(Tape& tape, const SentencePieces& pieces,
                        const std::vector<Mat>& cached_layers,
                        const ScalarMix& mix, bool training, Rng& rng);

}  // namespace lapkit
