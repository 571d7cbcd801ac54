#include "lapkit/representation.hpp"

#include <stdexcept>

namespace lapkit {

using namespace ad;

ScalarMix create_scalar_mix(ParameterStore& store, int n_layers,
                            double layer_dropout_p, const std::string& prefix) {
  if (n_layers < 0) throw std::invalid_argument("negative layer count");
  if (layer_dropout_p < 0.0 || layer_dropout_p >= 1.0)
    throw std::invalid_argument("layer dropout must lie in [0, 1)");
  ScalarMix mix;
  mix.scalars = &store.add(prefix + ".scalars", 1, n_layers + 1);
  mix.gamma = &store.add(prefix + ".gamma", 1, 1);
  mix.scalars->value.setZero();
  mix.gamma->value.setOnes();
  mix.layer_dropout_p = layer_dropout_p;
  return mix;
}

Var scalar_mix(Tape& tape, const std::vector<Var>& layers,
               const ScalarMix& mix, bool training, Rng& rng,
               std::vector<int>* retained_out) {
  if (layers.empty()) throw std::invalid_argument("scalar_mix: no layers");
  const Eigen::Index n_layers = static_cast<Eigen::Index>(layers.size());
  if (mix.scalars == nullptr || mix.gamma == nullptr)
    throw std::invalid_argument("scalar_mix: uninitialized parameters");
  if (mix.scalars->value.cols() != n_layers)
    throw std::invalid_argument("scalar_mix: expected " +
                                std::to_string(mix.scalars->value.cols()) +
                                " layers, got " + std::to_string(n_layers));
  const Eigen::Index rows = layers[0].value().rows();
  const Eigen::Index cols = layers[0].value().cols();
  for (const Var& l : layers)
    if (l.value().rows() != rows || l.value().cols() != cols)
      throw std::invalid_argument("scalar_mix: layer shape mismatch");

  std::vector<int> retained;
  if (training && mix.layer_dropout_p > 0.0) {
    while (retained.empty()) {
      for (int j = 0; j < static_cast<int>(n_layers); ++j)
        if (rng.uniform() >= mix.layer_dropout_p) retained.push_back(j);
    }
  } else {
    for (int j = 0; j < static_cast<int>(n_layers); ++j) retained.push_back(j);
  }
  if (retained_out) *retained_out = retained;

  Var s = tape.leaf(*mix.scalars);
  Var w = softmax_rows(cols_select(s, retained));  // 1 x |retained|
  Var out;
  for (std::size_t i = 0; i < retained.size(); ++i) {
    Var term = mul_scalar(layers[retained[i]],
                          cols_slice(w, static_cast<Eigen::Index>(i), 1));
    out = i == 0 ? term : add(out, term);
  }
  return mul_scalar(out, tape.leaf(*mix.gamma));
}

SentencePieces pieces_for_sentence(const std::vector<std::string>& tokens,
                                   const Vocabulary& vocab, int max_positions,
                                   UnkPolicy policy) {
  if (tokens.empty())
    throw std::invalid_argument("cannot embed an empty sentence");
  TokenizedSentence ts = tokenize_sentence(tokens, vocab, policy);
  const int framed = static_cast<int>(ts.piece_ids.size()) + 2;
  if (framed > max_positions)
    throw std::invalid_argument(
        "sentence needs " + std::to_string(framed) + " positions, encoder has " +
        std::to_string(max_positions));
  SentencePieces out;
  out.piece_ids.reserve(framed);
  out.piece_ids.push_back(vocab.cls_id());
  out.piece_ids.insert(out.piece_ids.end(), ts.piece_ids.begin(),
                       ts.piece_ids.end());
  out.piece_ids.push_back(vocab.sep_id());
  out.alignment.reserve(tokens.size());
  for (const auto& [start, len] : ts.word_alignment)
    out.alignment.push_back({start + 1, start + 1 + len});
  return out;
}

Var pool_to_words(Tape& tape, Var piece_vectors,
                  const std::vector<WordSpan>& alignment) {
  if (alignment.empty()) throw std::invalid_argument("empty word alignment");
  const int n_pieces = static_cast<int>(piece_vectors.value().rows());
  int expect = 1;  // position 0 is [CLS]
  std::vector<int> firsts;
  firsts.reserve(alignment.size());
  for (const WordSpan& span : alignment) {
    if (span.begin >= span.end)
      throw std::invalid_argument("empty piece span for a word");
    if (span.begin != expect)
      throw std::invalid_argument("word spans do not partition the pieces");
    expect = span.end;
    firsts.push_back(span.begin);
  }
  if (expect != n_pieces - 1)  // last position is [SEP]
    throw std::invalid_argument("word spans do not cover the pieces");
  (void)tape;
  return rows_select(piece_vectors, firsts);
}

RepresentationMode representation_mode_from_string(const std::string& s) {
  if (s == "frozen") return RepresentationMode::kFrozen;
  if (s == "ft") return RepresentationMode::kFt;
  throw std::invalid_argument("unknown representation mode: " + s);
}

std::string to_string(RepresentationMode mode) {
  return mode == RepresentationMode::kFrozen ? "frozen" : "ft";
}

std::vector<Mat> frozen_layer_activations(const SentencePieces& pieces,
                                          EncoderModel& model) {
  Tape tape;
  Rng rng(0);
  std::vector<Var> layers = encode_pieces(tape, pieces.piece_ids, model,
                                          /*training=*/false, rng,
                                          /*frozen=*/true);
  std::vector<Mat> out;
  out.reserve(layers.size());
  for (const Var& v : layers) out.push_back(v.value());
  return out;
}

Var embed_pieces(Tape& tape, const SentencePieces& pieces, EncoderModel& model,
                 const ScalarMix& mix, RepresentationMode mode, bool training,
                 Rng& rng) {
  if (mode == RepresentationMode::kFrozen)
    return embed_frozen_cached(tape, pieces, frozen_layer_activations(pieces, model),
                               mix, training, rng);
  std::vector<Var> layers =
      encode_pieces(tape, pieces.piece_ids, model, training, rng);
  Var mixed = scalar_mix(tape, layers, mix, training, rng);
  return pool_to_words(tape, mixed, pieces.alignment);
}

Var embed_frozen_cached(Tape& tape, const SentencePieces& pieces,
                        const std::vector<Mat>& cached_layers,
                        const ScalarMix& mix, bool training, Rng& rng) {
  std::vector<Var> layers;
  layers.reserve(cached_layers.size());
  for (const Mat& m : cached_layers) layers.push_back(tape.constant(m));
  Var mixed = scalar_mix(tape, layers, mix, training, rng);
  return pool_to_words(tape, mixed, pieces.alignment);
}

Var embed_sentence(Tape& tape, const std::vector<std::string>& tokens,
                   const Vocabulary& vocab, EncoderModel& model,
                   const ScalarMix& mix, RepresentationMode mode,
                   bool training, Rng& rng) {
  SentencePieces pieces =
      pieces_for_sentence(tokens, vocab, model.config.max_positions);
  return embed_pieces(tape, pieces, model, mix, mode, training, rng);
}

}  // namespace lapkit
