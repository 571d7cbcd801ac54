#include <cmath>

#include "doctest.h"
#include "grad_check.hpp"
#include "lapkit/representation.hpp"

using namespace lapkit;
using namespace lapkit::ad;

namespace {

std::vector<Var> constant_layers(Tape& tape, const std::vector<Mat>& ms) {
  std::vector<Var> out;
  for (const Mat& m : ms) out.push_back(tape.constant(m));
  return out;
}

const Vocabulary& toy_vocab() {
  static Vocabulary v = Vocabulary::build(
      {"ab", "##ab", "##b", "a", "##a", "b", "c", "##c"});
  return v;
}

}  // namespace

TEST_CASE("uniform scalars average the layers and gamma scales") {
  ParameterStore store;
  ScalarMix mix = create_scalar_mix(store, 2);  // 3 mixed layers
  Mat a = Mat::Constant(2, 3, 1.0), b = Mat::Constant(2, 3, 2.0),
      c = Mat::Constant(2, 3, 6.0);
  Tape tape;
  Rng rng(0);
  Var out = scalar_mix(tape, constant_layers(tape, {a, b, c}), mix,
                       /*training=*/false, rng);
  CHECK((out.value().array() - 3.0).abs().maxCoeff() < 1e-12);

  mix.gamma->value(0, 0) = 0.0;
  Tape tape2;
  Var zero = scalar_mix(tape2, constant_layers(tape2, {a, b, c}), mix,
                        false, rng);
  CHECK(zero.value().cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("hand-computed two-layer mix") {
  ParameterStore store;
  ScalarMix mix = create_scalar_mix(store, 1);
  mix.scalars->value << std::log(3.0), 0.0;  // w = (0.75, 0.25)
  mix.gamma->value(0, 0) = 2.0;
  Tape tape;
  Rng rng(0);
  Var out = scalar_mix(
      tape,
      constant_layers(tape, {Mat::Constant(1, 1, 1.0), Mat::Constant(1, 1, 5.0)}),
      mix, false, rng);
  CHECK(out.value()(0, 0) == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("mix weights are a distribution over layers") {
  ParameterStore store;
  ScalarMix mix = create_scalar_mix(store, 3);
  Rng init(7);
  for (int j = 0; j < 4; ++j) mix.scalars->value(0, j) = init.uniform(-2, 2);
  mix.gamma->value(0, 0) = 1.0;

  // Indicator layers read individual weights off the output.
  double sum = 0.0;
  for (int j = 0; j < 4; ++j) {
    std::vector<Mat> layers(4, Mat::Zero(1, 1));
    layers[static_cast<std::size_t>(j)] = Mat::Constant(1, 1, 1.0);
    Tape tape;
    Rng rng(0);
    const double w =
        scalar_mix(tape, constant_layers(tape, layers), mix, false, rng)
            .value()(0, 0);
    CHECK(w > 0.0);
    sum += w;
  }
  CHECK(std::abs(sum - 1.0) < 1e-12);
}

TEST_CASE("a saturated scalar selects its layer") {
  ParameterStore store;
  ScalarMix mix = create_scalar_mix(store, 2);
  mix.scalars->value << 0.0, 1e9, 0.0;
  mix.gamma->value(0, 0) = 1.7;
  Mat a(2, 2), b(2, 2), c(2, 2);
  a << 1, 2, 3, 4;
  b << -5, 6, 7, 8;
  c << 9, 10, 11, 12;
  Tape tape;
  Rng rng(0);
  Var out =
      scalar_mix(tape, constant_layers(tape, {a, b, c}), mix, false, rng);
  CHECK((out.value() - 1.7 * b).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("scalar-mix gradients match finite differences") {
  ParameterStore store;
  ScalarMix mix = create_scalar_mix(store, 2);
  Rng init(3);
  for (int j = 0; j < 3; ++j) mix.scalars->value(0, j) = init.uniform(-1, 1);
  mix.gamma->value(0, 0) = 1.3;
  std::vector<Mat> ms;
  for (int j = 0; j < 3; ++j) {
    Mat m(2, 3);
    for (int r = 0; r < 2; ++r)
      for (int col = 0; col < 3; ++col) m(r, col) = init.uniform(-2, 2);
    ms.push_back(m);
  }
  auto run = [&](bool backward) {
    Tape tape;
    Rng rng(0);
    Var out = scalar_mix(tape, constant_layers(tape, ms), mix, false, rng);
    Var loss = sum_all(cmul(out, out));
    if (backward) tape.backward(loss);
    return loss.scalar();
  };
  auto result = gradcheck::check(
      store.all(), [&]() { return run(false); }, [&]() { run(true); }, 1e-5);
  INFO("worst: " << result.where);
  CHECK(result.max_rel_err < 1e-4);
}

TEST_CASE("layer dropout excludes each layer about 10% of draws") {
  ParameterStore store;
  ScalarMix mix = create_scalar_mix(store, 4);  // 5 layers
  std::vector<Mat> ms(5, Mat::Zero(1, 1));
  Rng rng(99);
  std::vector<int> excluded(5, 0);
  const int kDraws = 10000;
  for (int it = 0; it < kDraws; ++it) {
    Tape tape;
    std::vector<int> retained;
    scalar_mix(tape, constant_layers(tape, ms), mix, /*training=*/true, rng,
               &retained);
    CHECK(!retained.empty());
    std::vector<char> kept(5, 0);
    for (int j : retained) kept[static_cast<std::size_t>(j)] = 1;
    for (int j = 0; j < 5; ++j)
      if (!kept[static_cast<std::size_t>(j)]) ++excluded[static_cast<std::size_t>(j)];
  }
  for (int j = 0; j < 5; ++j) {
    const double rate = static_cast<double>(excluded[static_cast<std::size_t>(j)]) / kDraws;
    CHECK(rate > 0.09);
    CHECK(rate < 0.11);
  }
}

TEST_CASE("scalar_mix validates shapes and layer counts") {
  ParameterStore store;
  ScalarMix mix = create_scalar_mix(store, 2);
  Tape tape;
  Rng rng(0);
  CHECK_THROWS_AS(scalar_mix(tape, {}, mix, false, rng), std::invalid_argument);
  CHECK_THROWS_AS(
      scalar_mix(tape,
                 constant_layers(tape, {Mat::Zero(2, 2), Mat::Zero(2, 2)}),
                 mix, false, rng),
      std::invalid_argument);
  CHECK_THROWS_AS(
      scalar_mix(tape,
                 constant_layers(
                     tape, {Mat::Zero(2, 2), Mat::Zero(2, 2), Mat::Zero(3, 2)}),
                 mix, false, rng),
      std::invalid_argument);
}

TEST_CASE("first-subpiece pooling selects span heads") {
  Tape tape;
  Mat pieces(7, 2);  // [CLS] + 5 content + [SEP]
  for (int i = 0; i < 7; ++i) pieces.row(i) << i, 10 * i;
  Var pv = tape.constant(pieces);

  SUBCASE("single-piece words are the identity") {
    std::vector<WordSpan> spans = {{1, 2}, {2, 3}, {3, 4}, {4, 5}, {5, 6}};
    Var words = pool_to_words(tape, pv, spans);
    CHECK((words.value() - pieces.block(1, 0, 5, 2)).cwiseAbs().maxCoeff() ==
          0.0);
  }
  SUBCASE("a multi-piece word is represented by its first piece") {
    std::vector<WordSpan> spans = {{1, 3}, {3, 6}};  // word 2 spans pieces 3..5
    Var words = pool_to_words(tape, pv, spans);
    CHECK(words.value().rows() == 2);
    CHECK(words.value()(1, 0) == 3.0);
    CHECK(words.value()(1, 1) == 30.0);
  }
  SUBCASE("span validation") {
    CHECK_THROWS_AS(pool_to_words(tape, pv, {{1, 1}, {1, 6}}),
                    std::invalid_argument);  // empty span
    CHECK_THROWS_AS(pool_to_words(tape, pv, {{1, 3}, {4, 6}}),
                    std::invalid_argument);  // gap
    CHECK_THROWS_AS(pool_to_words(tape, pv, {{1, 3}}),
                    std::invalid_argument);  // uncovered tail
    CHECK_THROWS_AS(pool_to_words(tape, pv, {}), std::invalid_argument);
  }
}

TEST_CASE("random alignments pool to one vector per word") {
  Rng rng(41);
  for (int trial = 0; trial < 50; ++trial) {
    const int n_words = 1 + static_cast<int>(rng.uniform_int(6));
    std::vector<WordSpan> spans;
    int pos = 1;
    for (int w = 0; w < n_words; ++w) {
      const int len = 1 + static_cast<int>(rng.uniform_int(3));
      spans.push_back({pos, pos + len});
      pos += len;
    }
    Tape tape;
    Var pv = tape.constant(Mat::Random(pos + 1, 3));
    CHECK(pool_to_words(tape, pv, spans).value().rows() == n_words);
  }
}

TEST_CASE("sentences are framed with CLS/SEP and shifted spans") {
  const Vocabulary& v = toy_vocab();
  SentencePieces p = pieces_for_sentence({"ab", "abb"}, v, 16);
  REQUIRE(p.piece_ids.size() >= 4);
  CHECK(p.piece_ids.front() == v.cls_id());
  CHECK(p.piece_ids.back() == v.sep_id());
  CHECK(p.alignment.size() == 2);
  CHECK(p.alignment[0].begin == 1);
  CHECK(p.alignment[1].end ==
        static_cast<int>(p.piece_ids.size()) - 1);

  CHECK_THROWS_AS(pieces_for_sentence({}, v, 16), std::invalid_argument);
  CHECK_THROWS_AS(
      pieces_for_sentence({"ab", "ab", "ab", "ab", "ab", "ab", "ab"}, v, 8),
      std::invalid_argument);
}

TEST_CASE("embed_sentence honors the frozen / ft gradient contract") {
  EncoderConfig cfg;
  cfg.n_layers = 2;
  cfg.hidden = 8;
  cfg.n_heads = 2;
  cfg.ff_dim = 12;
  cfg.vocab_size = toy_vocab().size();
  cfg.max_positions = 16;
  cfg.dropout = 0.0;
  auto model = create_encoder(cfg, 3);
  ParameterStore mix_store;
  ScalarMix mix = create_scalar_mix(mix_store, cfg.n_layers);
  const std::vector<std::string> tokens = {"ab", "b"};

  auto backprop = [&](RepresentationMode mode) {
    for (Parameter* p : model.params.all()) p->zero_grad();
    for (Parameter* p : mix_store.all()) p->zero_grad();
    Tape tape;
    Rng rng(0);
    Var words = embed_sentence(tape, tokens, toy_vocab(), model, mix, mode,
                               /*training=*/false, rng);
    tape.backward(sum_all(cmul(words, words)));
    double encoder_grad = 0.0;
    for (Parameter* p : model.params.all())
      encoder_grad = std::max(encoder_grad, p->grad.cwiseAbs().maxCoeff());
    return encoder_grad;
  };

  CHECK(backprop(RepresentationMode::kFrozen) == 0.0);
  CHECK(backprop(RepresentationMode::kFt) > 0.0);
  CHECK(mix_store.at("mix.gamma").grad.cwiseAbs().maxCoeff() > 0.0);

  // Eval-mode determinism.
  auto run = [&]() {
    Tape tape;
    Rng rng(123);
    return embed_sentence(tape, tokens, toy_vocab(), model, mix,
                          RepresentationMode::kFt, false, rng)
        .value();
  };
  const Mat once = run();
  CHECK((run() - once).cwiseAbs().maxCoeff() == 0.0);

  // Cached frozen activations match the uncached frozen path.
  SentencePieces pieces = pieces_for_sentence(tokens, toy_vocab(), 16);
  Tape t1, t2;
  Rng r1(0), r2(0);
  const Mat direct = embed_pieces(t1, pieces, model, mix,
                                  RepresentationMode::kFrozen, false, r1)
                         .value();
  const Mat cached =
      embed_frozen_cached(t2, pieces, frozen_layer_activations(pieces, model),
                          mix, false, r2)
          .value();
  CHECK((direct - cached).cwiseAbs().maxCoeff() == 0.0);
}
