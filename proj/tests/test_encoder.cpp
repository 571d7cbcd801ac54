#include <cmath>

#include "doctest.h"
#include "grad_check.hpp"
#include "lapkit/encoder.hpp"

using namespace lapkit;
using namespace lapkit::ad;

namespace {

PretrainingInstance make_instance(std::vector<int> ids,
                                  std::vector<int> masked,
                                  std::vector<int> labels) {
  PretrainingInstance inst;
  inst.input_ids = std::move(ids);
  inst.attention_mask.assign(inst.input_ids.size(), 1);
  inst.masked_positions = std::move(masked);
  inst.masked_labels = std::move(labels);
  return inst;
}

Mat hand_gelu(const Mat& x) {
  Mat y = x;
  for (Eigen::Index i = 0; i < y.rows(); ++i)
    for (Eigen::Index j = 0; j < y.cols(); ++j)
      y(i, j) = 0.5 * x(i, j) * (1.0 + std::erf(x(i, j) / std::sqrt(2.0)));
  return y;
}

Mat hand_softmax_rows(const Mat& x) {
  Mat y = x;
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    Eigen::RowVectorXd row = x.row(i);
    const double m = row.maxCoeff();
    Eigen::RowVectorXd e = (row.array() - m).exp();
    y.row(i) = e / e.sum();
  }
  return y;
}

}  // namespace

TEST_CASE("zero parameters with layer norm bypassed give uniform logits") {
  EncoderConfig cfg;
  cfg.n_layers = 1;
  cfg.hidden = 4;
  cfg.n_heads = 2;
  cfg.ff_dim = 6;
  cfg.vocab_size = 12;
  cfg.max_positions = 8;
  cfg.dropout = 0.0;
  cfg.use_layer_norm = false;
  auto model = create_encoder(cfg, 1);
  for (Parameter* p : model.params.all()) p->value.setZero();

  auto inst = make_instance({0, 3, 5, 7}, {1, 2}, {3, 5});
  Tape tape;
  Rng rng(0);
  auto acts = encoder_forward(tape, inst, model, false, rng);
  REQUIRE(acts.layers.size() == 2);
  CHECK(acts.layers[0].value().norm() == 0.0);
  CHECK(acts.layers[1].value().norm() == 0.0);
  REQUIRE(acts.mlm_logits);
  CHECK(acts.mlm_logits.value().norm() == 0.0);

  Var loss = mlm_loss(tape, {acts.mlm_logits}, {inst.masked_labels});
  CHECK(loss.scalar() == doctest::Approx(std::log(12.0)).epsilon(1e-12));
}

TEST_CASE("forward pass matches a hand-computed single layer") {
  EncoderConfig cfg;
  cfg.n_layers = 1;
  cfg.hidden = 2;
  cfg.n_heads = 1;
  cfg.ff_dim = 2;
  cfg.vocab_size = 6;
  cfg.max_positions = 4;
  cfg.dropout = 0.0;
  cfg.use_layer_norm = false;
  auto model = create_encoder(cfg, 7);

  // Small distinct values so every path contributes.
  auto set = [&](const char* name, std::initializer_list<double> vals) {
    Parameter& p = model.params.at(name);
    REQUIRE(static_cast<std::size_t>(p.value.size()) == vals.size());
    int k = 0;
    for (double v : vals) {
      p.value(k / p.value.cols(), k % p.value.cols()) = v;
      ++k;
    }
  };
  set("emb.piece", {0.1, -0.2, 0.3, 0.05, -0.1, 0.2, 0.15, -0.05, 0.0, 0.1,
                    -0.3, 0.25});
  set("emb.pos", {0.02, 0.01, -0.03, 0.02, 0.01, -0.01, 0.0, 0.03});
  set("layer0.attn.wq", {0.3, -0.1, 0.2, 0.4});
  set("layer0.attn.bq", {0.01, -0.02});
  set("layer0.attn.wk", {-0.2, 0.1, 0.5, 0.3});
  set("layer0.attn.bk", {0.0, 0.02});
  set("layer0.attn.wv", {0.25, 0.15, -0.35, 0.05});
  set("layer0.attn.bv", {0.03, 0.0});
  set("layer0.attn.wo", {0.4, -0.3, 0.2, 0.1});
  set("layer0.attn.bo", {-0.01, 0.01});
  set("layer0.ff.w1", {0.5, -0.2, 0.3, 0.6});
  set("layer0.ff.b1", {0.05, -0.05});
  set("layer0.ff.w2", {-0.4, 0.2, 0.1, 0.35});
  set("layer0.ff.b2", {0.02, -0.02});
  set("mlm.transform.w", {0.3, 0.22, -0.12, 0.4});
  set("mlm.transform.b", {0.01, 0.02});
  set("mlm.bias", {0.01, -0.01, 0.02, 0.0, 0.005, -0.02});

  const std::vector<int> ids = {2, 4};
  auto inst = make_instance(ids, {1}, {4});
  Tape tape;
  Rng rng(0);
  auto acts = encoder_forward(tape, inst, model, false, rng);

  // Independent recomputation in plain Eigen.
  const Mat& E = model.params.at("emb.piece").value;
  const Mat& P = model.params.at("emb.pos").value;
  Mat x(2, 2);
  x.row(0) = E.row(2) + P.row(0);
  x.row(1) = E.row(4) + P.row(1);
  CHECK((acts.layers[0].value() - x).norm() < 1e-14);

  auto rowplus = [](const Mat& m, const Mat& b) {
    Mat r = m;
    r.rowwise() += b.row(0);
    return r;
  };
  const auto& pr = [&](const char* n) -> const Mat& {
    return model.params.at(n).value;
  };
  Mat q = rowplus(x * pr("layer0.attn.wq"), pr("layer0.attn.bq"));
  Mat k = rowplus(x * pr("layer0.attn.wk"), pr("layer0.attn.bk"));
  Mat v = rowplus(x * pr("layer0.attn.wv"), pr("layer0.attn.bv"));
  Mat scores = q * k.transpose() / std::sqrt(2.0);
  Mat attn = hand_softmax_rows(scores) * v;
  Mat out = rowplus(attn * pr("layer0.attn.wo"), pr("layer0.attn.bo"));
  x = x + out;
  Mat h1 = hand_gelu(rowplus(x * pr("layer0.ff.w1"), pr("layer0.ff.b1")));
  Mat ff = rowplus(h1 * pr("layer0.ff.w2"), pr("layer0.ff.b2"));
  x = x + ff;
  CHECK((acts.layers[1].value() - x).norm() < 1e-12);

  Mat g = x.row(1);
  Mat t = hand_gelu(rowplus(g * pr("mlm.transform.w"), pr("mlm.transform.b")));
  Mat logits = rowplus(t * E.transpose(), pr("mlm.bias"));
  REQUIRE(acts.mlm_logits.value().rows() == 1);
  CHECK((acts.mlm_logits.value() - logits).norm() < 1e-12);
}

TEST_CASE("analytic encoder gradients match finite differences") {
  EncoderConfig cfg;
  cfg.n_layers = 1;
  cfg.hidden = 4;
  cfg.n_heads = 2;
  cfg.ff_dim = 6;
  cfg.vocab_size = 12;
  cfg.max_positions = 8;
  cfg.dropout = 0.0;
  cfg.use_layer_norm = true;

  for (bool tied : {true, false}) {
    cfg.tie_mlm_head = tied;
    auto model = create_encoder(cfg, 11);
    // Scale up the init so attention gradients are well above the
    // finite-difference noise floor (at 0.02 scale they sit near 1e-9).
    for (Parameter* p : model.params.all()) p->value *= 8.0;
    auto inst = make_instance({1, 4, 7, 9, 2}, {1, 3}, {5, 8});

    auto forward = [&]() {
      Tape tape;
      Rng rng(0);
      auto acts = encoder_forward(tape, inst, model, false, rng);
      Var loss = mlm_loss(tape, {acts.mlm_logits}, {inst.masked_labels});
      return std::pair<Tape, Var>(std::move(tape), loss);
    };

    auto result = gradcheck::check(
        model.params.all(),
        [&]() {
          auto [tape, loss] = forward();
          return loss.scalar();
        },
        [&]() {
          auto [tape, loss] = forward();
          tape.backward(loss);
        },
        1e-4);
    INFO("worst parameter entry: " << result.where << " tied=" << tied);
    CHECK(result.max_rel_err < 1e-4);
  }
}

TEST_CASE("forward is deterministic and batch-order independent") {
  EncoderConfig cfg;
  cfg.n_layers = 2;
  cfg.hidden = 8;
  cfg.n_heads = 2;
  cfg.ff_dim = 16;
  cfg.vocab_size = 20;
  cfg.max_positions = 16;
  auto model = create_encoder(cfg, 5);
  auto a = make_instance({1, 2, 3}, {1}, {2});
  auto b = make_instance({4, 5, 6, 7}, {2}, {6});

  Rng rng(0);
  Tape t1;
  auto ra = encoder_forward(t1, a, model, false, rng);
  auto rb = encoder_forward(t1, b, model, false, rng);
  Tape t2;
  auto rb2 = encoder_forward(t2, b, model, false, rng);
  auto ra2 = encoder_forward(t2, a, model, false, rng);
  CHECK((ra.mlm_logits.value() - ra2.mlm_logits.value()).norm() == 0.0);
  CHECK((rb.mlm_logits.value() - rb2.mlm_logits.value()).norm() == 0.0);
  for (int l = 0; l <= 2; ++l)
    CHECK((ra.layers[l].value() - ra2.layers[l].value()).norm() == 0.0);
}

TEST_CASE("encoder input validation") {
  EncoderConfig cfg;
  cfg.n_layers = 1;
  cfg.hidden = 4;
  cfg.n_heads = 1;
  cfg.ff_dim = 4;
  cfg.vocab_size = 10;
  cfg.max_positions = 4;
  auto model = create_encoder(cfg, 3);
  Rng rng(0);

  Tape tape;
  auto bad_id = make_instance({1, 10}, {1}, {1});
  CHECK_THROWS_AS(encoder_forward(tape, bad_id, model, false, rng),
                  std::invalid_argument);
  auto too_long = make_instance({1, 2, 3, 4, 5}, {1}, {2});
  CHECK_THROWS_AS(encoder_forward(tape, too_long, model, false, rng),
                  std::invalid_argument);

  cfg.n_heads = 3;  // 4 % 3 != 0
  CHECK_THROWS_AS(create_encoder(cfg, 0), std::invalid_argument);
}

TEST_CASE("mlm_loss spec arithmetic") {
  Tape tape;
  Mat two_class(1, 2);
  two_class << 2.0, 0.0;
  Var logits = tape.constant(two_class);
  Var loss = mlm_loss(tape, {logits}, {{0}});
  CHECK(loss.scalar() ==
        doctest::Approx(std::log(1.0 + std::exp(-2.0))).epsilon(1e-12));

  Mat huge(1, 2);
  huge << 50.0, 0.0;
  Var sure = mlm_loss(tape, {tape.constant(huge)}, {{0}});
  CHECK(sure.scalar() < 1e-20);

  CHECK_THROWS_AS(mlm_loss(tape, {}, {}), std::invalid_argument);

  // Batch weighting: instances contribute per masked position.
  Mat l1(1, 2), l2(2, 2);
  l1 << 1.0, 0.0;
  l2 << 0.0, 1.0, 3.0, -1.0;
  Var combined =
      mlm_loss(tape, {tape.constant(l1), tape.constant(l2)}, {{0}, {1, 0}});
  const double ce1 = std::log(1 + std::exp(-1.0));
  const double ce2a = std::log(1 + std::exp(-1.0));
  const double ce2b = std::log(1 + std::exp(-4.0));
  CHECK(combined.scalar() ==
        doctest::Approx((ce1 + ce2a + ce2b) / 3.0).epsilon(1e-12));
}
