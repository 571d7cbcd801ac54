#include "lapkit/encoder.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace lapkit {

using namespace ad;

namespace {

void fill_truncnorm(Mat& m, Rng& rng, double stddev) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      m(i, j) = rng.truncated_normal(0.0, stddev);
}

std::string layer_key(int i, const char* suffix) {
  return "layer" + std::to_string(i) + "." + suffix;
}

}  // namespace

EncoderModel create_encoder(const EncoderConfig& config, std::uint64_t seed) {
  if (config.vocab_size <= 0)
    throw std::invalid_argument("encoder requires a positive vocab size");
  if (config.hidden % config.n_heads != 0)
    throw std::invalid_argument("hidden size must be divisible by head count");

  EncoderModel model;
  model.config = config;
  Rng rng(seed);
  const double stddev = 0.02;
  const int d = config.hidden;

  auto add_weight = [&](const std::string& name, int rows, int cols) {
    Parameter& p = model.params.add(name, rows, cols);
    fill_truncnorm(p.value, rng, stddev);
  };
  auto add_bias = [&](const std::string& name, int cols) {
    model.params.add(name, 1, cols);  // zeros
  };
  auto add_layer_norm = [&](const std::string& prefix) {
    model.params.add(prefix + ".gain", 1, d).value.setOnes();
    model.params.add(prefix + ".bias", 1, d);
  };

  add_weight("emb.piece", config.vocab_size, d);
  add_weight("emb.pos", config.max_positions, d);
  add_layer_norm("emb.ln");
  for (int i = 0; i < config.n_layers; ++i) {
    for (const char* w : {"attn.wq", "attn.wk", "attn.wv", "attn.wo"})
      add_weight(layer_key(i, w), d, d);
    for (const char* b : {"attn.bq", "attn.bk", "attn.bv", "attn.bo"})
      add_bias(layer_key(i, b), d);
    add_layer_norm(layer_key(i, "attn.ln"));
    add_weight(layer_key(i, "ff.w1"), d, config.ff_dim);
    add_bias(layer_key(i, "ff.b1"), config.ff_dim);
    add_weight(layer_key(i, "ff.w2"), config.ff_dim, d);
    add_bias(layer_key(i, "ff.b2"), d);
    add_layer_norm(layer_key(i, "ff.ln"));
  }
  add_weight("mlm.transform.w", d, d);
  add_bias("mlm.transform.b", d);
  add_layer_norm("mlm.ln");
  add_bias("mlm.bias", config.vocab_size);
  if (!config.tie_mlm_head) add_weight("mlm.decoder", config.vocab_size, d);
  return model;
}

namespace {

struct Leaves {
  Tape& tape;
  EncoderModel& model;
  bool frozen;
  Var operator()(const std::string& name) {
    Parameter& p = model.params.at(name);
    return frozen ? tape.frozen_leaf(p) : tape.leaf(p);
  }
};

Var maybe_norm(Leaves& L, const EncoderModel& model, Var x,
               const std::string& prefix) {
  if (!model.config.use_layer_norm) return x;
  return layer_norm_rows(x, L(prefix + ".gain"), L(prefix + ".bias"));
}

}  // namespace

std::vector<Var> encode_pieces(Tape& tape, const std::vector<int>& piece_ids,
                               EncoderModel& model, bool training, Rng& rng,
                               bool frozen) {
  const EncoderConfig& cfg = model.config;
  const int T = static_cast<int>(piece_ids.size());
  if (T == 0) throw std::invalid_argument("cannot encode an empty sequence");
  if (T > cfg.max_positions)
    throw std::invalid_argument("sequence longer than max_positions");
  for (int id : piece_ids)
    if (id < 0 || id >= cfg.vocab_size)
      throw std::invalid_argument("piece id outside vocabulary: " +
                                  std::to_string(id));

  Leaves L{tape, model, frozen};
  const double p = cfg.dropout;
  const int d = cfg.hidden;
  const int dh = d / cfg.n_heads;

  std::vector<int> pos_ids(T);
  std::iota(pos_ids.begin(), pos_ids.end(), 0);
  Var x = add(rows_select(L("emb.piece"), piece_ids),
              rows_select(L("emb.pos"), pos_ids));
  x = maybe_norm(L, model, x, "emb.ln");
  x = dropout(x, p, rng, training);

  std::vector<Var> activations;
  activations.reserve(cfg.n_layers + 1);
  activations.push_back(x);

  for (int i = 0; i < cfg.n_layers; ++i) {
    Var q = add_rowvec(matmul(x, L(layer_key(i, "attn.wq"))),
                       L(layer_key(i, "attn.bq")));
    Var k = add_rowvec(matmul(x, L(layer_key(i, "attn.wk"))),
                       L(layer_key(i, "attn.bk")));
    Var v = add_rowvec(matmul(x, L(layer_key(i, "attn.wv"))),
                       L(layer_key(i, "attn.bv")));
    std::vector<Var> heads;
    heads.reserve(cfg.n_heads);
    for (int h = 0; h < cfg.n_heads; ++h) {
      Var qh = cols_slice(q, h * dh, dh);
      Var kh = cols_slice(k, h * dh, dh);
      Var vh = cols_slice(v, h * dh, dh);
      Var scores = scale(matmul_nt(qh, kh), 1.0 / std::sqrt(double(dh)));
      heads.push_back(matmul(softmax_rows(scores), vh));
    }
    Var ctx = cfg.n_heads == 1 ? heads[0] : hcat(heads);
    Var out = add_rowvec(matmul(ctx, L(layer_key(i, "attn.wo"))),
                         L(layer_key(i, "attn.bo")));
    out = dropout(out, p, rng, training);
    x = add(x, out);
    x = maybe_norm(L, model, x, layer_key(i, "attn.ln"));

    Var h1 = gelu_v(add_rowvec(matmul(x, L(layer_key(i, "ff.w1"))),
                               L(layer_key(i, "ff.b1"))));
    Var o = add_rowvec(matmul(h1, L(layer_key(i, "ff.w2"))),
                       L(layer_key(i, "ff.b2")));
    o = dropout(o, p, rng, training);
    x = add(x, o);
    x = maybe_norm(L, model, x, layer_key(i, "ff.ln"));
    activations.push_back(x);
  }
  return activations;
}

EncoderActivations encoder_forward(Tape& tape, const PretrainingInstance& inst,
                                   EncoderModel& model, bool training, Rng& rng,
                                   bool frozen) {
  EncoderActivations acts;
  acts.layers =
      encode_pieces(tape, inst.input_ids, model, training, rng, frozen);
  if (inst.masked_positions.empty()) return acts;

  for (std::size_t i = 1; i < inst.masked_positions.size(); ++i)
    if (inst.masked_positions[i] <= inst.masked_positions[i - 1])
      throw std::invalid_argument("masked positions must be strictly increasing");

  Leaves L{tape, model, frozen};
  Var g = rows_select(acts.layers.back(), inst.masked_positions);
  Var t = gelu_v(add_rowvec(matmul(g, L("mlm.transform.w")),
                            L("mlm.transform.b")));
  t = maybe_norm(L, model, t, "mlm.ln");
  Var proj = model.config.tie_mlm_head ? L("emb.piece") : L("mlm.decoder");
  acts.mlm_logits = add_rowvec(matmul_nt(t, proj), L("mlm.bias"));
  return acts;
}

Var mlm_loss(Tape& tape, const std::vector<Var>& logits,
             const std::vector<std::vector<int>>& labels) {
  if (logits.size() != labels.size())
    throw std::invalid_argument("logits/labels batch size mismatch");
  long total = 0;
  for (const auto& l : labels) total += static_cast<long>(l.size());
  if (total == 0)
    throw std::invalid_argument("mlm loss undefined with zero masked positions");
  Var acc;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (labels[i].empty()) continue;
    Var part = scale(cross_entropy_mean(logits[i], labels[i]),
                     static_cast<double>(labels[i].size()) /
                         static_cast<double>(total));
    acc = acc ? add(acc, part) : part;
  }
  return acc;
}

}  // namespace lapkit
