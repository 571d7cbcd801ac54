#include "lapkit/parser.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <stdexcept>

namespace lapkit {

using namespace ad;

namespace {

void fill_truncnorm(Mat& m, Rng& rng, double stddev) {
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      m(i, j) = rng.truncated_normal(0.0, stddev);
}

std::string lstm_key(int layer, const char* dir, const char* part) {
  return "bilstm" + std::to_string(layer) + "." + dir + "." + part;
}

void validate_config(const ParserConfig& c) {
  if (c.arc_dim <= 0 || c.label_dim <= 0 || c.bilstm_layers <= 0 ||
      c.bilstm_hidden <= 0 || c.batch_size <= 0 || c.max_epochs <= 0 ||
      c.patience <= 0 || c.warmup_epochs <= 0)
    throw std::invalid_argument("parser dimensions and counts must be positive");
  for (double p : {c.input_dropout, c.parser_dropout, c.mix_layer_dropout})
    if (p < 0.0 || p >= 1.0)
      throw std::invalid_argument("dropout probabilities must lie in [0, 1)");
  if (c.bilstm_hidden_is_total && c.bilstm_hidden % 2 != 0)
    throw std::invalid_argument("total BiLSTM hidden size must be even");
}

}  // namespace

int ParserModel::bilstm_dir_hidden() const {
  return config.bilstm_hidden_is_total ? config.bilstm_hidden / 2
                                       : config.bilstm_hidden;
}

int ParserModel::context_dim() const {
  return config.mode == RepresentationMode::kFrozen ? 2 * bilstm_dir_hidden()
                                                    : encoder.config.hidden;
}

void ParserModel::rebind_mix() {
  mix.scalars = &params.at("mix.scalars");
  mix.gamma = &params.at("mix.gamma");
  mix.layer_dropout_p = config.mix_layer_dropout;
}

ParserModel create_parser(const EncoderModel& encoder, const Vocabulary& vocab,
                          std::vector<std::string> relations,
                          const ParserConfig& config, std::uint64_t seed) {
  validate_config(config);
  std::sort(relations.begin(), relations.end());
  relations.erase(std::unique(relations.begin(), relations.end()),
                  relations.end());
  if (relations.empty())
    throw std::invalid_argument("parser needs at least one relation");

  ParserModel model{config, encoder, vocab, std::move(relations),
                    ParameterStore{}, ScalarMix{}};
  model.mix = create_scalar_mix(model.params, encoder.config.n_layers,
                                config.mix_layer_dropout);

  Rng rng(seed);
  auto add_weight = [&](const std::string& name, int rows, int cols) {
    Parameter& p = model.params.add(name, rows, cols);
    fill_truncnorm(p.value, rng, 0.02);
  };
  auto add_bias = [&](const std::string& name, int cols) {
    model.params.add(name, 1, cols);  // zeros
  };

  const int ctx = model.context_dim();
  add_weight("root", 1, ctx);
  if (config.mode == RepresentationMode::kFrozen) {
    const int H = model.bilstm_dir_hidden();
    for (int l = 0; l < config.bilstm_layers; ++l) {
      const int in = l == 0 ? encoder.config.hidden : 2 * H;
      for (const char* dir : {"fwd", "bwd"}) {
        add_weight(lstm_key(l, dir, "wx"), in, 4 * H);
        add_weight(lstm_key(l, dir, "wh"), H, 4 * H);
        add_bias(lstm_key(l, dir, "b"), 4 * H);
      }
    }
  }
  for (const char* role : {"arc_head", "arc_dep"}) {
    add_weight(std::string("proj.") + role + ".w", ctx, config.arc_dim);
    add_bias(std::string("proj.") + role + ".b", config.arc_dim);
  }
  for (const char* role : {"lab_head", "lab_dep"}) {
    add_weight(std::string("proj.") + role + ".w", ctx, config.label_dim);
    add_bias(std::string("proj.") + role + ".b", config.label_dim);
  }
  add_weight("arc.U", config.arc_dim, config.arc_dim);
  add_weight("arc.u", 1, config.arc_dim);
  const int R = static_cast<int>(model.relations.size());
  for (int r = 0; r < R; ++r) {
    add_weight("label.U" + std::to_string(r), config.label_dim,
               config.label_dim);
    add_weight("label.v" + std::to_string(r), 2 * config.label_dim, 1);
  }
  add_bias("label.b", R);
  return model;
}

Var bilstm_encode(Tape& tape, ParserModel& model, Var word_vectors,
                  bool training, Rng& rng) {
  if (model.config.mode != RepresentationMode::kFrozen)
    throw std::invalid_argument("BiLSTM front-end exists only in frozen mode");
  const int n = static_cast<int>(word_vectors.value().rows());
  if (n == 0) throw std::invalid_argument("cannot encode an empty sentence");
  const int H = model.bilstm_dir_hidden();
  auto L = [&](const std::string& name) -> Var {
    return tape.leaf(model.params.at(name));
  };

  auto run_dir = [&](Var in, int layer, const char* dir, bool reverse) -> Var {
    Var wx = L(lstm_key(layer, dir, "wx"));
    Var wh = L(lstm_key(layer, dir, "wh"));
    Var b = L(lstm_key(layer, dir, "b"));
    Var h = tape.constant(Mat::Zero(1, H));
    Var c = tape.constant(Mat::Zero(1, H));
    std::vector<Var> outs(static_cast<std::size_t>(n));
    for (int s = 0; s < n; ++s) {
      const int t = reverse ? n - 1 - s : s;
      Var z = add(add(matmul(rows_select(in, {t}), wx), matmul(h, wh)), b);
      Var i = sigmoid_v(cols_slice(z, 0, H));
      Var f = sigmoid_v(cols_slice(z, H, H));
      Var g = tanh_v(cols_slice(z, 2 * H, H));
      Var o = sigmoid_v(cols_slice(z, 3 * H, H));
      c = add(cmul(f, c), cmul(i, g));
      h = cmul(o, tanh_v(c));
      outs[static_cast<std::size_t>(t)] = h;
    }
    return vcat(outs);
  };

  Var x = word_vectors;
  for (int l = 0; l < model.config.bilstm_layers; ++l) {
    x = dropout(x, model.config.input_dropout, rng, training);
    x = hcat({run_dir(x, l, "fwd", false), run_dir(x, l, "bwd", true)});
  }
  return x;
}

Var biaffine_arc_scores(Tape& tape, Var h_arc_dep, Var h_arc_head, Var U,
                        Var u) {
  (void)tape;
  Var bilinear = matmul_nt(matmul(h_arc_dep, U), h_arc_head);
  Var head_bias = matmul_nt(u, h_arc_head);  // 1 x (n+1)
  return add_rowvec(bilinear, head_bias);
}

Var biaffine_label_scores(Tape& tape, Var h_lab_dep, Var h_lab_head,
                          const std::vector<int>& heads,
                          const std::vector<Var>& label_U,
                          const std::vector<Var>& label_v, Var label_b) {
  const int n = static_cast<int>(h_lab_dep.value().rows());
  if (static_cast<int>(heads.size()) != n)
    throw std::invalid_argument("one head per dependent required");
  for (int h : heads)
    if (h < 0 || h >= static_cast<int>(h_lab_head.value().rows()))
      throw std::invalid_argument("head index out of range");
  if (label_U.size() != label_v.size() || label_U.empty())
    throw std::invalid_argument("inconsistent label parameters");

  Var heads_sel = rows_select(h_lab_head, heads);   // n x label_dim
  Var pair = hcat({h_lab_dep, heads_sel});          // n x 2*label_dim
  std::vector<Var> cols;
  cols.reserve(label_U.size());
  for (std::size_t r = 0; r < label_U.size(); ++r) {
    Var bilinear = row_sums(cmul(matmul(h_lab_dep, label_U[r]), heads_sel));
    cols.push_back(add(bilinear, matmul(pair, label_v[r])));
  }
  (void)tape;
  return add_rowvec(hcat(cols), label_b);
}

ParserScores score_words(Tape& tape, ParserModel& model, Var word_vectors,
                         bool training, Rng& rng) {
  Var ctx = model.config.mode == RepresentationMode::kFrozen
                ? bilstm_encode(tape, model, word_vectors, training, rng)
                : word_vectors;
  auto L = [&](const std::string& name) -> Var {
    return tape.leaf(model.params.at(name));
  };
  Var with_root = vcat({L("root"), ctx});  // (n+1) x ctx

  auto project = [&](const std::string& role, Var in) -> Var {
    Var h = elu_v(add_rowvec(matmul(in, L("proj." + role + ".w")),
                             L("proj." + role + ".b")));
    return dropout(h, model.config.parser_dropout, rng, training);
  };
  // Sequenced explicitly: each projection consumes dropout draws.
  Var arc_dep = project("arc_dep", ctx);
  Var arc_head = project("arc_head", with_root);
  ParserScores scores;
  scores.arc_scores =
      biaffine_arc_scores(tape, arc_dep, arc_head, L("arc.U"), L("arc.u"));
  scores.lab_dep = project("lab_dep", ctx);
  scores.lab_head = project("lab_head", with_root);
  return scores;
}

Var label_logits_at(Tape& tape, ParserModel& model, const ParserScores& scores,
                    const std::vector<int>& heads) {
  const int R = static_cast<int>(model.relations.size());
  std::vector<Var> label_U, label_v;
  label_U.reserve(static_cast<std::size_t>(R));
  label_v.reserve(static_cast<std::size_t>(R));
  for (int r = 0; r < R; ++r) {
    label_U.push_back(tape.leaf(model.params.at("label.U" + std::to_string(r))));
    label_v.push_back(tape.leaf(model.params.at("label.v" + std::to_string(r))));
  }
  return biaffine_label_scores(tape, scores.lab_dep, scores.lab_head, heads,
                               label_U, label_v,
                               tape.leaf(model.params.at("label.b")));
}

Var parser_loss(Tape& tape, ParserModel& model, const ParserScores& scores,
                const DependencyTree& gold) {
  const int n = static_cast<int>(scores.arc_scores.value().rows());
  if (static_cast<int>(gold.heads.size()) != n ||
      static_cast<int>(gold.labels.size()) != n)
    throw std::invalid_argument("gold tree does not match sentence length");
  for (int h : gold.heads)
    if (h < 0 || h > n)
      throw std::invalid_argument("gold head out of range");
  const int R = static_cast<int>(model.relations.size());
  for (int l : gold.labels)
    if (l < 0 || l >= R)
      throw std::invalid_argument("gold label id out of range");
  Var arc_ce = cross_entropy_mean(scores.arc_scores, gold.heads);
  Var lab_ce = cross_entropy_mean(
      label_logits_at(tape, model, scores, gold.heads), gold.labels);
  return add(arc_ce, lab_ce);
}

double parser_lr_schedule(long step, long total_steps, long warmup_steps,
                          double peak) {
  (void)total_steps;  // schedule decays open-endedly
  if (step < 1) throw std::invalid_argument("schedule steps are 1-based");
  if (warmup_steps < 1) throw std::invalid_argument("warmup must be >= 1 step");
  const double t = static_cast<double>(step);
  const double w = static_cast<double>(warmup_steps);
  return peak * std::min(t / w, std::sqrt(w / t));
}

UnfreezingPlan unfreezing_plan(int epoch, int n_encoder_layers,
                               RepresentationMode mode, double eta) {
  if (epoch < 1) throw std::invalid_argument("epochs are 1-based");
  if (n_encoder_layers < 1)
    throw std::invalid_argument("need at least one encoder layer");
  UnfreezingPlan plan;
  if (mode == RepresentationMode::kFrozen) return plan;  // nothing unfreezes
  const int L = n_encoder_layers;
  const int k = std::min(epoch, L);
  for (int top_offset = 0; top_offset < k; ++top_offset) {
    const int layer = L - 1 - top_offset;  // 0-based, top first
    plan.layers.push_back(layer);
    plan.multipliers.push_back(std::pow(eta, top_offset));
  }
  plan.embeddings = epoch >= L + 1;
  plan.embedding_multiplier = std::pow(eta, L);
  return plan;
}

namespace {

struct PreparedSentence {
  const TreebankSentence* sent = nullptr;
  SentencePieces pieces;
  DependencyTree gold;          // ids into model.relations (train only)
  std::vector<Mat> cached;      // frozen-mode encoder activations
};

int relation_id(const std::vector<std::string>& relations,
                const std::string& name) {
  const auto it = std::lower_bound(relations.begin(), relations.end(), name);
  if (it == relations.end() || *it != name) return -1;
  return static_cast<int>(it - relations.begin());
}

// Tokenizes every sentence that fits the encoder; counts the rest.
std::vector<PreparedSentence> prepare(ParserModel& model,
                                      const std::vector<TreebankSentence>& data,
                                      bool want_gold_ids, int* skipped) {
  std::vector<PreparedSentence> out;
  for (const TreebankSentence& s : data) {
    PreparedSentence p;
    p.sent = &s;
    try {
      p.pieces = pieces_for_sentence(s.tokens, model.vocab,
                                     model.encoder.config.max_positions);
    } catch (const std::invalid_argument&) {
      ++*skipped;
      continue;
    }
    if (want_gold_ids) {
      p.gold.heads = s.heads;
      for (const std::string& rel : s.deprels) {
        const int id = relation_id(model.relations, rel);
        if (id < 0)
          throw std::invalid_argument("relation '" + rel +
                                      "' missing from the parser inventory");
        p.gold.labels.push_back(id);
      }
    }
    if (model.config.mode == RepresentationMode::kFrozen)
      p.cached = frozen_layer_activations(p.pieces, model.encoder);
    out.push_back(std::move(p));
  }
  return out;
}

Var words_for(Tape& tape, ParserModel& model, const PreparedSentence& p,
              bool training, Rng& rng) {
  if (model.config.mode == RepresentationMode::kFrozen)
    return embed_frozen_cached(tape, p.pieces, p.cached, model.mix, training,
                               rng);
  return embed_pieces(tape, p.pieces, model.encoder, model.mix,
                      RepresentationMode::kFt, training, rng);
}

DependencyTree predict_prepared(ParserModel& model,
                                const PreparedSentence& p) {
  Tape tape;
  Rng rng(0);
  Var words = words_for(tape, model, p, /*training=*/false, rng);
  ParserScores scores = score_words(tape, model, words, /*training=*/false, rng);
  DependencyTree tree;
  tree.heads = decode_heads(scores.arc_scores.value());
  const Mat logits = label_logits_at(tape, model, scores, tree.heads).value();
  tree.labels.resize(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index r = 1; r < logits.cols(); ++r)
      if (logits(i, r) > logits(i, best)) best = r;
    tree.labels[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return tree;
}

double validation_las(ParserModel& model,
                      const std::vector<PreparedSentence>& valid) {
  std::vector<TreebankSentence> preds, golds;
  preds.reserve(valid.size());
  golds.reserve(valid.size());
  for (const PreparedSentence& p : valid) {
    preds.push_back(
        with_prediction(*p.sent, predict_prepared(model, p), model.relations));
    golds.push_back(*p.sent);
  }
  return score(preds, golds).las;
}

}  // namespace

std::vector<ParamGroup> parser_epoch_groups(ParserModel& model, int epoch) {
  std::vector<ParamGroup> groups;
  ParamGroup parser_group;
  for (Parameter* p : model.params.all())
    if (p->trainable) parser_group.params.push_back(p);
  parser_group.lr = model.config.parser_lr;
  groups.push_back(std::move(parser_group));

  const UnfreezingPlan plan =
      unfreezing_plan(epoch, model.encoder.config.n_layers, model.config.mode,
                      model.config.unfreeze_eta);
  auto with_prefix = [&](const std::string& prefix) {
    std::vector<Parameter*> out;
    for (Parameter* p : model.encoder.params.all())
      if (p->trainable && p->name.rfind(prefix, 0) == 0) out.push_back(p);
    return out;
  };
  for (std::size_t i = 0; i < plan.layers.size(); ++i) {
    ParamGroup g;
    g.params = with_prefix("layer" + std::to_string(plan.layers[i]) + ".");
    g.lr = model.config.encoder_lr * plan.multipliers[i];
    groups.push_back(std::move(g));
  }
  if (plan.embeddings) {
    ParamGroup g;
    g.params = with_prefix("emb.");
    g.lr = model.config.encoder_lr * plan.embedding_multiplier;
    groups.push_back(std::move(g));
  }
  return groups;
}

DependencyTree predict_tree(ParserModel& model,
                            const std::vector<std::string>& tokens) {
  PreparedSentence p;
  p.pieces = pieces_for_sentence(tokens, model.vocab,
                                 model.encoder.config.max_positions);
  if (model.config.mode == RepresentationMode::kFrozen)
    p.cached = frozen_layer_activations(p.pieces, model.encoder);
  return predict_prepared(model, p);
}

ParserTrainResult train_parser(ParserModel& model,
                               const std::vector<TreebankSentence>& train,
                               const std::vector<TreebankSentence>& valid,
                               const RunConfig& run) {
  if (train.empty() || valid.empty())
    throw std::invalid_argument("parser training needs train and valid data");

  ParserTrainResult result;
  std::vector<PreparedSentence> train_prep =
      prepare(model, train, /*want_gold_ids=*/true, &result.sentences_skipped);
  std::vector<PreparedSentence> valid_prep =
      prepare(model, valid, /*want_gold_ids=*/false,
              &result.sentences_skipped);
  if (result.sentences_skipped > 0)
    std::cerr << "train_parser: skipped " << result.sentences_skipped
              << " sentence(s) longer than the encoder's positions\n";
  if (train_prep.empty() || valid_prep.empty())
    throw std::invalid_argument("no usable sentences after length filtering");

  const ParserConfig& cfg = model.config;
  const long steps_per_epoch =
      (static_cast<long>(train_prep.size()) + cfg.batch_size - 1) /
      cfg.batch_size;
  const long warmup = cfg.warmup_epochs * steps_per_epoch;
  const long total = cfg.max_epochs * steps_per_epoch;
  const bool ft = cfg.mode == RepresentationMode::kFt;

  ParameterStore best_params;
  ParameterStore best_encoder;
  double best = -1.0;
  int best_epoch = 0;
  long gstep = 0;

  std::vector<std::size_t> order(train_prep.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    AdamOptimizer opt(parser_epoch_groups(model, epoch), {}, run.adam_beta1,
                      run.adam_beta2, 1e-8, run.grad_norm_clip);
    Rng shuffle_rng(derive_seed(run.env_seed, 0xda7aULL,
                                static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle_indices(order);

    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(
          order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      opt.zero_grad();
      Rng rng(derive_seed(run.numeric_seed, 0xd409ULL,
                          static_cast<std::uint64_t>(gstep)));
      for (std::size_t b = start; b < stop; ++b) {
        const PreparedSentence& p = train_prep[order[b]];
        Tape tape;
        Var words = words_for(tape, model, p, /*training=*/true, rng);
        ParserScores scores =
            score_words(tape, model, words, /*training=*/true, rng);
        Var loss = scale(parser_loss(tape, model, scores, p.gold),
                         1.0 / static_cast<double>(stop - start));
        if (!std::isfinite(loss.scalar()))
          throw std::runtime_error(
              "non-finite parser loss at epoch " + std::to_string(epoch) +
              ", step " + std::to_string(gstep + 1));
        tape.backward(loss);
      }
      ++gstep;
      opt.step(parser_lr_schedule(gstep, total, warmup, 1.0));
    }

    const double las = validation_las(model, valid_prep);
    result.valid_las_by_epoch.push_back(las);
    if (las > best) {
      best = las;
      best_epoch = epoch;
      best_params = model.params;
      if (ft) best_encoder = model.encoder.params;
    } else if (epoch - best_epoch >= cfg.patience) {
      break;
    }
  }

  model.params = std::move(best_params);
  model.rebind_mix();
  if (ft) model.encoder.params = std::move(best_encoder);
  result.best_epoch = best_epoch;
  result.best_las = best;
  return result;
}

}  // namespace lapkit
