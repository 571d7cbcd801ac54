#include "lapkit/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace lapkit {

PretrainMode pretrain_mode_from_string(const std::string& s) {
  if (s == "base") return PretrainMode::kBase;
  if (s == "lapt") return PretrainMode::kLapt;
  if (s == "va") return PretrainMode::kVa;
  if (s == "tva") return PretrainMode::kTva;
  throw std::invalid_argument("unknown pretraining mode: " + s);
}

std::string to_string(PretrainMode mode) {
  switch (mode) {
    case PretrainMode::kBase: return "base";
    case PretrainMode::kLapt: return "lapt";
    case PretrainMode::kVa: return "va";
    case PretrainMode::kTva: return "tva";
  }
  return "?";
}

AdamOptimizer::AdamOptimizer(std::vector<ParamGroup> groups,
                             std::vector<RowOverride> overrides, double beta1,
                             double beta2, double eps, double clip_norm)
    : groups_(std::move(groups)),
      overrides_(std::move(overrides)),
      beta1_(beta1),
      beta2_(beta2),
      eps_(eps),
      clip_norm_(clip_norm) {
  std::set<const Parameter*> seen;
  for (const ParamGroup& g : groups_)
    for (const Parameter* p : g.params)
      if (!seen.insert(p).second)
        throw std::invalid_argument("parameter in more than one group: " +
                                    p->name);
  for (const RowOverride& o : overrides_) {
    if (!seen.count(o.param))
      throw std::invalid_argument("row override targets unknown parameter");
    for (int r : o.rows)
      if (r < 0 || r >= o.param->value.rows())
        throw std::invalid_argument("row override index out of range");
  }
}

void AdamOptimizer::zero_grad() {
  for (ParamGroup& g : groups_)
    for (Parameter* p : g.params) p->zero_grad();
}

void AdamOptimizer::step(double schedule_scale) {
  double sq_norm = 0.0;
  for (ParamGroup& g : groups_)
    for (Parameter* p : g.params) sq_norm += p->grad.squaredNorm();
  last_grad_norm_ = std::sqrt(sq_norm);
  const double clip_scale =
      clip_norm_ > 0.0 && last_grad_norm_ > clip_norm_
          ? clip_norm_ / last_grad_norm_
          : 1.0;

  for (ParamGroup& g : groups_) {
    for (Parameter* p : g.params) {
      const long t = ++p->adam_t;
      const Mat grad = p->grad * clip_scale;
      p->adam_m = beta1_ * p->adam_m + (1.0 - beta1_) * grad;
      p->adam_v =
          (beta2_ * p->adam_v.array() + (1.0 - beta2_) * grad.array().square())
              .matrix();
      const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t));
      const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t));
      const Mat direction =
          ((p->adam_m.array() / bc1) /
           ((p->adam_v.array() / bc2).sqrt() + eps_))
              .matrix();
      const RowOverride* ov = nullptr;
      for (const RowOverride& o : overrides_)
        if (o.param == p) ov = &o;
      if (!ov) {
        p->value -= (g.lr * schedule_scale) * direction;
      } else {
        std::vector<double> row_lr(p->value.rows(), g.lr);
        for (int r : ov->rows) row_lr[r] = ov->lr;
        for (Eigen::Index r = 0; r < p->value.rows(); ++r)
          p->value.row(r) -= (row_lr[r] * schedule_scale) * direction.row(r);
      }
    }
  }
}

double pretrain_lr(long step, long warmup_steps, long total_steps, double peak) {
  if (step <= 0) return 0.0;
  if (warmup_steps > 0 && step <= warmup_steps)
    return peak * static_cast<double>(step) /
           static_cast<double>(warmup_steps);
  if (step >= total_steps) return 0.0;
  const long span = std::max<long>(1, total_steps - warmup_steps);
  return peak * static_cast<double>(total_steps - step) /
         static_cast<double>(span);
}

std::pair<std::vector<ParamGroup>, std::vector<RowOverride>> make_param_groups(
    EncoderModel& model, PretrainMode mode, const PretrainConfig& config) {
  if ((mode == PretrainMode::kVa || mode == PretrainMode::kTva) &&
      model.new_slot_ids.empty())
    throw std::invalid_argument(to_string(mode) +
                                " requires augmented embedding rows");
  ParamGroup group;
  group.lr = config.lr;
  for (Parameter* p : model.params.all())
    if (p->trainable) group.params.push_back(p);
  std::vector<RowOverride> overrides;
  if (mode == PretrainMode::kTva)
    overrides.push_back(RowOverride{&model.piece_embeddings(),
                                    model.new_slot_ids, config.tiered_lr});
  return {{std::move(group)}, std::move(overrides)};
}

void initialize_new_embeddings(EncoderModel& model,
                               const std::vector<int>& new_slot_ids,
                               std::uint64_t seed) {
  Parameter& emb = model.piece_embeddings();
  Rng rng(seed);
  for (int r : new_slot_ids) {
    if (r < 0 || r >= emb.value.rows())
      throw std::invalid_argument("embedding row out of range: " +
                                  std::to_string(r));
    for (Eigen::Index j = 0; j < emb.value.cols(); ++j)
      emb.value(r, j) = rng.truncated_normal(0.0, 0.02);
  }
  model.new_slot_ids = new_slot_ids;
}

PretrainResult train_mlm(
    EncoderModel& model, const std::vector<PretrainingInstance>& instances,
    PretrainMode mode, const PretrainConfig& config,
    const std::function<void(int epoch, const EncoderModel&)>& on_checkpoint) {
  if (instances.empty())
    throw std::invalid_argument("cannot pretrain on zero instances");
  if (config.epochs_grid.empty())
    throw std::invalid_argument("empty epoch grid");

  auto [groups, overrides] = make_param_groups(model, mode, config);
  for (ParamGroup& g : groups)
    for (Parameter* p : g.params) p->reset_optimizer_state();
  AdamOptimizer opt(std::move(groups), std::move(overrides), config.beta1,
                    config.beta2, 1e-8, config.clip_norm);

  const int max_epochs =
      *std::max_element(config.epochs_grid.begin(), config.epochs_grid.end());
  const long n = static_cast<long>(instances.size());
  const long steps_per_epoch = (n + config.batch_size - 1) / config.batch_size;
  const long total_steps = steps_per_epoch * max_epochs;
  const std::set<int> grid(config.epochs_grid.begin(),
                           config.epochs_grid.end());

  PretrainResult result;
  long step = 0;
  std::vector<std::size_t> order(instances.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 1; epoch <= max_epochs; ++epoch) {
    Rng shuffle_rng(
        derive_seed(config.seed, 0x5eedULL, static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle_indices(order);
    double epoch_loss = 0.0;
    long epoch_batches = 0;
    for (long start = 0; start < n; start += config.batch_size) {
      const long end = std::min<long>(n, start + config.batch_size);
      Tape tape;
      Rng drop_rng(derive_seed(config.seed, 0xd409u, static_cast<std::uint64_t>(step)));
      std::vector<Var> logits;
      std::vector<std::vector<int>> labels;
      for (long b = start; b < end; ++b) {
        const PretrainingInstance& inst = instances[order[b]];
        auto acts = encoder_forward(tape, inst, model, true, drop_rng);
        if (!acts.mlm_logits) continue;
        logits.push_back(acts.mlm_logits);
        labels.push_back(inst.masked_labels);
      }
      Var loss = mlm_loss(tape, logits, labels);
      const double loss_value = loss.scalar();
      if (!std::isfinite(loss_value))
        throw std::runtime_error(
            "non-finite pretraining loss at step " + std::to_string(step + 1) +
            " (epoch " + std::to_string(epoch) + ")");
      tape.backward(loss);
      ++step;
      opt.step(pretrain_lr(step, config.warmup_steps, total_steps, 1.0));
      opt.zero_grad();
      result.step_losses.push_back(loss_value);
      epoch_loss += loss_value;
      ++epoch_batches;
    }
    result.epoch_mean_losses.push_back(epoch_loss /
                                       std::max<long>(1, epoch_batches));
    if (grid.count(epoch) && on_checkpoint) on_checkpoint(epoch, model);
  }
  return result;
}

}  // namespace lapkit
