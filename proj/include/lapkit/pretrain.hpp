#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lapkit/encoder.hpp"

namespace lapkit {

enum class PretrainMode { kBase, kLapt, kVa, kTva };

PretrainMode pretrain_mode_from_string(const std::string& s);
std::string to_string(PretrainMode mode);

struct ParamGroup {
  std::vector<Parameter*> params;
  double lr = 0.0;  // peak learning rate
};

// Per-row learning-rate override on one parameter (TVA: augmented
// embedding rows train faster than the rest of the network).
struct RowOverride {
  Parameter* param = nullptr;
  std::vector<int> rows;
  double lr = 0.0;
};

// Adam with bias correction. Gradients are clipped by their global norm
// across every group before each update. Step counts live on the
// parameters themselves so later-unfrozen parameters start at t=0.
class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<ParamGroup> groups,
                std::vector<RowOverride> overrides = {}, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8,
                double clip_norm = 1.0);

  // schedule_scale multiplies every group's peak rate (warmup/decay).
  void step(double schedule_scale);
  void zero_grad();
  double last_grad_norm() const { return last_grad_norm_; }
  const std::vector<ParamGroup>& groups() const { return groups_; }

 private:
  std::vector<ParamGroup> groups_;
  std::vector<RowOverride> overrides_;
  double beta1_, beta2_, eps_, clip_norm_;
  double last_grad_norm_ = 0.0;
};

// Linear warmup from 0 to peak over warmup_steps, then linear decay to 0
// at total_steps. Steps are 1-indexed update counts.
double pretrain_lr(long step, long warmup_steps, long total_steps, double peak);

struct PretrainConfig {
  double lr = 2e-5;
  double tiered_lr = 1e-4;
  long warmup_steps = 1000;
  int batch_size = 12;
  std::vector<int> epochs_grid = {1, 5, 10, 15, 20};
  double clip_norm = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  std::uint64_t seed = 0;
};

// LAPT/VA: one group, base rate. TVA: base rate everywhere plus the
// tiered-rate override on the augmented embedding rows.
std::pair<std::vector<ParamGroup>, std::vector<RowOverride>> make_param_groups(
    EncoderModel& model, PretrainMode mode, const PretrainConfig& config);

// Redraws the given embedding rows from N(0, 0.02^2) truncated at 2 sigma
// and records them as the model's new slots.
void initialize_new_embeddings(EncoderModel& model,
                               const std::vector<int>& new_slot_ids,
                               std::uint64_t seed);

struct PretrainResult {
  std::vector<double> step_losses;
  std::vector<double> epoch_mean_losses;
};

// MLM-only training over the grid's maximum epoch count; on_checkpoint
// fires at each grid epoch with the current model.
PretrainResult train_mlm(
    EncoderModel& model, const std::vector<PretrainingInstance>& instances,
    PretrainMode mode, const PretrainConfig& config,
    const std::function<void(int epoch, const EncoderModel&)>& on_checkpoint = {});

}  // namespace lapkit
