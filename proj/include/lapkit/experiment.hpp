#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "lapkit/encoder.hpp"
#include "lapkit/parser.hpp"
#include "lapkit/pretrain.hpp"
#include "lapkit/run_config.hpp"

namespace lapkit {

// Hyperparameter bounds for the 5-seed variation protocol.
struct RunConfigBounds {
  double beta1_lo = 0.9, beta1_hi = 0.9999;
  double beta2_lo = 0.9, beta2_hi = 0.9999;
  double clip_lo = 1.0, clip_hi = 10.0;
  std::uint64_t seed_lo = 0, seed_hi = 100000;
};

// n configs drawn uniformly and independently per field; deterministic in
// master_seed.
std::vector<RunConfig> sample_run_configs(const RunConfigBounds& bounds, int n,
                                          std::uint64_t master_seed);

// Grid epoch with the highest mean validation LAS over the runs; ties go
// to the smallest epoch. validation_las is runs x grid.
int select_pretrain_epoch(
    const std::vector<std::vector<double>>& validation_las,
    const std::vector<int>& epoch_grid);

// (arithmetic mean, sample standard deviation) of exactly five scores.
std::pair<double, double> aggregate_results(
    const std::vector<double>& test_las);

// 100 * (new - base) / (100 - base); base must lie in [0, 100).
double relative_error_reduction(double base_las, double new_las);

// ---- manifest-driven pipeline ----

struct MethodSpec {
  PretrainMode method = PretrainMode::kBase;
  std::vector<RepresentationMode> modes;
};

// Parsed experiment manifest (JSON file; paths are resolved relative to
// the manifest's directory). See README for the schema.
struct ExperimentManifest {
  std::string name;
  std::string out_dir;
  std::string base_corpus;
  std::string target_corpus;
  std::string treebank_train, treebank_valid, treebank_test;
  int vocab_size = 2000;
  int augment_vocab_size = 1000;  // target vocab trained for slot selection
  int augment_slots = 99;         // unused slots to fill
  EncoderConfig encoder;
  PretrainConfig base_pretrain;  // epochs_grid holds the single final epoch
  int base_dup = 2;
  int base_max_seq = 64;
  PretrainConfig adapt_pretrain;  // epochs_grid is the checkpoint grid
  int adapt_dup = 3;
  int adapt_max_seq = 64;
  ParserConfig parser;
  std::vector<MethodSpec> methods;
  int n_runs = 5;
  std::uint64_t master_seed = 0;
  int threads = 0;  // 0 = hardware concurrency
};

ExperimentManifest load_manifest(const std::string& path);

struct RunRecord {
  RunConfig config;
  std::vector<double> valid_las;  // best validation LAS per grid epoch
  std::vector<double> test_las;   // test scores per grid epoch
  std::vector<double> test_uas;
  int retries = 0;  // non-finite-loss resamples that were needed
};

struct MethodOutcome {
  PretrainMode method = PretrainMode::kBase;
  RepresentationMode mode = RepresentationMode::kFrozen;
  std::vector<int> epoch_grid;  // {0} when no pretraining is involved
  std::vector<RunRecord> runs;
  int selected_epoch = 0;
  double mean_las = 0.0, std_las = 0.0, mean_uas = 0.0;
};

struct ExperimentOutcome {
  std::string out_dir;
  std::vector<MethodOutcome> methods;
};

// Executes corpus -> vocab -> augmentation -> pretraining -> parsing ->
// scoring, caching artifacts under <out_dir>/cache by content key and
// writing per-cell records under <out_dir>/records plus a rendered
// results table. Reruns with an unchanged manifest are served from cache.
ExperimentOutcome run_pipeline(const std::string& manifest_path);

// Renders the results table and the relative-error-reduction summary from
// the records under out_dir.
std::string render_report(const std::string& out_dir);

std::string method_label(PretrainMode mode);  // kBase prints as "baseline"

}  // namespace lapkit
