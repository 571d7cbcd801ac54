#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "lapkit/conllu.hpp"
#include "lapkit/corpus.hpp"
#include "lapkit/experiment.hpp"
#include "lapkit/synthlang.hpp"

using namespace lapkit;
namespace fs = std::filesystem;

TEST_CASE("run config sampling stays inside the bounds") {
  const RunConfigBounds b;
  const auto configs = sample_run_configs(b, 50, 123);
  REQUIRE(configs.size() == 50);
  for (const RunConfig& c : configs) {
    CHECK(c.adam_beta1 >= b.beta1_lo);
    CHECK(c.adam_beta1 <= b.beta1_hi);
    CHECK(c.adam_beta2 >= b.beta2_lo);
    CHECK(c.adam_beta2 <= b.beta2_hi);
    CHECK(c.grad_norm_clip >= b.clip_lo);
    CHECK(c.grad_norm_clip <= b.clip_hi);
    CHECK(c.env_seed <= b.seed_hi);
    CHECK(c.numeric_seed <= b.seed_hi);
    CHECK(c.model_seed <= b.seed_hi);
  }
  // The draws actually explore the ranges.
  const auto minmax = std::minmax_element(
      configs.begin(), configs.end(),
      [](const RunConfig& a, const RunConfig& c) {
        return a.grad_norm_clip < c.grad_norm_clip;
      });
  CHECK(minmax.second->grad_norm_clip - minmax.first->grad_norm_clip > 2.0);
}

TEST_CASE("run config sampling is deterministic in the master seed") {
  const RunConfigBounds b;
  const auto a = sample_run_configs(b, 5, 7);
  const auto c = sample_run_configs(b, 5, 7);
  const auto d = sample_run_configs(b, 5, 8);
  REQUIRE(a.size() == c.size());
  bool any_diff = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].adam_beta1 == c[i].adam_beta1);
    CHECK(a[i].adam_beta2 == c[i].adam_beta2);
    CHECK(a[i].grad_norm_clip == c[i].grad_norm_clip);
    CHECK(a[i].env_seed == c[i].env_seed);
    CHECK(a[i].numeric_seed == c[i].numeric_seed);
    CHECK(a[i].model_seed == c[i].model_seed);
    any_diff = any_diff || a[i].adam_beta1 != d[i].adam_beta1 ||
               a[i].env_seed != d[i].env_seed;
  }
  CHECK(any_diff);
  CHECK_THROWS_AS(sample_run_configs(b, 0, 1), std::invalid_argument);
}

TEST_CASE("pretrain epoch selection takes the best mean, ties to smallest") {
  const std::vector<int> grid = {1, 5, 10, 15, 20};
  // Column means: 70, 72, 71, 69, 68 -> epoch 5.
  const std::vector<std::vector<double>> las = {
      {69, 71, 70, 68, 67}, {70, 72, 71, 69, 68}, {71, 73, 72, 70, 69}};
  CHECK(select_pretrain_epoch(las, grid) == 5);

  // Exact tie between epochs 5 and 10 -> 5.
  const std::vector<std::vector<double>> tied = {{60, 70, 70, 50, 40}};
  CHECK(select_pretrain_epoch(tied, grid) == 5);

  // All equal -> the smallest epoch.
  const std::vector<std::vector<double>> flat = {{55, 55, 55, 55, 55},
                                                 {55, 55, 55, 55, 55}};
  CHECK(select_pretrain_epoch(flat, grid) == 1);

  // Incomplete grid rows are an error, as are malformed grids.
  CHECK_THROWS_AS(select_pretrain_epoch({{70, 71}}, grid),
                  std::invalid_argument);
  CHECK_THROWS_AS(select_pretrain_epoch({}, grid), std::invalid_argument);
  CHECK_THROWS_AS(select_pretrain_epoch({{1}}, {}), std::invalid_argument);
  CHECK_THROWS_AS(select_pretrain_epoch({{1, 2}}, {5, 1}),
                  std::invalid_argument);
  CHECK_THROWS_AS(select_pretrain_epoch({{1, 2}}, {5, 5}),
                  std::invalid_argument);
}

TEST_CASE("aggregation over five runs: mean and sample standard deviation") {
  const auto [mean, sd] = aggregate_results({68, 69, 70, 71, 72});
  CHECK(mean == doctest::Approx(70.0).epsilon(1e-12));
  CHECK(sd == doctest::Approx(std::sqrt(2.5)).epsilon(1e-12));

  // Order independent.
  const auto [mean2, sd2] = aggregate_results({72, 68, 71, 69, 70});
  CHECK(mean2 == mean);
  CHECK(sd2 == doctest::Approx(sd).epsilon(1e-12));

  const auto [mean3, sd3] = aggregate_results({70, 70, 70, 70, 70});
  CHECK(mean3 == 70.0);
  CHECK(sd3 == 0.0);

  CHECK_THROWS_AS(aggregate_results({1, 2, 3, 4}), std::invalid_argument);
  CHECK_THROWS_AS(aggregate_results({1, 2, 3, 4, 5, 6}),
                  std::invalid_argument);
}

TEST_CASE("relative error reduction matches the published table rows") {
  CHECK(std::abs(relative_error_reduction(67.06, 79.88) - 38.9) < 0.05);
  CHECK(std::abs(relative_error_reduction(68.19, 73.03) - 15.2) < 0.05);
  CHECK(std::abs(relative_error_reduction(74.01, 76.88) - 11.0) < 0.05);
  CHECK(std::abs(relative_error_reduction(62.96, 64.67) - 4.6) < 0.05);

  CHECK(relative_error_reduction(50.0, 50.0) == 0.0);
  CHECK(relative_error_reduction(0.0, 50.0) == doctest::Approx(50.0));
  CHECK_THROWS_AS(relative_error_reduction(100.0, 99.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(relative_error_reduction(-0.5, 10.0),
                  std::invalid_argument);
}

TEST_CASE("method labels") {
  CHECK(method_label(PretrainMode::kBase) == "baseline");
  CHECK(method_label(PretrainMode::kLapt) == "lapt");
  CHECK(method_label(PretrainMode::kVa) == "va");
  CHECK(method_label(PretrainMode::kTva) == "tva");
}

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

}  // namespace

TEST_CASE("manifest loading resolves paths and validates") {
  const fs::path dir = fresh_dir("lapkit_manifest_test");
  write_text(dir / "base.txt", "a b c\n");
  const std::string manifest = R"({
    "out_dir": "out",
    "corpora": {"base": "base.txt", "target": "sub/target.txt"},
    "treebank": {"train": "tb/train.conllu", "valid": "tb/valid.conllu",
                 "test": "tb/test.conllu"},
    "vocab": {"size": 300, "augment_size": 250, "slots": 31},
    "encoder": {"layers": 2, "hidden": 16, "heads": 2, "ff": 32},
    "base_pretrain": {"epochs": 3, "dup": 4},
    "adapt_pretrain": {"grid": [2, 6], "lr": 3e-5},
    "parser": {"max_epochs": 7, "batch": 2},
    "methods": [{"method": "baseline", "modes": ["frozen", "ft"]},
                {"method": "va", "modes": ["frozen"]}],
    "runs": 3,
    "master_seed": 11
  })";
  write_text(dir / "exp.json", manifest);

  const ExperimentManifest m = load_manifest((dir / "exp.json").string());
  CHECK(m.out_dir == (dir / "out").string());
  CHECK(m.base_corpus == (dir / "base.txt").string());
  CHECK(m.target_corpus == (dir / "sub" / "target.txt").string());
  CHECK(m.treebank_train == (dir / "tb" / "train.conllu").string());
  CHECK(m.vocab_size == 300);
  CHECK(m.augment_vocab_size == 250);
  CHECK(m.augment_slots == 31);
  CHECK(m.encoder.n_layers == 2);
  CHECK(m.encoder.hidden == 16);
  CHECK(m.base_pretrain.epochs_grid == std::vector<int>{3});
  CHECK(m.base_dup == 4);
  CHECK(m.adapt_pretrain.epochs_grid == std::vector<int>{2, 6});
  CHECK(m.adapt_pretrain.lr == doctest::Approx(3e-5));
  CHECK(m.parser.max_epochs == 7);
  CHECK(m.parser.batch_size == 2);
  REQUIRE(m.methods.size() == 2);
  CHECK(m.methods[0].method == PretrainMode::kBase);
  CHECK(m.methods[0].modes ==
        std::vector<RepresentationMode>{RepresentationMode::kFrozen,
                                        RepresentationMode::kFt});
  CHECK(m.methods[1].method == PretrainMode::kVa);
  CHECK(m.n_runs == 3);
  CHECK(m.master_seed == 11);

  // Missing keys are reported by name.
  write_text(dir / "broken.json", R"({"corpora": {"base": "base.txt"}})");
  CHECK_THROWS_WITH_AS(load_manifest((dir / "broken.json").string()),
                       doctest::Contains("out_dir"), std::runtime_error);

  // Target-dependent methods demand a target corpus.
  const std::string no_target = R"({
    "out_dir": "out",
    "corpora": {"base": "base.txt"},
    "treebank": {"train": "a", "valid": "b", "test": "c"},
    "methods": [{"method": "lapt", "modes": ["frozen"]}]
  })";
  write_text(dir / "no_target.json", no_target);
  CHECK_THROWS_WITH_AS(load_manifest((dir / "no_target.json").string()),
                       doctest::Contains("target"), std::runtime_error);
  CHECK_THROWS_AS(load_manifest((dir / "absent.json").string()),
                  std::runtime_error);
}

TEST_CASE("pipeline end to end at miniature scale, rerun hits the cache") {
  const fs::path dir = fresh_dir("lapkit_pipeline_test");

  const auto base = synth_base_corpus(60, 21);
  const SynthTarget target = synth_target_language(40, 24, true, 22);
  write_sentence_file((dir / "base.txt").string(), base);
  write_sentence_file((dir / "target.txt").string(), target.corpus);
  const TreebankSplit split = split_treebank(target.treebank, 0.6, 0.2, 0.2, 5);
  write_text(dir / "train.conllu", format_conllu(split.train));
  write_text(dir / "valid.conllu", format_conllu(split.valid));
  write_text(dir / "test.conllu", format_conllu(split.test));

  const std::string manifest = R"({
    "name": "mini",
    "out_dir": "out",
    "corpora": {"base": "base.txt", "target": "target.txt"},
    "treebank": {"train": "train.conllu", "valid": "valid.conllu",
                 "test": "test.conllu"},
    "vocab": {"size": 220, "augment_size": 180, "slots": 24},
    "encoder": {"layers": 1, "hidden": 8, "heads": 2, "ff": 16,
                "max_positions": 40},
    "base_pretrain": {"epochs": 1, "batch": 8, "warmup": 4, "dup": 1,
                      "max_seq": 40},
    "adapt_pretrain": {"grid": [1], "batch": 8, "warmup": 4, "dup": 1,
                       "max_seq": 40},
    "parser": {"arc_dim": 8, "label_dim": 8, "bilstm_layers": 1,
               "bilstm_hidden": 8, "max_epochs": 2, "patience": 2,
               "batch": 8, "warmup_epochs": 1},
    "methods": [{"method": "baseline", "modes": ["frozen"]},
                {"method": "va", "modes": ["frozen"]}],
    "runs": 2,
    "master_seed": 3,
    "threads": 1
  })";
  write_text(dir / "exp.json", manifest);

  const ExperimentOutcome first = run_pipeline((dir / "exp.json").string());
  REQUIRE(first.methods.size() == 2);
  const MethodOutcome& b = first.methods[0];
  const MethodOutcome& v = first.methods[1];
  CHECK(b.method == PretrainMode::kBase);
  CHECK(b.epoch_grid == std::vector<int>{0});
  CHECK(b.selected_epoch == 0);
  CHECK(v.method == PretrainMode::kVa);
  CHECK(v.epoch_grid == std::vector<int>{1});
  CHECK(v.selected_epoch == 1);
  for (const MethodOutcome& o : first.methods) {
    REQUIRE(o.runs.size() == 2);
    for (const RunRecord& r : o.runs) {
      REQUIRE(r.valid_las.size() == o.epoch_grid.size());
      REQUIRE(r.test_las.size() == o.epoch_grid.size());
      for (double s : r.test_las) {
        CHECK(s >= 0.0);
        CHECK(s <= 100.0);
      }
    }
    CHECK(std::isfinite(o.mean_las));
    CHECK(o.std_las >= 0.0);
  }

  // Artifacts: cached checkpoints, per-cell records, rendered table.
  CHECK(fs::exists(dir / "out" / "results.txt"));
  CHECK(fs::exists(dir / "out" / "records" / "baseline-frozen.json"));
  CHECK(fs::exists(dir / "out" / "records" / "va-frozen.json"));
  std::size_t ckpts = 0;
  for (const auto& e : fs::directory_iterator(dir / "out" / "cache"))
    ckpts += e.path().extension() == ".ckpt";
  CHECK(ckpts == 2);  // base encoder + one adapted grid epoch

  // Rerunning the same manifest is a pure cache hit with identical output.
  const ExperimentOutcome second = run_pipeline((dir / "exp.json").string());
  REQUIRE(second.methods.size() == first.methods.size());
  for (std::size_t i = 0; i < first.methods.size(); ++i) {
    CHECK(second.methods[i].mean_las == first.methods[i].mean_las);
    CHECK(second.methods[i].std_las == first.methods[i].std_las);
    CHECK(second.methods[i].mean_uas == first.methods[i].mean_uas);
    CHECK(second.methods[i].selected_epoch == first.methods[i].selected_epoch);
    REQUIRE(second.methods[i].runs.size() == first.methods[i].runs.size());
    for (std::size_t r = 0; r < first.methods[i].runs.size(); ++r)
      CHECK(second.methods[i].runs[r].valid_las ==
            first.methods[i].runs[r].valid_las);
  }

  const std::string report = render_report((dir / "out").string());
  CHECK(report.find("baseline") != std::string::npos);
  CHECK(report.find("va") != std::string::npos);
  CHECK(report.find("relative error reduction") != std::string::npos);

  fs::remove_all(dir);
}
