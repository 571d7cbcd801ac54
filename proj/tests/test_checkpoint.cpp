#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "lapkit/checkpoint.hpp"
#include "lapkit/encoder.hpp"
#include "lapkit/parser.hpp"
#include "lapkit/pretrain.hpp"
#include "lapkit/vocab.hpp"

using namespace lapkit;
namespace fs = std::filesystem;

namespace {

Vocabulary small_vocab() {
  return Vocabulary::build({"ab", "##ab", "##b", "a", "##a", "b", "c", "##c",
                            "d", "##d"});
}

EncoderConfig small_config(int vocab_size) {
  EncoderConfig cfg;
  cfg.n_layers = 2;
  cfg.hidden = 8;
  cfg.n_heads = 2;
  cfg.ff_dim = 12;
  cfg.max_positions = 16;
  cfg.vocab_size = vocab_size;
  return cfg;
}

bool stores_equal(const ad::ParameterStore& a, const ad::ParameterStore& b) {
  const auto pa = a.all();
  const auto pb = b.all();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (pa[i]->name != pb[i]->name) return false;
    if (pa[i]->trainable != pb[i]->trainable) return false;
    if (pa[i]->value.rows() != pb[i]->value.rows() ||
        pa[i]->value.cols() != pb[i]->value.cols())
      return false;
    if (!(pa[i]->value.array() == pb[i]->value.array()).all()) return false;
  }
  return true;
}

fs::path tmp(const std::string& name) {
  return fs::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("encoder checkpoints round-trip bit for bit") {
  const Vocabulary vocab = small_vocab();
  EncoderModel model =
      create_encoder(small_config(static_cast<int>(vocab.size())), 7);
  initialize_new_embeddings(model, {1, 2, 3}, 99);

  const auto path = tmp("lapkit_enc_ckpt.bin").string();
  save_encoder_checkpoint(path, model, vocab);
  const EncoderCheckpoint loaded = load_encoder_checkpoint(path);

  CHECK(loaded.model.config.n_layers == model.config.n_layers);
  CHECK(loaded.model.config.hidden == model.config.hidden);
  CHECK(loaded.model.config.n_heads == model.config.n_heads);
  CHECK(loaded.model.config.ff_dim == model.config.ff_dim);
  CHECK(loaded.model.config.max_positions == model.config.max_positions);
  CHECK(loaded.model.config.vocab_size == model.config.vocab_size);
  CHECK(loaded.model.new_slot_ids == model.new_slot_ids);
  CHECK(loaded.vocab.fingerprint() == vocab.fingerprint());
  CHECK(stores_equal(loaded.model.params, model.params));
  fs::remove(path);
}

TEST_CASE("parser checkpoints nest encoder and vocabulary") {
  const Vocabulary vocab = small_vocab();
  const EncoderModel enc =
      create_encoder(small_config(static_cast<int>(vocab.size())), 3);
  ParserConfig cfg;
  cfg.arc_dim = 4;
  cfg.label_dim = 3;
  cfg.bilstm_layers = 1;
  cfg.bilstm_hidden = 6;
  cfg.input_dropout = 0.0;
  cfg.parser_dropout = 0.0;
  cfg.mix_layer_dropout = 0.0;
  cfg.mode = RepresentationMode::kFt;
  ParserModel model = create_parser(enc, vocab, {"amod", "obj", "root"}, cfg, 5);

  const auto path = tmp("lapkit_parser_ckpt.bin").string();
  save_parser_checkpoint(path, model);
  ParserModel loaded = load_parser_checkpoint(path);

  CHECK(loaded.relations == model.relations);
  CHECK(loaded.config.arc_dim == cfg.arc_dim);
  CHECK(loaded.config.label_dim == cfg.label_dim);
  CHECK(loaded.config.bilstm_hidden == cfg.bilstm_hidden);
  CHECK(loaded.config.mode == RepresentationMode::kFt);
  CHECK(loaded.vocab.fingerprint() == vocab.fingerprint());
  CHECK(stores_equal(loaded.params, model.params));
  CHECK(stores_equal(loaded.encoder.params, model.encoder.params));

  // The reloaded parser predicts exactly like the original.
  const std::vector<std::string> tokens = {"ab", "cd", "b"};
  const DependencyTree before = predict_tree(model, tokens);
  const DependencyTree after = predict_tree(loaded, tokens);
  CHECK(before.heads == after.heads);
  CHECK(before.labels == after.labels);
  fs::remove(path);
}

TEST_CASE("checkpoint loading rejects garbage") {
  const auto missing = tmp("lapkit_ckpt_missing.bin").string();
  fs::remove(missing);
  CHECK_THROWS_AS(load_encoder_checkpoint(missing), std::runtime_error);

  const auto garbage = tmp("lapkit_ckpt_garbage.bin").string();
  {
    std::ofstream out(garbage, std::ios::binary);
    out << "definitely not a checkpoint";
  }
  CHECK_THROWS_AS(load_encoder_checkpoint(garbage), std::runtime_error);
  CHECK_THROWS_AS(load_parser_checkpoint(garbage), std::runtime_error);
  fs::remove(garbage);

  // An encoder checkpoint is not a parser checkpoint and vice versa.
  const Vocabulary vocab = small_vocab();
  const EncoderModel enc =
      create_encoder(small_config(static_cast<int>(vocab.size())), 1);
  const auto enc_path = tmp("lapkit_ckpt_kind.bin").string();
  save_encoder_checkpoint(enc_path, enc, vocab);
  CHECK_THROWS_AS(load_parser_checkpoint(enc_path), std::runtime_error);

  // Truncation is detected.
  const auto cut_path = tmp("lapkit_ckpt_cut.bin").string();
  {
    std::ifstream in(enc_path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
    std::ofstream out(cut_path, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
  }
  CHECK_THROWS_AS(load_encoder_checkpoint(cut_path), std::runtime_error);
  fs::remove(enc_path);
  fs::remove(cut_path);
}
