#include "lapkit/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <stdexcept>

namespace lapkit {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'L', 'P', 'K', 'T'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kKindEncoder = 1;
constexpr std::uint32_t kKindParser = 2;

class Writer {
 public:
  explicit Writer(const std::string& path)
      : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw std::runtime_error("cannot open " + path + " for writing");
  }
  void bytes(const void* p, std::size_t n) {
    out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    if (!out_) throw std::runtime_error("write failed: " + path_);
  }
  void u8(std::uint8_t v) { bytes(&v, 1); }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void i32(std::int32_t v) { bytes(&v, 4); }
  void u64(std::uint64_t v) { bytes(&v, 8); }
  void f64(double v) { bytes(&v, 8); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }

 private:
  std::string path_;
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::string& path)
      : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw std::runtime_error("cannot open " + path);
  }
  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (in_.gcount() != static_cast<std::streamsize>(n))
      throw std::runtime_error("truncated checkpoint: " + path_);
  }
  std::uint8_t u8() { std::uint8_t v; bytes(&v, 1); return v; }
  std::uint32_t u32() { std::uint32_t v; bytes(&v, 4); return v; }
  std::int32_t i32() { std::int32_t v; bytes(&v, 4); return v; }
  std::uint64_t u64() { std::uint64_t v; bytes(&v, 8); return v; }
  double f64() { double v; bytes(&v, 8); return v; }
  std::string str() {
    const std::uint32_t n = u32();
    if (n > (1u << 24)) throw std::runtime_error("corrupt string length: " + path_);
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }

 private:
  std::string path_;
  std::ifstream in_;
};

void write_header(Writer& w, std::uint32_t kind) {
  w.bytes(kMagic, 4);
  w.u32(kVersion);
  w.u32(kind);
}

void read_header(Reader& r, std::uint32_t expected_kind,
                 const std::string& path) {
  char magic[4];
  r.bytes(magic, 4);
  if (std::string(magic, 4) != std::string(kMagic, 4))
    throw std::runtime_error(path + " is not a checkpoint");
  const std::uint32_t version = r.u32();
  if (version != kVersion)
    throw std::runtime_error(path + ": unsupported checkpoint version " +
                             std::to_string(version));
  const std::uint32_t kind = r.u32();
  if (kind != expected_kind)
    throw std::runtime_error(path + ": wrong checkpoint kind");
}

void write_store(Writer& w, const ad::ParameterStore& store) {
  const std::vector<const ad::Parameter*> params = store.all();
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const ad::Parameter* p : params) {
    w.str(p->name);
    w.u64(static_cast<std::uint64_t>(p->value.rows()));
    w.u64(static_cast<std::uint64_t>(p->value.cols()));
    w.u8(p->trainable ? 1 : 0);
    w.bytes(p->value.data(),
            sizeof(double) * static_cast<std::size_t>(p->value.size()));
  }
}

ad::ParameterStore read_store(Reader& r) {
  ad::ParameterStore store;
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.str();
    const auto rows = static_cast<Eigen::Index>(r.u64());
    const auto cols = static_cast<Eigen::Index>(r.u64());
    const bool trainable = r.u8() != 0;
    ad::Parameter& p = store.add(name, rows, cols);
    p.trainable = trainable;
    r.bytes(p.value.data(),
            sizeof(double) * static_cast<std::size_t>(rows * cols));
  }
  return store;
}

void write_vocab(Writer& w, const Vocabulary& vocab) {
  w.u32(static_cast<std::uint32_t>(vocab.pieces().size()));
  for (const std::string& piece : vocab.pieces()) w.str(piece);
}

Vocabulary read_vocab(Reader& r) {
  const std::uint32_t count = r.u32();
  std::vector<std::string> pieces;
  pieces.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) pieces.push_back(r.str());
  return Vocabulary::from_pieces(std::move(pieces));
}

void write_encoder(Writer& w, const EncoderModel& model) {
  const EncoderConfig& c = model.config;
  w.i32(c.n_layers);
  w.i32(c.hidden);
  w.i32(c.n_heads);
  w.i32(c.ff_dim);
  w.i32(c.vocab_size);
  w.i32(c.max_positions);
  w.f64(c.dropout);
  w.u8(c.tie_mlm_head ? 1 : 0);
  w.u8(c.use_layer_norm ? 1 : 0);
  w.u32(static_cast<std::uint32_t>(model.new_slot_ids.size()));
  for (int id : model.new_slot_ids) w.i32(id);
  write_store(w, model.params);
}

EncoderModel read_encoder(Reader& r) {
  EncoderModel model;
  EncoderConfig& c = model.config;
  c.n_layers = r.i32();
  c.hidden = r.i32();
  c.n_heads = r.i32();
  c.ff_dim = r.i32();
  c.vocab_size = r.i32();
  c.max_positions = r.i32();
  c.dropout = r.f64();
  c.tie_mlm_head = r.u8() != 0;
  c.use_layer_norm = r.u8() != 0;
  const std::uint32_t n_slots = r.u32();
  for (std::uint32_t i = 0; i < n_slots; ++i)
    model.new_slot_ids.push_back(r.i32());
  model.params = read_store(r);
  return model;
}

void write_parser_config(Writer& w, const ParserConfig& c) {
  w.i32(c.arc_dim);
  w.i32(c.label_dim);
  w.i32(c.bilstm_layers);
  w.i32(c.bilstm_hidden);
  w.u8(c.bilstm_hidden_is_total ? 1 : 0);
  w.f64(c.input_dropout);
  w.f64(c.parser_dropout);
  w.f64(c.mix_layer_dropout);
  w.f64(c.parser_lr);
  w.f64(c.encoder_lr);
  w.i32(c.warmup_epochs);
  w.i32(c.max_epochs);
  w.i32(c.patience);
  w.i32(c.batch_size);
  w.f64(c.unfreeze_eta);
  w.str(to_string(c.mode));
}

ParserConfig read_parser_config(Reader& r) {
  ParserConfig c;
  c.arc_dim = r.i32();
  c.label_dim = r.i32();
  c.bilstm_layers = r.i32();
  c.bilstm_hidden = r.i32();
  c.bilstm_hidden_is_total = r.u8() != 0;
  c.input_dropout = r.f64();
  c.parser_dropout = r.f64();
  c.mix_layer_dropout = r.f64();
  c.parser_lr = r.f64();
  c.encoder_lr = r.f64();
  c.warmup_epochs = r.i32();
  c.max_epochs = r.i32();
  c.patience = r.i32();
  c.batch_size = r.i32();
  c.unfreeze_eta = r.f64();
  c.mode = representation_mode_from_string(r.str());
  return c;
}

}  // namespace

void save_encoder_checkpoint(const std::string& path,
                             const EncoderModel& model,
                             const Vocabulary& vocab) {
  if (vocab.size() != model.config.vocab_size)
    throw std::invalid_argument(
        "vocabulary size does not match the encoder's vocab_size");
  Writer w(path);
  write_header(w, kKindEncoder);
  write_encoder(w, model);
  write_vocab(w, vocab);
}

EncoderCheckpoint load_encoder_checkpoint(const std::string& path) {
  Reader r(path);
  read_header(r, kKindEncoder, path);
  EncoderCheckpoint ckpt{read_encoder(r), read_vocab(r)};
  if (ckpt.vocab.size() != ckpt.model.config.vocab_size)
    throw std::runtime_error(path + ": vocabulary does not match encoder");
  return ckpt;
}

void save_parser_checkpoint(const std::string& path,
                            const ParserModel& model) {
  Writer w(path);
  write_header(w, kKindParser);
  write_parser_config(w, model.config);
  w.u32(static_cast<std::uint32_t>(model.relations.size()));
  for (const std::string& rel : model.relations) w.str(rel);
  write_store(w, model.params);
  write_encoder(w, model.encoder);
  write_vocab(w, model.vocab);
}

ParserModel load_parser_checkpoint(const std::string& path) {
  Reader r(path);
  read_header(r, kKindParser, path);
  const ParserConfig config = read_parser_config(r);
  std::vector<std::string> relations;
  const std::uint32_t n_rel = r.u32();
  relations.reserve(n_rel);
  for (std::uint32_t i = 0; i < n_rel; ++i) relations.push_back(r.str());
  ad::ParameterStore params = read_store(r);
  EncoderModel encoder = read_encoder(r);
  Vocabulary vocab = read_vocab(r);
  ParserModel model{config,
                    std::move(encoder),
                    std::move(vocab),
                    std::move(relations),
                    std::move(params),
                    ScalarMix{}};
  model.rebind_mix();
  return model;
}

}  // namespace lapkit
