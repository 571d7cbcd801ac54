#pragma once

#include <string>

#include "lapkit/encoder.hpp"
#include "lapkit/parser.hpp"
#include "lapkit/vocab.hpp"

namespace lapkit {

// Self-contained binary checkpoints (magic + version + kind, then config,
// vocabulary and raw parameter tensors). Little-endian hosts only.

struct EncoderCheckpoint {
  EncoderModel model;
  Vocabulary vocab;
};

void save_encoder_checkpoint(const std::string& path,
                             const EncoderModel& model,
                             const Vocabulary& vocab);
EncoderCheckpoint load_encoder_checkpoint(const std::string& path);

// Parser checkpoints nest the encoder and vocabulary, so prediction needs
// nothing besides the file.
void save_parser_checkpoint(const std::string& path, const ParserModel& model);
ParserModel load_parser_checkpoint(const std::string& path);

}  // namespace lapkit
