#pragma once

// Binary run checkpoints: the mixture (config, every expert with optimizer
// state), the memory buffer and the training RNG. Reals are stored as raw
// little-endian IEEE-754 doubles so a round trip is bit-exact.

#include <filesystem>
#include <string>

#include "emm/memory.hpp"
#include "emm/mixture.hpp"
#include "emm/rng.hpp"

namespace emm {

struct Checkpoint {
  MixtureModel model;
  MemoryBuffer buffer;
  Rng rng;
};

std::string encode_checkpoint(const MixtureModel& model, const MemoryBuffer& buffer,
                              const Rng& rng);

// Throws FormatError (with byte offset) on malformed input.
Checkpoint decode_checkpoint(const std::string& bytes);

// IO failures raise IoError naming the path.
void save_checkpoint(const std::filesystem::path& path, const MixtureModel& model,
                     const MemoryBuffer& buffer, const Rng& rng);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace emm
