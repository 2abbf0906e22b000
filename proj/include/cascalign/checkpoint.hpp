#pragma once

#include <string>

#include "cascalign/encoders.hpp"
#include "cascalign/toi.hpp"

namespace cascalign {

inline constexpr int kCheckpointVersion = 1;

// Versioned JSON checkpoint: encoder config, vocabulary, the training-corpus
// idf table, and a flat name -> {shape, values} parameter map. Loading a
// mismatched version or parameter layout fails loudly.
void save_checkpoint(const std::string& path, const AlignmentModel& model, const IdfTable& idf);

struct LoadedCheckpoint {
  AlignmentModel model;
  IdfTable idf;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace cascalign
