#pragma once

#include <string>
#include <utility>
#include <vector>

#include "cascalign/tensor.hpp"
#include "cascalign/toi.hpp"

namespace cascalign {

// One video-text pair. Video features are raw (pre-extracted) frame vectors;
// tokens are the pre-tagged text without [CLS]/[SEP], which the encoder adds.
struct CorpusRecord {
  std::string id;
  std::vector<std::vector<real>> video_features;  // m rows of width d_video_in
  std::vector<TaggedToken> tokens;

  int frame_count() const { return static_cast<int>(video_features.size()); }
  int feature_dim() const {
    return video_features.empty() ? 0 : static_cast<int>(video_features[0].size());
  }
  Tensor features_tensor() const;
};

// JSONL, one record per line:
//   {"id": ..., "video_features": [[...], ...],
//    "tokens": [{"text": ..., "pos": ..., "word_id": ...}, ...]}
std::vector<CorpusRecord> load_corpus(const std::string& path);
void save_corpus(const std::string& path, const std::vector<CorpusRecord>& records);

std::string record_to_json_line(const CorpusRecord& record);

// A vocabulary entry for the synthetic generator: word plus its POS tag.
struct VocabWord {
  std::string word;
  std::string pos;
};

struct SyntheticSpec {
  int num_pairs = 100;
  int d_video_in = 16;
  std::vector<VocabWord> vocab;  // defaults to default_vocab() when empty
  int concepts = 20;
  double noise_sigma = 0.1;
  uint64_t seed = 1;

  // Content words available as planted concepts followed by DET/ADP fillers.
  static std::vector<VocabWord> default_vocab();
  void validate() const;
};

// Planted-alignment corpus: each record carries 1-3 latent concepts; the text
// names the concept words between fillers, and for each concept one designated
// frame equals the concept's latent vector plus N(0, noise_sigma²) noise while
// the remaining frames are low-amplitude noise. Concept sets are re-drawn until
// unique across the corpus so every record has exactly one correct partner.
std::vector<CorpusRecord> generate_synthetic(const SyntheticSpec& spec);

// The latent concept vectors the generator plants, for oracle-style tests.
std::vector<std::vector<real>> synthetic_concept_vectors(const SyntheticSpec& spec);

}  // namespace cascalign
