#include "cascalign/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include <json.hpp>

#include "cascalign/errors.hpp"
#include "cascalign/rng.hpp"

namespace cascalign {

using json = nlohmann::ordered_json;

namespace {

// Generator constants, fixed so idf statistics and separability are reproducible.
constexpr double kConceptScale = 3.0;  // norm of each latent concept vector
constexpr double kFrameNoise = 0.2;    // amplitude of non-planted frames
constexpr int kMaxFrames = 8;

[[noreturn]] void parse_fail(size_t line_no, const std::string& what) {
  throw DataError("corpus parse error at line " + std::to_string(line_no) + ": " + what);
}

CorpusRecord record_from_json(const json& j, size_t line_no) {
  CorpusRecord rec;
  if (!j.is_object()) parse_fail(line_no, "record is not an object");
  if (!j.contains("id") || !j["id"].is_string()) parse_fail(line_no, "missing string field 'id'");
  rec.id = j["id"].get<std::string>();

  if (!j.contains("video_features") || !j["video_features"].is_array())
    parse_fail(line_no, "missing array field 'video_features'");
  for (const auto& row : j["video_features"]) {
    if (!row.is_array()) parse_fail(line_no, "'video_features' rows must be arrays");
    std::vector<real> r;
    r.reserve(row.size());
    for (const auto& v : row) {
      if (!v.is_number()) parse_fail(line_no, "'video_features' entries must be numbers");
      r.push_back(v.get<real>());
    }
    rec.video_features.push_back(std::move(r));
  }
  if (rec.video_features.empty()) parse_fail(line_no, "'video_features' must have at least one frame");
  const size_t width = rec.video_features[0].size();
  for (const auto& row : rec.video_features) {
    if (row.size() != width) parse_fail(line_no, "'video_features' rows have inconsistent widths");
    for (real v : row) {
      if (!std::isfinite(static_cast<double>(v)))
        parse_fail(line_no, "'video_features' contains a non-finite value");
    }
  }

  if (!j.contains("tokens") || !j["tokens"].is_array())
    parse_fail(line_no, "missing array field 'tokens'");
  int prev_word_id = -1;
  for (const auto& t : j["tokens"]) {
    if (!t.is_object()) parse_fail(line_no, "'tokens' entries must be objects");
    for (const char* field : {"text", "pos"}) {
      if (!t.contains(field) || !t[field].is_string())
        parse_fail(line_no, std::string("token missing string field '") + field + "'");
    }
    if (!t.contains("word_id") || !t["word_id"].is_number_integer())
      parse_fail(line_no, "token missing integer field 'word_id'");
    TaggedToken tok{t["text"].get<std::string>(), t["pos"].get<std::string>(),
                    t["word_id"].get<int>()};
    if (tok.word_id < prev_word_id) parse_fail(line_no, "'word_id' values must be nondecreasing");
    prev_word_id = tok.word_id;
    rec.tokens.push_back(std::move(tok));
  }
  return rec;
}

json record_to_json(const CorpusRecord& rec) {
  json j;
  j["id"] = rec.id;
  j["video_features"] = rec.video_features;
  json toks = json::array();
  for (const auto& t : rec.tokens) {
    toks.push_back({{"text", t.text}, {"pos", t.pos}, {"word_id", t.word_id}});
  }
  j["tokens"] = std::move(toks);
  return j;
}

}  // namespace

Tensor CorpusRecord::features_tensor() const {
  const int m = frame_count();
  const int d = feature_dim();
  std::vector<real> data;
  data.reserve(static_cast<size_t>(m) * d);
  for (const auto& row : video_features) data.insert(data.end(), row.begin(), row.end());
  return Tensor::from_data({m, d}, std::move(data));
}

std::vector<CorpusRecord> load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus file: " + path);
  std::vector<CorpusRecord> records;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      parse_fail(line_no, e.what());
    }
    records.push_back(record_from_json(j, line_no));
  }
  return records;
}

std::string record_to_json_line(const CorpusRecord& record) {
  return record_to_json(record).dump();
}

void save_corpus(const std::string& path, const std::vector<CorpusRecord>& records) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open corpus file for writing: " + path);
  for (const auto& rec : records) out << record_to_json_line(rec) << "\n";
}

std::vector<VocabWord> SyntheticSpec::default_vocab() {
  return {
      {"stir", "VERB"},  {"soup", "NOUN"},  {"chop", "VERB"},  {"onion", "NOUN"},
      {"pour", "VERB"},  {"oil", "NOUN"},   {"bake", "VERB"},  {"dough", "NOUN"},
      {"slice", "VERB"}, {"bread", "NOUN"}, {"whisk", "VERB"}, {"egg", "NOUN"},
      {"grill", "VERB"}, {"corn", "NOUN"},  {"boil", "VERB"},  {"rice", "NOUN"},
      {"fry", "VERB"},   {"fish", "NOUN"},  {"peel", "VERB"},  {"apple", "NOUN"},
      {"mix", "VERB"},   {"salad", "NOUN"}, {"toast", "VERB"}, {"cheese", "NOUN"},
      {"the", "DET"},    {"a", "DET"},      {"to", "ADP"},     {"in", "ADP"},
      {"on", "ADP"},     {"with", "ADP"},
  };
}

void SyntheticSpec::validate() const {
  if (num_pairs < 1) throw ConfigError("synthetic spec: num_pairs must be positive");
  if (d_video_in < 1) throw ConfigError("synthetic spec: d_video_in must be positive");
  if (noise_sigma < 0) throw ConfigError("synthetic spec: noise_sigma must be nonnegative");
  const auto v = vocab.empty() ? default_vocab() : vocab;
  int content = 0, filler = 0;
  for (const auto& w : v) {
    if (w.pos == "NOUN" || w.pos == "VERB") ++content;
    if (w.pos == "DET" || w.pos == "ADP") ++filler;
  }
  if (concepts < 1 || concepts > content)
    throw ConfigError("synthetic spec: concepts must be in [1, #noun/verb words]");
  if (filler < 1) throw ConfigError("synthetic spec: vocab needs at least one DET/ADP filler");
  // distinct concept sets of size 1..3 must be able to cover the corpus
  const double c = concepts;
  const double total_sets = c + c * (c - 1) / 2.0 + c * (c - 1) * (c - 2) / 6.0;
  if (static_cast<double>(num_pairs) > total_sets)
    throw ConfigError("synthetic spec: too few concepts for " + std::to_string(num_pairs) +
                      " distinct concept sets");
}

std::vector<std::vector<real>> synthetic_concept_vectors(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng = Rng(spec.seed).fork(0x636f6e63);  // concept stream
  std::vector<std::vector<real>> vectors;
  for (int c = 0; c < spec.concepts; ++c) {
    std::vector<real> v(static_cast<size_t>(spec.d_video_in));
    double norm2 = 0;
    for (real& x : v) {
      x = static_cast<real>(rng.normal());
      norm2 += static_cast<double>(x) * static_cast<double>(x);
    }
    const real scale = static_cast<real>(kConceptScale / std::sqrt(std::max(norm2, 1e-12)));
    for (real& x : v) x *= scale;
    vectors.push_back(std::move(v));
  }
  return vectors;
}

std::vector<CorpusRecord> generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const std::vector<VocabWord> vocab = spec.vocab.empty() ? SyntheticSpec::default_vocab() : spec.vocab;
  std::vector<VocabWord> content, fillers;
  for (const auto& w : vocab) {
    if ((w.pos == "NOUN" || w.pos == "VERB") && static_cast<int>(content.size()) < spec.concepts)
      content.push_back(w);
    else if (w.pos == "DET" || w.pos == "ADP")
      fillers.push_back(w);
  }

  const auto concepts = synthetic_concept_vectors(spec);
  Rng rng = Rng(spec.seed).fork(0x64617461);  // data stream

  std::set<std::vector<int>> used_sets;
  std::vector<CorpusRecord> records;
  records.reserve(static_cast<size_t>(spec.num_pairs));
  const long max_attempts = 1000L * spec.num_pairs + 1000L;
  long attempts = 0;

  for (int r = 0; r < spec.num_pairs; ++r) {
    std::vector<int> chosen;
    while (true) {
      if (++attempts > max_attempts)
        throw ConfigError("synthetic generator: could not find enough distinct concept sets");
      const int n_c = 1 + static_cast<int>(rng.uniform_int(3));
      chosen = rng.sample_without_replacement(spec.concepts, n_c);
      std::vector<int> key = chosen;
      std::sort(key.begin(), key.end());
      if (used_sets.insert(key).second) break;
    }
    const int n_c = static_cast<int>(chosen.size());

    CorpusRecord rec;
    {
      std::ostringstream id;
      id << "synth-" << std::setw(5) << std::setfill('0') << r;
      rec.id = id.str();
    }

    const int m = n_c + 1 + static_cast<int>(rng.uniform_int(kMaxFrames - n_c));
    rec.video_features.assign(static_cast<size_t>(m),
                              std::vector<real>(static_cast<size_t>(spec.d_video_in)));
    for (auto& frame : rec.video_features)
      for (real& x : frame) x = static_cast<real>(kFrameNoise * rng.normal());
    const std::vector<int> slots = rng.sample_without_replacement(m, n_c);
    for (int k = 0; k < n_c; ++k) {
      auto& frame = rec.video_features[static_cast<size_t>(slots[static_cast<size_t>(k)])];
      const auto& u = concepts[static_cast<size_t>(chosen[static_cast<size_t>(k)])];
      for (int j = 0; j < spec.d_video_in; ++j)
        frame[static_cast<size_t>(j)] =
            u[static_cast<size_t>(j)] + static_cast<real>(spec.noise_sigma * rng.normal());
    }

    int word_id = 0;
    for (int k = 0; k < n_c; ++k) {
      const VocabWord& filler = fillers[rng.uniform_int(fillers.size())];
      rec.tokens.push_back({filler.word, filler.pos, word_id++});
      const VocabWord& cw = content[static_cast<size_t>(chosen[static_cast<size_t>(k)])];
      rec.tokens.push_back({cw.word, cw.pos, word_id++});
    }
    records.push_back(std::move(rec));
  }
  return records;
}

}  // namespace cascalign
