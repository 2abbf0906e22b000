#include "cascalign/checkpoint.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "cascalign/errors.hpp"

namespace cascalign {

using json = nlohmann::ordered_json;

void save_checkpoint(const std::string& path, const AlignmentModel& model, const IdfTable& idf) {
  json j;
  j["format"] = "cascalign-checkpoint";
  j["version"] = kCheckpointVersion;
  const EncoderConfig& e = model.config;
  j["encoder"] = {{"d", e.d},
                  {"heads", e.heads},
                  {"video_layers", e.video_layers},
                  {"text_layers", e.text_layers},
                  {"fusion_layers", e.fusion_layers},
                  {"d_video_in", e.d_video_in},
                  {"vocab_size", e.vocab_size},
                  {"m_max", e.m_max},
                  {"n_max", e.n_max},
                  {"ff_mult", e.ff_mult},
                  {"fusion_text_first", e.fusion_text_first}};
  j["vocab"] = model.vocab.words();

  // idf values in sorted order for reproducible bytes
  std::map<std::string, double> sorted_idf(idf.values().begin(), idf.values().end());
  j["idf"] = {{"corpus_size", idf.corpus_size()}, {"values", sorted_idf}};

  json params = json::object();
  for (const auto& [name, tensor] : model.params.entries()) {
    params[name] = {{"shape", tensor.shape()}, {"data", tensor.values()}};
  }
  j["params"] = std::move(params);

  std::ofstream out(path);
  if (!out) throw CheckpointError("cannot write checkpoint: " + path);
  out << j.dump() << "\n";
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CheckpointError("cannot open checkpoint: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("checkpoint parse error: ") + e.what());
  }

  if (!j.contains("format") || j["format"] != "cascalign-checkpoint")
    throw CheckpointError("not a cascalign checkpoint: " + path);
  if (!j.contains("version") || !j["version"].is_number_integer())
    throw CheckpointError("checkpoint missing version field");
  const int version = j["version"].get<int>();
  if (version != kCheckpointVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version) +
                          " (expected " + std::to_string(kCheckpointVersion) + ")");

  EncoderConfig cfg;
  try {
    const json& e = j.at("encoder");
    cfg.d = e.at("d").get<int>();
    cfg.heads = e.at("heads").get<int>();
    cfg.video_layers = e.at("video_layers").get<int>();
    cfg.text_layers = e.at("text_layers").get<int>();
    cfg.fusion_layers = e.at("fusion_layers").get<int>();
    cfg.d_video_in = e.at("d_video_in").get<int>();
    cfg.vocab_size = e.at("vocab_size").get<int>();
    cfg.m_max = e.at("m_max").get<int>();
    cfg.n_max = e.at("n_max").get<int>();
    cfg.ff_mult = e.at("ff_mult").get<int>();
    cfg.fusion_text_first = e.at("fusion_text_first").get<bool>();
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("checkpoint encoder config error: ") + e.what());
  }

  LoadedCheckpoint loaded;
  try {
    Vocab vocab = Vocab::from_words(j.at("vocab").get<std::vector<std::string>>());
    loaded.model = AlignmentModel::init(cfg, std::move(vocab), 0);

    const json& params = j.at("params");
    size_t seen = 0;
    for (auto& [name, tensor] : loaded.model.params.entries()) {
      if (!params.contains(name))
        throw CheckpointError("checkpoint missing parameter: " + name);
      const json& p = params[name];
      const auto shape = p.at("shape").get<std::vector<int>>();
      if (shape != tensor.shape())
        throw CheckpointError("checkpoint parameter shape mismatch for " + name);
      auto data = p.at("data").get<std::vector<real>>();
      if (data.size() != tensor.size())
        throw CheckpointError("checkpoint parameter size mismatch for " + name);
      std::copy(data.begin(), data.end(), tensor.mutable_data());
      ++seen;
    }
    if (seen != params.size())
      throw CheckpointError("checkpoint carries unknown parameters");

    const json& idf = j.at("idf");
    std::unordered_map<std::string, double> values;
    for (const auto& [word, value] : idf.at("values").items())
      values[word] = value.get<double>();
    loaded.idf = IdfTable::from_values(std::move(values), idf.at("corpus_size").get<long>());
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("checkpoint field error: ") + e.what());
  }
  return loaded;
}

}  // namespace cascalign
