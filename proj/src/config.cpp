#include "cascalign/config.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "cascalign/errors.hpp"

namespace cascalign {

using json = nlohmann::ordered_json;

void RunConfig::validate() const {
  encoder.validate();
  if (optimizer.batch_size < 2) throw ConfigError("run config: batch_size must be >= 2");
  loss.validate(optimizer.batch_size);
  if (optimizer.total_steps < 1) throw ConfigError("run config: total_steps must be >= 1");
  if (optimizer.warmup_steps < 0) throw ConfigError("run config: warmup_steps must be >= 0");
  if (optimizer.warmup_steps > optimizer.total_steps)
    throw ConfigError("run config: warmup_steps must not exceed total_steps");
  if (!(optimizer.learning_rate > 0)) throw ConfigError("run config: learning_rate must be positive");
  if (optimizer.weight_decay < 0) throw ConfigError("run config: weight_decay must be nonnegative");
  if (cascade_mode != "cascade" && cascade_mode != "random" && cascade_mode != "full")
    throw ConfigError("run config: cascade_mode must be cascade, random or full");
  if (target_pos.empty()) throw ConfigError("run config: target_pos must not be empty");
  inference.validate();
}

namespace {

json to_json(const RunConfig& c) {
  json j;
  j["encoder"] = {{"d", c.encoder.d},
                  {"heads", c.encoder.heads},
                  {"video_layers", c.encoder.video_layers},
                  {"text_layers", c.encoder.text_layers},
                  {"fusion_layers", c.encoder.fusion_layers},
                  {"d_video_in", c.encoder.d_video_in},
                  {"vocab_size", c.encoder.vocab_size},
                  {"m_max", c.encoder.m_max},
                  {"n_max", c.encoder.n_max},
                  {"ff_mult", c.encoder.ff_mult},
                  {"fusion_text_first", c.encoder.fusion_text_first}};
  j["loss"] = {{"tau1", c.loss.tau1},
               {"tau2", c.loss.tau2},
               {"lambda_t", c.loss.lambda_t},
               {"k_prime", c.loss.k_prime}};
  j["optimizer"] = {{"learning_rate", c.optimizer.learning_rate},
                    {"weight_decay", c.optimizer.weight_decay},
                    {"warmup_steps", c.optimizer.warmup_steps},
                    {"total_steps", c.optimizer.total_steps},
                    {"batch_size", c.optimizer.batch_size}};
  j["cascade_mode"] = c.cascade_mode;
  j["use_l1"] = c.use_l1;
  j["use_l3"] = c.use_l3;
  j["symmetric_losses"] = c.symmetric_losses;
  j["mean_reduce"] = c.mean_reduce;
  j["idf_weighted_cascade"] = c.idf_weighted_cascade;
  j["target_pos"] = c.target_pos;
  j["inference"] = {{"sentence", c.inference.sentence},
                    {"token", c.inference.token},
                    {"fusion", c.inference.fusion}};
  j["seed"] = c.seed;
  j["paths"] = {{"corpus", c.paths.corpus},
                {"checkpoint", c.paths.checkpoint},
                {"report", c.paths.report}};
  return j;
}

template <typename T>
void read_field(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

RunConfig from_json(const json& j) {
  RunConfig c;
  if (j.contains("encoder")) {
    const json& e = j["encoder"];
    read_field(e, "d", c.encoder.d);
    read_field(e, "heads", c.encoder.heads);
    read_field(e, "video_layers", c.encoder.video_layers);
    read_field(e, "text_layers", c.encoder.text_layers);
    read_field(e, "fusion_layers", c.encoder.fusion_layers);
    read_field(e, "d_video_in", c.encoder.d_video_in);
    read_field(e, "vocab_size", c.encoder.vocab_size);
    read_field(e, "m_max", c.encoder.m_max);
    read_field(e, "n_max", c.encoder.n_max);
    read_field(e, "ff_mult", c.encoder.ff_mult);
    read_field(e, "fusion_text_first", c.encoder.fusion_text_first);
  }
  if (j.contains("loss")) {
    const json& l = j["loss"];
    read_field(l, "tau1", c.loss.tau1);
    read_field(l, "tau2", c.loss.tau2);
    read_field(l, "lambda_t", c.loss.lambda_t);
    read_field(l, "k_prime", c.loss.k_prime);
  }
  if (j.contains("optimizer")) {
    const json& o = j["optimizer"];
    read_field(o, "learning_rate", c.optimizer.learning_rate);
    read_field(o, "weight_decay", c.optimizer.weight_decay);
    read_field(o, "warmup_steps", c.optimizer.warmup_steps);
    read_field(o, "total_steps", c.optimizer.total_steps);
    read_field(o, "batch_size", c.optimizer.batch_size);
  }
  read_field(j, "cascade_mode", c.cascade_mode);
  read_field(j, "use_l1", c.use_l1);
  read_field(j, "use_l3", c.use_l3);
  read_field(j, "symmetric_losses", c.symmetric_losses);
  read_field(j, "mean_reduce", c.mean_reduce);
  read_field(j, "idf_weighted_cascade", c.idf_weighted_cascade);
  read_field(j, "target_pos", c.target_pos);
  if (j.contains("inference")) {
    const json& w = j["inference"];
    read_field(w, "sentence", c.inference.sentence);
    read_field(w, "token", c.inference.token);
    read_field(w, "fusion", c.inference.fusion);
  }
  read_field(j, "seed", c.seed);
  if (j.contains("paths")) {
    const json& p = j["paths"];
    read_field(p, "corpus", c.paths.corpus);
    read_field(p, "checkpoint", c.paths.checkpoint);
    read_field(p, "report", c.paths.report);
  }
  return c;
}

}  // namespace

std::string RunConfig::to_json_string() const { return to_json(*this).dump(2) + "\n"; }

RunConfig RunConfig::from_json_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  try {
    return from_json(j);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config field error: ") + e.what());
  }
}

RunConfig RunConfig::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_string(ss.str());
}

std::string fnv1a64_file_hex(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file for hashing: " + path);
  uint64_t hash = 0xcbf29ce484222325ull;
  char buf[4096];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    const std::streamsize got = in.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      hash ^= static_cast<unsigned char>(buf[i]);
      hash *= 0x100000001b3ull;
    }
    if (got < static_cast<std::streamsize>(sizeof(buf))) break;
  }
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << hash;
  return out.str();
}

void write_manifest(const std::string& manifest_path, const RunConfig& config,
                    const std::vector<std::string>& artifact_paths) {
  json j;
  j["config"] = json::parse(config.to_json_string());
  j["seed"] = config.seed;
  json artifacts = json::object();
  for (const auto& path : artifact_paths) {
    std::ifstream probe(path, std::ios::binary | std::ios::ate);
    if (!probe) continue;
    artifacts[path] = {{"bytes", static_cast<long>(probe.tellg())},
                       {"fnv1a64", fnv1a64_file_hex(path)}};
  }
  j["artifacts"] = std::move(artifacts);
  std::ofstream out(manifest_path);
  if (!out) throw DataError("cannot write manifest: " + manifest_path);
  out << j.dump(2) << "\n";
}

}  // namespace cascalign
