#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <map>
#include <sstream>

#include "cascalign/cascade.hpp"
#include "cascalign/checkpoint.hpp"
#include "cascalign/config.hpp"
#include "cascalign/data.hpp"
#include "cascalign/errors.hpp"
#include "cascalign/selfcheck.hpp"
#include "cascalign/train.hpp"

using json = nlohmann::ordered_json;
using namespace cascalign;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

struct CommonConfigFlags {
  std::string config_path;
  RunConfig load() const {
    return config_path.empty() ? RunConfig{} : RunConfig::from_json_file(config_path);
  }
};

void add_run_overrides(CLI::App* cmd, std::map<std::string, std::string>& str_overrides,
                       std::map<std::string, double>& num_overrides,
                       std::map<std::string, long>& int_overrides) {
  cmd->add_option("--corpus", str_overrides["corpus"], "corpus JSONL path");
  cmd->add_option("--checkpoint", str_overrides["checkpoint"], "checkpoint path");
  cmd->add_option("--report", str_overrides["report"], "report output path");
  cmd->add_option("--cascade-mode", str_overrides["cascade_mode"], "cascade | random | full");
  cmd->add_option("--seed", int_overrides["seed"], "run seed");
  cmd->add_option("--steps", int_overrides["total_steps"], "total training steps");
  cmd->add_option("--warmup-steps", int_overrides["warmup_steps"], "linear warmup steps");
  cmd->add_option("--batch-size", int_overrides["batch_size"], "pairs per step");
  cmd->add_option("--k-prime", int_overrides["k_prime"], "hard negatives per anchor");
  cmd->add_option("--lr", num_overrides["learning_rate"], "initial learning rate");
  cmd->add_option("--weight-decay", num_overrides["weight_decay"], "weight decay");
  cmd->add_option("--lambda-t", num_overrides["lambda_t"], "token-level loss weight");
  cmd->add_option("--tau1", num_overrides["tau1"], "sentence-loss temperature");
  cmd->add_option("--tau2", num_overrides["tau2"], "token-loss temperature");
  cmd->add_option("--d", int_overrides["d"], "embedding dimension");
  cmd->add_option("--heads", int_overrides["heads"], "attention heads");
  cmd->add_option("--video-layers", int_overrides["video_layers"], "video encoder depth");
  cmd->add_option("--text-layers", int_overrides["text_layers"], "text encoder depth");
  cmd->add_option("--fusion-layers", int_overrides["fusion_layers"], "fusion depth");
  cmd->add_option("--d-video-in", int_overrides["d_video_in"], "raw video feature width");
}

void apply_overrides(RunConfig& cfg, const std::map<std::string, std::string>& strs,
                     const std::map<std::string, double>& nums,
                     const std::map<std::string, long>& ints, const CLI::App* cmd) {
  auto set_str = [&](const char* flag, const char* key, std::string& out) {
    if (cmd->count(flag)) out = strs.at(key);
  };
  set_str("--corpus", "corpus", cfg.paths.corpus);
  set_str("--checkpoint", "checkpoint", cfg.paths.checkpoint);
  set_str("--report", "report", cfg.paths.report);
  set_str("--cascade-mode", "cascade_mode", cfg.cascade_mode);
  auto set_int = [&](const char* flag, const char* key, auto& out) {
    if (cmd->count(flag)) out = static_cast<std::decay_t<decltype(out)>>(ints.at(key));
  };
  set_int("--seed", "seed", cfg.seed);
  set_int("--steps", "total_steps", cfg.optimizer.total_steps);
  set_int("--warmup-steps", "warmup_steps", cfg.optimizer.warmup_steps);
  set_int("--batch-size", "batch_size", cfg.optimizer.batch_size);
  set_int("--k-prime", "k_prime", cfg.loss.k_prime);
  set_int("--d", "d", cfg.encoder.d);
  set_int("--heads", "heads", cfg.encoder.heads);
  set_int("--video-layers", "video_layers", cfg.encoder.video_layers);
  set_int("--text-layers", "text_layers", cfg.encoder.text_layers);
  set_int("--fusion-layers", "fusion_layers", cfg.encoder.fusion_layers);
  set_int("--d-video-in", "d_video_in", cfg.encoder.d_video_in);
  auto set_num = [&](const char* flag, const char* key, double& out) {
    if (cmd->count(flag)) out = nums.at(key);
  };
  set_num("--lr", "learning_rate", cfg.optimizer.learning_rate);
  set_num("--weight-decay", "weight_decay", cfg.optimizer.weight_decay);
  set_num("--lambda-t", "lambda_t", cfg.loss.lambda_t);
  set_num("--tau1", "tau1", cfg.loss.tau1);
  set_num("--tau2", "tau2", cfg.loss.tau2);
}

StageMask parse_stage_mask(const std::vector<std::string>& stages) {
  if (stages.empty()) return StageMask::all();
  StageMask mask{false, false, false};
  for (const auto& s : stages) {
    if (s == "sentence")
      mask.sentence = true;
    else if (s == "token")
      mask.token = true;
    else if (s == "fusion")
      mask.fusion = true;
    else
      throw ConfigError("unknown stage in --stages: " + s);
  }
  return mask;
}

int cmd_train(const RunConfig& cfg, const std::string& log_path) {
  cfg.validate();
  if (cfg.paths.corpus.empty()) throw ConfigError("train: --corpus (or paths.corpus) is required");
  std::ofstream log_file;
  std::ostream* log = &std::cout;
  if (!log_path.empty()) {
    log_file.open(log_path);
    if (!log_file) throw DataError("cannot open log file: " + log_path);
    log = &log_file;
  }
  run_train(cfg, log);
  if (!cfg.paths.checkpoint.empty()) {
    std::vector<std::string> artifacts = {cfg.paths.checkpoint};
    if (!log_path.empty()) artifacts.push_back(log_path);
    write_manifest(cfg.paths.checkpoint + ".manifest.json", cfg, artifacts);
  }
  return kExitOk;
}

int cmd_eval(const RunConfig& cfg, const std::string& checkpoint_path,
             const std::vector<std::string>& stages, const std::vector<double>& sweep,
             const std::string& scores_csv) {
  if (checkpoint_path.empty()) throw ConfigError("eval: --checkpoint is required");
  if (cfg.paths.corpus.empty()) throw ConfigError("eval: --corpus (or paths.corpus) is required");
  LoadedCheckpoint loaded = load_checkpoint(checkpoint_path);
  const auto corpus = load_corpus(cfg.paths.corpus);
  const StageMask mask = parse_stage_mask(stages);

  json output;
  if (sweep.empty()) {
    const EvalReport report =
        run_eval(loaded.model, loaded.idf, corpus, cfg.inference, mask, cfg.target_pos_set(),
                 scores_csv);
    output = json::parse(report.to_json_string());
  } else {
    output = json::array();
    for (double w : sweep) {
      InferenceWeights weights = cfg.inference;
      weights.token = w;
      const EvalReport report =
          run_eval(loaded.model, loaded.idf, corpus, weights, mask, cfg.target_pos_set());
      output.push_back(json::parse(report.to_json_string()));
    }
  }

  if (cfg.paths.report.empty()) {
    std::cout << output.dump(2) << "\n";
  } else {
    std::ofstream out(cfg.paths.report);
    if (!out) throw DataError("cannot write report: " + cfg.paths.report);
    out << output.dump(2) << "\n";
    std::vector<std::string> artifacts = {cfg.paths.report};
    if (!scores_csv.empty()) artifacts.push_back(scores_csv);
    write_manifest(cfg.paths.report + ".manifest.json", cfg, artifacts);
  }
  return kExitOk;
}

int cmd_idf(const std::string& corpus_path, const std::string& out_path) {
  const auto corpus = load_corpus(corpus_path);
  std::vector<std::vector<TaggedToken>> sentences;
  sentences.reserve(corpus.size());
  for (const auto& rec : corpus) sentences.push_back(rec.tokens);
  const IdfTable idf = IdfTable::compute(sentences);

  json j;
  j["corpus_size"] = idf.corpus_size();
  j["idf"] = std::map<std::string, double>(idf.values().begin(), idf.values().end());
  if (out_path.empty()) {
    std::cout << j.dump(2) << "\n";
  } else {
    std::ofstream out(out_path);
    if (!out) throw DataError("cannot write idf table: " + out_path);
    out << j.dump(2) << "\n";
  }
  return kExitOk;
}

int cmd_gen_synthetic(const SyntheticSpec& spec, const std::string& out_path) {
  const auto records = generate_synthetic(spec);
  save_corpus(out_path, records);
  json manifest;
  manifest["spec"] = {{"num_pairs", spec.num_pairs}, {"d_video_in", spec.d_video_in},
                      {"concepts", spec.concepts},   {"noise_sigma", spec.noise_sigma},
                      {"seed", spec.seed},           {"vocab_words", spec.vocab.size()}};
  manifest["seed"] = spec.seed;
  manifest["artifacts"] = {
      {out_path, {{"bytes", static_cast<long>(std::ifstream(out_path, std::ios::ate | std::ios::binary).tellg())},
                  {"fnv1a64", fnv1a64_file_hex(out_path)}}}};
  std::ofstream mf(out_path + ".manifest.json");
  if (!mf) throw DataError("cannot write manifest for " + out_path);
  mf << manifest.dump(2) << "\n";
  return kExitOk;
}

int cmd_sample_inspect(const std::string& checkpoint_path, const std::string& corpus_path,
                       int batch, int k_prime, bool idf_weighted) {
  LoadedCheckpoint loaded = load_checkpoint(checkpoint_path);
  const auto corpus = load_corpus(corpus_path);
  if (static_cast<int>(corpus.size()) < batch)
    throw ConfigError("sample-inspect: corpus smaller than requested batch");
  NoGradGuard guard;
  std::vector<const CorpusRecord*> records;
  std::vector<ToiWeights> toi;
  for (int i = 0; i < batch; ++i) {
    records.push_back(&corpus[static_cast<size_t>(i)]);
    toi.push_back(sentence_weights(corpus[static_cast<size_t>(i)].tokens, loaded.idf));
  }
  const EncodedBatch encoded = loaded.model.encode_batch(records);
  const CombinedScoreMatrix scores = combined_scores(encoded, toi, idf_weighted);
  const CascadeSelection selection = cascade_select(scores, k_prime);

  json j;
  j["batch"] = batch;
  j["k_prime"] = k_prime;
  json ids = json::array();
  for (const auto* rec : records) ids.push_back(rec->id);
  j["ids"] = std::move(ids);
  json matrix = json::array();
  for (int v = 0; v < batch; ++v) {
    json row = json::array();
    for (int t = 0; t < batch; ++t) row.push_back(scores.at(v, t));
    matrix.push_back(std::move(row));
  }
  j["scores"] = std::move(matrix);  // scores[video][text]
  j["text_anchor_negs"] = selection.text_anchor_negs;
  j["video_anchor_negs"] = selection.video_anchor_negs;
  std::cout << j.dump(2) << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"token-aware cascade contrastive video-text alignment"};
  app.require_subcommand(1);

  CommonConfigFlags common;

  // train
  auto* train = app.add_subcommand("train", "train a model on a corpus");
  std::map<std::string, std::string> t_str;
  std::map<std::string, double> t_num;
  std::map<std::string, long> t_int;
  std::string train_log;
  bool disable_l1 = false, disable_l3 = false, symmetric = false;
  train->add_option("--config", common.config_path, "JSON run config");
  add_run_overrides(train, t_str, t_num, t_int);
  train->add_option("--log", train_log, "loss log path (default: stdout)");
  train->add_flag("--disable-l1", disable_l1, "drop the sentence-level loss");
  train->add_flag("--disable-l3", disable_l3, "drop the post-fusion loss");
  train->add_flag("--symmetric", symmetric, "bidirectional L1/L2");

  // eval
  auto* eval = app.add_subcommand("eval", "retrieval metrics for a checkpoint");
  std::map<std::string, std::string> e_str;
  std::map<std::string, double> e_num;
  std::map<std::string, long> e_int;
  std::string eval_checkpoint, scores_csv;
  std::vector<std::string> stages;
  std::vector<double> sweep, weight_list;
  eval->add_option("--config", common.config_path, "JSON run config");
  add_run_overrides(eval, e_str, e_num, e_int);
  eval->add_option("--model", eval_checkpoint, "checkpoint to evaluate (falls back to --checkpoint)");
  eval->add_option("--stages", stages)
      ->description("stage mask: any of sentence,token,fusion")
      ->delimiter(',');
  eval->add_option("--weights", weight_list)
      ->description("inference weights: sentence,token,fusion")
      ->delimiter(',')
      ->expected(3);
  eval->add_option("--sweep-token-weights", sweep)
      ->description("evaluate once per token weight")
      ->delimiter(',');
  eval->add_option("--scores-csv", scores_csv, "dump the combined score matrix");

  // idf
  auto* idf = app.add_subcommand("idf", "write the corpus idf table");
  std::string idf_corpus, idf_out;
  idf->add_option("--corpus", idf_corpus, "corpus JSONL path")->required();
  idf->add_option("--out", idf_out, "output JSON path (default: stdout)");

  // gen-synthetic
  auto* gen = app.add_subcommand("gen-synthetic", "generate a planted-alignment corpus");
  SyntheticSpec spec;
  std::string gen_out;
  gen->add_option("--out", gen_out, "corpus output path")->required();
  gen->add_option("--num-pairs", spec.num_pairs, "records to generate");
  gen->add_option("--d-video-in", spec.d_video_in, "video feature width");
  gen->add_option("--concepts", spec.concepts, "latent concept count");
  gen->add_option("--noise-sigma", spec.noise_sigma, "planted frame noise scale");
  gen->add_option("--seed", spec.seed, "generator seed");

  // sample-inspect
  auto* inspect = app.add_subcommand("sample-inspect", "print combined scores and selections");
  std::string ins_checkpoint, ins_corpus;
  int ins_batch = 8, ins_k_prime = 2;
  bool ins_weighted = false;
  inspect->add_option("--checkpoint", ins_checkpoint, "model checkpoint")->required();
  inspect->add_option("--corpus", ins_corpus, "corpus JSONL path")->required();
  inspect->add_option("--batch", ins_batch, "records from the corpus head");
  inspect->add_option("--k-prime", ins_k_prime, "negatives per anchor");
  inspect->add_flag("--idf-weighted", ins_weighted, "weight token similarities by idf");

  // selfcheck
  auto* selfcheck = app.add_subcommand("selfcheck", "run the built-in verification suites");
  int selfcheck_seeds = 3;
  selfcheck->add_option("--grad-seeds", selfcheck_seeds, "seeds for the gradient suite");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (train->parsed()) {
      RunConfig cfg = common.load();
      apply_overrides(cfg, t_str, t_num, t_int, train);
      if (disable_l1) cfg.use_l1 = false;
      if (disable_l3) cfg.use_l3 = false;
      if (symmetric) cfg.symmetric_losses = true;
      return cmd_train(cfg, train_log);
    }
    if (eval->parsed()) {
      RunConfig cfg = common.load();
      apply_overrides(cfg, e_str, e_num, e_int, eval);
      if (!weight_list.empty()) {
        cfg.inference = {weight_list[0], weight_list[1], weight_list[2]};
      }
      std::string checkpoint = eval_checkpoint.empty() ? cfg.paths.checkpoint : eval_checkpoint;
      return cmd_eval(cfg, checkpoint, stages, sweep, scores_csv);
    }
    if (idf->parsed()) return cmd_idf(idf_corpus, idf_out);
    if (gen->parsed()) return cmd_gen_synthetic(spec, gen_out);
    if (inspect->parsed())
      return cmd_sample_inspect(ins_checkpoint, ins_corpus, ins_batch, ins_k_prime, ins_weighted);
    if (selfcheck->parsed()) {
      SelfCheckOptions options;
      options.grad_seeds = selfcheck_seeds;
      const SelfCheckResult result = run_selfcheck(std::cout, options);
      return result.all_passed ? kExitOk : kExitRuntime;
    }
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitConfig;
}
