#include "cascalign/train.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "cascalign/cascade.hpp"
#include "cascalign/checkpoint.hpp"
#include "cascalign/errors.hpp"
#include "cascalign/ops.hpp"

namespace cascalign {

using json = nlohmann::ordered_json;

AdamOptimizer::AdamOptimizer(const OptimizerConfig& config) : config_(config) {}

double AdamOptimizer::learning_rate(int step) const {
  const int warmup = config_.warmup_steps;
  const int total = config_.total_steps;
  if (warmup > 0 && step <= warmup)
    return config_.learning_rate * static_cast<double>(step) / static_cast<double>(warmup);
  if (total <= warmup) return config_.learning_rate;
  // decays linearly, reaching learning_rate/(total-warmup) at the last step
  return config_.learning_rate * static_cast<double>(total - step + 1) /
         static_cast<double>(total - warmup);
}

void AdamOptimizer::step(ParamStore& params, int step_index) {
  const double lr = learning_rate(step_index);
  ++updates_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(updates_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(updates_));
  for (auto& [name, tensor] : params.entries()) {
    auto& m = m_[name];
    auto& v = v_[name];
    if (m.empty()) {
      m.assign(tensor.size(), real(0));
      v.assign(tensor.size(), real(0));
    }
    real* value = tensor.mutable_data();
    const real* grad = tensor.grad_data();
    for (size_t i = 0; i < tensor.size(); ++i) {
      // coupled weight decay enters through the gradient
      const double g = static_cast<double>(grad[i]) +
                       config_.weight_decay * static_cast<double>(value[i]);
      m[i] = static_cast<real>(beta1_ * m[i] + (1.0 - beta1_) * g);
      v[i] = static_cast<real>(beta2_ * v[i] + (1.0 - beta2_) * g * g);
      const double mhat = static_cast<double>(m[i]) / bc1;
      const double vhat = static_cast<double>(v[i]) / bc2;
      value[i] -= static_cast<real>(lr * mhat / (std::sqrt(vhat) + eps_));
    }
  }
}

namespace {

// Deterministic batch index stream: shuffled epochs, partial tails dropped.
class BatchStream {
 public:
  BatchStream(int corpus_size, int batch_size, Rng rng)
      : corpus_size_(corpus_size), batch_size_(batch_size), rng_(std::move(rng)) {
    if (corpus_size_ < batch_size_)
      throw ConfigError("training corpus smaller than one batch (" +
                        std::to_string(corpus_size_) + " < " + std::to_string(batch_size_) + ")");
    refill();
  }

  std::vector<int> next() {
    if (cursor_ + batch_size_ > static_cast<int>(order_.size())) refill();
    std::vector<int> batch(order_.begin() + cursor_, order_.begin() + cursor_ + batch_size_);
    cursor_ += batch_size_;
    return batch;
  }

 private:
  void refill() {
    order_.resize(static_cast<size_t>(corpus_size_));
    for (int i = 0; i < corpus_size_; ++i) order_[static_cast<size_t>(i)] = i;
    rng_.shuffle(order_);
    cursor_ = 0;
  }

  int corpus_size_;
  int batch_size_;
  Rng rng_;
  std::vector<int> order_;
  int cursor_ = 0;
};

double finite_or_throw(double v, const char* what, int step) {
  if (!std::isfinite(v))
    throw NumericError(std::string(what) + " is non-finite at step " + std::to_string(step));
  return v;
}

}  // namespace

TrainResult run_train(const RunConfig& config, const std::vector<CorpusRecord>& corpus,
                      std::ostream* log) {
  config.validate();
  if (corpus.empty()) throw DataError("run_train: empty corpus");

  const auto target_pos = config.target_pos_set();
  std::vector<std::vector<TaggedToken>> sentences;
  sentences.reserve(corpus.size());
  for (const auto& rec : corpus) sentences.push_back(rec.tokens);
  IdfTable idf = IdfTable::compute(sentences);

  std::vector<ToiWeights> toi_all;
  toi_all.reserve(corpus.size());
  for (const auto& rec : corpus) toi_all.push_back(sentence_weights(rec.tokens, idf, target_pos));

  AlignmentModel model = AlignmentModel::init(config.encoder, Vocab::build(corpus), config.seed);

  AdamOptimizer optimizer(config.optimizer);
  BatchStream batches(static_cast<int>(corpus.size()), config.optimizer.batch_size,
                      Rng(config.seed).fork(0x62617463));
  Rng sample_rng = Rng(config.seed).fork(0x73616d70);

  const int K = config.optimizer.batch_size;
  TrainResult result;
  result.history.reserve(static_cast<size_t>(config.optimizer.total_steps));

  for (int step = 1; step <= config.optimizer.total_steps; ++step) {
    const std::vector<int> batch_idx = batches.next();
    std::vector<const CorpusRecord*> records;
    std::vector<ToiWeights> toi;
    records.reserve(static_cast<size_t>(K));
    toi.reserve(static_cast<size_t>(K));
    for (int idx : batch_idx) {
      records.push_back(&corpus[static_cast<size_t>(idx)]);
      toi.push_back(toi_all[static_cast<size_t>(idx)]);
    }

    model.params.zero_grads();
    EncodedBatch batch = model.encode_batch(records);

    LossBreakdown values;
    Tensor l1, l2, l3;
    if (config.use_l1) {
      l1 = sentence_loss(batch.video_means, batch.text_cls, config.loss.tau1,
                         config.symmetric_losses, config.mean_reduce);
      values.l1 = finite_or_throw(static_cast<double>(l1.item()), "L1", step);
    }
    if (config.loss.lambda_t > 0) {
      l2 = token_loss(batch.video_tokens, batch.text_tokens, toi, config.loss.tau2,
                      config.symmetric_losses, config.mean_reduce);
      values.l2 = finite_or_throw(static_cast<double>(l2.item()), "L2", step);
    }
    if (config.use_l3) {
      CascadeSelection selection;
      if (config.cascade_mode == "cascade") {
        const CombinedScoreMatrix scores =
            combined_scores(batch, toi, config.idf_weighted_cascade);
        selection = cascade_select(scores, config.loss.k_prime);
      } else if (config.cascade_mode == "random") {
        selection = random_select(K, config.loss.k_prime, sample_rng);
      } else {
        selection = full_select(K);
      }

      const std::vector<std::pair<int, int>> pairs = selected_pairs(selection);
      const Tensor fused_cls = model.fuse_pairs(batch, pairs);
      std::map<std::pair<int, int>, Tensor> fused;
      for (size_t p = 0; p < pairs.size(); ++p)
        fused.emplace(pairs[p], row(fused_cls, static_cast<int>(p)));
      l3 = fusion_loss(selection, fused, model.head_weight(), model.head_bias(),
                       config.mean_reduce);
      values.l3 = finite_or_throw(static_cast<double>(l3.item()), "L3", step);
    }

    Tensor objective;
    if (l1.defined()) objective = l1;
    if (l2.defined()) {
      Tensor weighted = scale(l2, static_cast<real>(config.loss.lambda_t));
      objective = objective.defined() ? add(objective, weighted) : weighted;
    }
    if (l3.defined()) objective = objective.defined() ? add(objective, l3) : l3;
    if (!objective.defined())
      throw ConfigError("run_train: no loss enabled (use_l1, lambda_t, use_l3 all off)");

    values.total = finite_or_throw(static_cast<double>(objective.item()), "total objective", step);
    objective.backward();
    optimizer.step(model.params, step);

    if (log) {
      json line = {{"step", step},
                   {"l1", values.l1},
                   {"l2", values.l2},
                   {"l3", values.l3},
                   {"total", values.total}};
      (*log) << line.dump() << "\n";
    }
    result.history.push_back(values);
  }

  if (!config.paths.checkpoint.empty()) save_checkpoint(config.paths.checkpoint, model, idf);
  result.model = std::move(model);
  result.idf = std::move(idf);
  return result;
}

TrainResult run_train(const RunConfig& config, std::ostream* log) {
  if (config.paths.corpus.empty()) throw ConfigError("run_train: no corpus path configured");
  return run_train(config, load_corpus(config.paths.corpus), log);
}

namespace {

json metrics_to_json(const RetrievalMetrics& m) {
  json j;
  for (const auto& [n, r] : m.recall_at) j["R" + std::to_string(n)] = r;
  j["MR"] = m.median_rank;
  return j;
}

}  // namespace

std::string EvalReport::to_json_string() const {
  json j = metrics_to_json(fused);
  json stages = json::object();
  for (const auto& [name, m] : per_stage) stages[name] = metrics_to_json(m);
  j["per_stage"] = std::move(stages);
  j["weights"] = {{"sentence", weights.sentence}, {"token", weights.token}, {"fusion", weights.fusion}};
  j["queries"] = queries;
  j["candidates"] = candidates;
  return j.dump(2) + "\n";
}

EvalReport run_eval(const AlignmentModel& model, const IdfTable& idf,
                    const std::vector<CorpusRecord>& corpus, const InferenceWeights& weights,
                    const StageMask& mask, const std::set<std::string>& target_pos,
                    const std::string& scores_csv_path) {
  weights.validate();
  if (corpus.empty()) throw DataError("run_eval: empty corpus");
  const StageScoreMatrices stages =
      stage_score_matrices(corpus, corpus, model, idf, mask.fusion, target_pos);

  std::vector<int> ground_truth(corpus.size());
  for (size_t i = 0; i < corpus.size(); ++i) ground_truth[i] = static_cast<int>(i);
  const std::vector<int> ns = {1, 5, 10};

  EvalReport report;
  report.weights = weights;
  report.queries = stages.queries;
  report.candidates = stages.candidates;
  const auto combined = stages.combined(weights, mask);
  report.fused = rank_metrics(combined, ground_truth, ns);

  const std::map<std::string, StageMask> singles = {
      {"sentence", StageMask::only_sentence()},
      {"token", StageMask::only_token()},
  };
  for (const auto& [name, single] : singles) {
    report.per_stage[name] =
        rank_metrics(stages.combined(InferenceWeights{1, 1, 1}, single), ground_truth, ns);
  }
  if (mask.fusion) {
    report.per_stage["fusion"] = rank_metrics(
        stages.combined(InferenceWeights{1, 1, 1}, StageMask::only_fusion()), ground_truth, ns);
  }

  if (!scores_csv_path.empty()) {
    std::ofstream csv(scores_csv_path);
    if (!csv) throw DataError("cannot write score matrix: " + scores_csv_path);
    for (const auto& row : combined) {
      for (size_t c = 0; c < row.size(); ++c) csv << (c ? "," : "") << row[c];
      csv << "\n";
    }
  }
  return report;
}

}  // namespace cascalign
