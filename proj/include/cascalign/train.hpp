#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "cascalign/config.hpp"
#include "cascalign/data.hpp"
#include "cascalign/encoders.hpp"
#include "cascalign/eval.hpp"
#include "cascalign/losses.hpp"

namespace cascalign {

// Adam with bias correction and coupled (L2-style) weight decay. Learning rate
// follows linear warmup to the configured rate, then linear decay.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(const OptimizerConfig& config);

  double learning_rate(int step) const;  // step is 1-based
  void step(ParamStore& params, int step_index);

 private:
  OptimizerConfig config_;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  long updates_ = 0;
  std::map<std::string, std::vector<real>> m_;
  std::map<std::string, std::vector<real>> v_;
};

struct TrainResult {
  std::vector<LossBreakdown> history;  // one entry per step
  AlignmentModel model;
  IdfTable idf;
};

// One full training run over a loaded corpus. Emits one JSON log line per step
// ({"step", "l1", "l2", "l3", "total"}) to `log` when given, and writes the
// checkpoint to config.paths.checkpoint when set. Aborts with NumericError
// naming the step if a loss goes non-finite.
TrainResult run_train(const RunConfig& config, const std::vector<CorpusRecord>& corpus,
                      std::ostream* log = nullptr);

// Convenience: loads config.paths.corpus first.
TrainResult run_train(const RunConfig& config, std::ostream* log = nullptr);

struct EvalReport {
  RetrievalMetrics fused;
  std::map<std::string, RetrievalMetrics> per_stage;  // sentence / token / fusion
  InferenceWeights weights;
  int queries = 0;
  int candidates = 0;

  std::string to_json_string() const;
};

// Text-to-video retrieval over one corpus: query q's correct candidate is its
// own video. Scores all pairs, then ranks with pessimistic ties.
EvalReport run_eval(const AlignmentModel& model, const IdfTable& idf,
                    const std::vector<CorpusRecord>& corpus, const InferenceWeights& weights,
                    const StageMask& mask = StageMask::all(),
                    const std::set<std::string>& target_pos = kDefaultTargetPos,
                    const std::string& scores_csv_path = "");

}  // namespace cascalign
