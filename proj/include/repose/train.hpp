#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "repose/config.hpp"
#include "repose/data.hpp"
#include "repose/metrics.hpp"
#include "repose/model.hpp"

namespace repose {

// Adam with bias correction; moments live alongside the checkpointed
// parameters so training can resume exactly.
class AdamOptimizer {
 public:
  AdamOptimizer(ParamStore<float>& store, AdamConfig config);

  void step(double lr);
  long step_count() const { return step_count_; }

  // Checkpoint plumbing: moment tensors keyed "opt/<param>/m" etc.
  std::vector<std::pair<std::string, const Tensor<float>*>> state_entries() const;
  void restore_state(const std::map<std::string, Tensor<float>>& entries, long step_count);

 private:
  ParamStore<float>* store_;
  AdamConfig config_;
  long step_count_ = 0;
  std::vector<Tensor<float>> m_, v_;
  std::vector<Param<float>*> targets_;
};

double lr_at_step(const std::vector<LrPoint>& schedule, long step);

std::vector<PoseExample> load_dataset(const DatasetSpec& spec);

struct EvalOptions {
  int batch_size = 16;
  bool oracle_injection = false;  // decode rendered ground truth instead of model output
  int limit = 0;                  // 0 = all examples
};

struct EvalOutput {
  PckResult pck;
  std::vector<std::vector<Keypoint2D>> decoded;  // original-frame coordinates
};

// Forward in inference mode, decode final-stack peaks, map back through the
// stored inverse crop transforms, score PCK against the untouched examples.
EvalOutput evaluate_model(const ReposeModel<float>& model, const std::vector<PoseExample>& examples,
                          const RunConfig& config, const EvalOptions& options);

struct TrainResult {
  bool ok = false;
  std::string error;
  long steps_run = 0;
  double first_logged_loss = 0.0;  // at the first log point (step 1)
  double step50_loss = 0.0;
  double final_loss = 0.0;
  std::vector<std::pair<long, double>> loss_history;  // (step, loss) at log points
  PckResult final_pck;
  std::string checkpoint_path;
};

using TrainObserver = std::function<void(long step, double loss)>;

// Runs the full loop: forward, total loss over all supervised stacks,
// backward, Adam step under the lr schedule; periodic checkpoints and an
// append-only TSV log under config.output_dir. A non-finite loss aborts with
// the offending step; the last checkpoint stays on disk. `resume_from` loads
// parameters plus optimizer state and continues from the stored step.
TrainResult train(const RunConfig& config, const std::string& resume_from = "", TrainObserver observer = {});

}  // namespace repose
