#include "repose/train.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "repose/checkpoint.hpp"
#include "repose/lossmetrics.hpp"

namespace repose {

namespace fs = std::filesystem;

AdamOptimizer::AdamOptimizer(ParamStore<float>& store, AdamConfig config) : store_(&store), config_(config) {
  for (auto* p : store.entries()) {
    if (!p->trainable) continue;
    targets_.push_back(p);
    m_.push_back(Tensor<float>::zeros_like(p->value));
    v_.push_back(Tensor<float>::zeros_like(p->value));
  }
}

void AdamOptimizer::step(double lr) {
  ++step_count_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(step_count_));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(step_count_));
  for (std::size_t i = 0; i < targets_.size(); ++i) {
    Param<float>& p = *targets_[i];
    Tensor<float>& m = m_[i];
    Tensor<float>& v = v_[i];
    for (std::int64_t j = 0; j < p.value.size(); ++j) {
      const double g = p.grad[j];
      const double mj = b1 * m[j] + (1.0 - b1) * g;
      const double vj = b2 * v[j] + (1.0 - b2) * g * g;
      m[j] = static_cast<float>(mj);
      v[j] = static_cast<float>(vj);
      p.value[j] -= static_cast<float>(lr * (mj / bc1) / (std::sqrt(vj / bc2) + config_.eps));
    }
  }
}

std::vector<std::pair<std::string, const Tensor<float>*>> AdamOptimizer::state_entries() const {
  std::vector<std::pair<std::string, const Tensor<float>*>> out;
  for (std::size_t i = 0; i < targets_.size(); ++i) {
    out.emplace_back("opt/" + targets_[i]->name + "/m", &m_[i]);
    out.emplace_back("opt/" + targets_[i]->name + "/v", &v_[i]);
  }
  return out;
}

void AdamOptimizer::restore_state(const std::map<std::string, Tensor<float>>& entries, long step_count) {
  for (std::size_t i = 0; i < targets_.size(); ++i) {
    auto itm = entries.find("opt/" + targets_[i]->name + "/m");
    auto itv = entries.find("opt/" + targets_[i]->name + "/v");
    if (itm == entries.end() || itv == entries.end())
      throw std::runtime_error("checkpoint: missing optimizer state for " + targets_[i]->name);
    if (!(itm->second.dims() == m_[i].dims()) || !(itv->second.dims() == v_[i].dims()))
      throw std::runtime_error("checkpoint: optimizer state shape mismatch for " + targets_[i]->name);
    m_[i] = itm->second;
    v_[i] = itv->second;
  }
  step_count_ = step_count;
}

double lr_at_step(const std::vector<LrPoint>& schedule, long step) {
  double lr = schedule.front().lr;
  for (const auto& p : schedule)
    if (p.step <= step) lr = p.lr;
  return lr;
}

std::vector<PoseExample> load_dataset(const DatasetSpec& spec) {
  if (spec.type == "synthetic") {
    Rng rng(spec.seed);
    SynthConfig sc;
    sc.count = spec.count;
    sc.canvas = spec.canvas;
    sc.occluded_fraction = spec.occluded_fraction;
    sc.unannotated_fraction = spec.unannotated_fraction;
    sc.keypoints = 14;
    return synth_dataset(rng, sc);
  }
  AnnotationFormat fmt;
  if (spec.type == "native")
    fmt = AnnotationFormat::native;
  else if (spec.type == "lsp_style")
    fmt = AnnotationFormat::lsp_style;
  else if (spec.type == "mpii_style")
    fmt = AnnotationFormat::mpii_style;
  else
    throw std::invalid_argument("dataset spec: unknown type '" + spec.type + "'");
  if (spec.path.empty()) throw std::invalid_argument("dataset spec: type '" + spec.type + "' requires a path");
  LoadResult loaded = load_annotations(spec.path, fmt);
  if (loaded.dropped > 0)
    std::cerr << "warning: dropped " << loaded.dropped << " record(s) with no annotated keypoints from " << spec.path
              << "\n";
  return loaded.examples;
}

namespace {

std::vector<PoseExample> dataset_for_model(const DatasetSpec& spec, int keypoints) {
  std::vector<PoseExample> data = load_dataset(spec);
  if (data.empty()) throw std::runtime_error("dataset is empty");
  const int have = static_cast<int>(data.front().keypoints.size());
  if (have == keypoints) return data;
  // Joint 14/16 handling: map by name into the model's keypoint space,
  // masking the slots the source does not provide.
  return unify_keypoint_space(data, default_skeleton(have), default_skeleton(keypoints));
}

}  // namespace

EvalOutput evaluate_model(const ReposeModel<float>& model, const std::vector<PoseExample>& examples,
                          const RunConfig& config, const EvalOptions& options) {
  const SkeletonGraph& skeleton = model.skeleton();
  const int n = model.config().input_size;
  const int K = model.config().keypoints;
  const int limit = options.limit > 0 ? std::min<int>(options.limit, static_cast<int>(examples.size()))
                                      : static_cast<int>(examples.size());
  EvalOutput out;
  out.decoded.assign(static_cast<std::size_t>(limit), {});

  for (int begin = 0; begin < limit; begin += options.batch_size) {
    const int bsz = std::min<int>(options.batch_size, limit - begin);
    Batch batch = allocate_batch(bsz, K, n);
    std::vector<int> slots;
    for (int i = 0; i < bsz; ++i) {
      if (!prepare_example(examples[static_cast<std::size_t>(begin + i)], n, config.sigma, skeleton, nullptr, nullptr,
                           batch, i)) {
        // nothing annotated in frame; keep the zero slot, it scores as missed
        batch.masks[static_cast<std::size_t>(i)].bits.assign(static_cast<std::size_t>(K), 0);
      }
      slots.push_back(begin + i);
    }
    Tensor<float> stack;
    if (options.oracle_injection) {
      stack = batch.gt;
    } else {
      Tape<float> tape;
      PosePrediction pred = model.forward(tape, batch.images, kInferenceMode);
      stack = tape.value(pred.final_id);
    }
    for (int i = 0; i < bsz; ++i) {
      std::vector<Keypoint2D> decoded(static_cast<std::size_t>(K));
      for (int k = 0; k < K; ++k) {
        PeakDecode peak = decode_peak(extract_channel(stack, i, k));
        if (peak.detected) {
          auto [ox, oy] = batch.to_original[static_cast<std::size_t>(i)].apply(peak.x, peak.y);
          decoded[static_cast<std::size_t>(k)] = {ox, oy, true};
        }
      }
      out.decoded[static_cast<std::size_t>(slots[static_cast<std::size_t>(i)])] = std::move(decoded);
    }
  }
  std::vector<PoseExample> gt(examples.begin(), examples.begin() + limit);
  out.pck = pck(out.decoded, gt, config.pck, skeleton);
  return out;
}

TrainResult train(const RunConfig& config, const std::string& resume_from, TrainObserver observer) {
  TrainResult result;
  config.validate();
  fs::create_directories(config.output_dir);
  save_run_config(config, (fs::path(config.output_dir) / "config.json").string());

  const SkeletonGraph skeleton = default_skeleton(config.model.keypoints);
  ReposeModel<float> model = ReposeModel<float>::build(config.model, skeleton, config.seed);
  AdamOptimizer optimizer(model.params(), config.adam);

  std::vector<PoseExample> train_set = dataset_for_model(config.train_data, config.model.keypoints);
  std::vector<PoseExample> val_set = dataset_for_model(config.val_data, config.model.keypoints);

  long start_step = 0;
  if (!resume_from.empty()) {
    auto extras = load_checkpoint(resume_from, model.params());
    auto it = extras.find("opt/step");
    if (it == extras.end()) throw std::runtime_error("checkpoint: missing opt/step, cannot resume from " + resume_from);
    const long stored = static_cast<long>(it->second[0]);
    optimizer.restore_state(extras, stored);
    start_step = stored;
  }

  const std::string log_path = (fs::path(config.output_dir) / "train_log.tsv").string();
  std::ofstream log(log_path, std::ios::app);
  if (!log) throw std::runtime_error("train: cannot open log " + log_path);
  if (start_step == 0) log << "step\tloss\tlr\tval_pck\n";

  const Rng base_rng(config.seed);
  const int K = config.model.keypoints;
  const int n = config.model.input_size;

  auto write_checkpoint = [&](long step) {
    Tensor<float> step_tensor({1});
    step_tensor[0] = static_cast<float>(step);
    auto extras = optimizer.state_entries();
    extras.emplace_back("opt/step", &step_tensor);
    const std::string path = (fs::path(config.output_dir) / "checkpoint.ckpt").string();
    save_checkpoint(path, model.params(), extras);
    result.checkpoint_path = path;
  };

  for (long step = start_step + 1; step <= config.max_steps; ++step) {
    // Per-step data stream: forking on the step index makes batches a pure
    // function of (seed, step), so resumed runs replay the same data order.
    Rng step_rng = base_rng.fork(static_cast<std::uint64_t>(step));
    Batch batch = allocate_batch(config.batch_size, K, n);
    for (int slot = 0; slot < config.batch_size; ++slot) {
      for (int attempt = 0;; ++attempt) {
        const int idx = step_rng.uniform_int(0, static_cast<int>(train_set.size()) - 1);
        Rng aug_rng = step_rng.fork(static_cast<std::uint64_t>(slot) * 1000003ull + static_cast<std::uint64_t>(attempt));
        const bool ok = prepare_example(train_set[static_cast<std::size_t>(idx)], n, config.sigma, skeleton,
                                        config.augment_enabled ? &aug_rng : nullptr,
                                        config.augment_enabled ? &config.augment : nullptr, batch, slot);
        if (ok) break;
        if (attempt > 50) throw std::runtime_error("train: could not assemble a batch with annotated keypoints");
      }
    }

    Tape<float> tape;
    PosePrediction pred = model.forward(tape, batch.images, kTrainMode);
    const int loss_id = total_loss_op(tape, pred, batch.gt, batch.masks);
    const double loss = static_cast<double>(tape.value(loss_id)[0]);

    if (!std::isfinite(loss)) {
      result.error = "non-finite loss at step " + std::to_string(step);
      result.steps_run = step - 1;
      log << step << '\t' << "nan" << '\t' << lr_at_step(config.lr_schedule, step) << "\t-\n";
      return result;  // last checkpoint stays on disk
    }

    model.params().zero_grad();
    tape.backward(loss_id);
    optimizer.step(lr_at_step(config.lr_schedule, step));

    if (step == start_step + 1) result.first_logged_loss = loss;
    if (step == 50) result.step50_loss = loss;
    result.final_loss = loss;
    if (observer) observer(step, loss);

    if (step % config.log_every == 0 || step == config.max_steps) {
      std::string val_col = "-";
      if (config.eval_every > 0 && step % config.eval_every == 0 && step != config.max_steps) {
        EvalOptions opts;
        opts.batch_size = config.batch_size;
        opts.limit = config.val_limit;
        val_col = std::to_string(evaluate_model(model, val_set, config, opts).pck.mean);
      }
      log << step << '\t' << loss << '\t' << lr_at_step(config.lr_schedule, step) << '\t' << val_col << '\n';
      log.flush();
      result.loss_history.emplace_back(step, loss);
    }
    if (step % config.checkpoint_every == 0 || step == config.max_steps) write_checkpoint(step);
  }

  EvalOptions opts;
  opts.batch_size = config.batch_size;
  opts.limit = config.val_limit;
  result.final_pck = evaluate_model(model, val_set, config, opts).pck;
  log << "# final mean pck " << result.final_pck.mean << '\n';

  result.ok = true;
  result.steps_run = config.max_steps;
  return result;
}

}  // namespace repose
