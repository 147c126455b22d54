#include "repose/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <json.hpp>

#include "repose/checkpoint.hpp"
#include "repose/image_io.hpp"
#include "repose/train.hpp"

namespace repose {

namespace fs = std::filesystem;

void apply_thread_override() {
#ifdef _OPENMP
  if (const char* env = std::getenv("REPOSE_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) omp_set_num_threads(n);
  }
#endif
}

RunConfig resolve_config(const CommonArgs& args) {
  RunConfig config;
  try {
    if (!args.config_path.empty())
      config = load_run_config(args.config_path);
    else
      config = profile_by_name(args.profile.empty() ? "desk" : args.profile);
    if (args.seed) config.seed = *args.seed;
    if (!args.output_dir.empty()) config.output_dir = args.output_dir;
    config.validate();
  } catch (const std::exception& e) {
    throw CliError("config", e.what());
  }
  return config;
}

int cmd_train(const CommonArgs& args) {
  RunConfig config = resolve_config(args);
  std::cout << "training: " << config.max_steps << " steps, batch " << config.batch_size << ", output "
            << config.output_dir << "\n";
  TrainResult result = train(config, args.checkpoint);
  if (!result.ok) {
    std::cerr << "error[train]: " << result.error;
    if (!result.checkpoint_path.empty()) std::cerr << " (last checkpoint: " << result.checkpoint_path << ")";
    std::cerr << "\n";
    return 3;
  }
  std::cout << "final loss " << result.final_loss << " after " << result.steps_run << " steps\n";
  std::cout << result.final_pck.table(std::string("val ") + to_string(config.pck.reference) + "@" +
                                      std::to_string(config.pck.alpha));
  std::cout << "checkpoint: " << result.checkpoint_path << "\n";
  return 0;
}

namespace {

ReposeModel<float> build_and_load(const RunConfig& config, const std::string& checkpoint) {
  ReposeModel<float> model = ReposeModel<float>::build(config.model, default_skeleton(config.model.keypoints),
                                                       config.seed);
  if (!checkpoint.empty()) {
    try {
      load_checkpoint(checkpoint, model.params());
    } catch (const std::exception& e) {
      throw CliError("checkpoint", e.what());
    }
  }
  return model;
}

}  // namespace

int cmd_eval(const CommonArgs& args, const std::string& dataset_path, const std::string& dataset_format,
             bool oracle_injection, const std::string& table_out) {
  RunConfig config = resolve_config(args);
  ReposeModel<float> model = build_and_load(config, args.checkpoint);

  DatasetSpec spec = config.val_data;
  if (!dataset_path.empty()) {
    spec.type = dataset_format.empty() ? "native" : dataset_format;
    spec.path = dataset_path;
  }
  std::vector<PoseExample> examples;
  try {
    examples = load_dataset(spec);
  } catch (const std::exception& e) {
    throw CliError("io", e.what());
  }

  EvalOptions options;
  options.batch_size = config.batch_size;
  options.limit = config.val_limit;
  options.oracle_injection = oracle_injection;
  EvalOutput out = evaluate_model(model, examples, config, options);

  const std::string label = to_string(config.pck.reference) + std::string("@") + std::to_string(config.pck.alpha);
  std::cout << out.pck.table(label);
  const std::string delim = PckResult::delimited_header() + "\n" + out.pck.delimited(label) + "\n";
  if (!table_out.empty()) {
    std::ofstream f(table_out);
    if (!f) throw CliError("io", "cannot write " + table_out);
    f << delim;
  } else {
    std::cout << delim;
  }
  return 0;
}

int cmd_infer(const CommonArgs& args, const std::string& image_path, const std::string& out_dir, bool dump_stages) {
  RunConfig config = resolve_config(args);
  ReposeModel<float> model = build_and_load(config, args.checkpoint);

  PoseExample ex;
  try {
    ex.image = read_ppm(image_path);
  } catch (const std::exception& e) {
    throw CliError("io", e.what());
  }
  ex.image_path = image_path;
  ex.center_x = ex.image.width / 2.0;
  ex.center_y = ex.image.height / 2.0;
  ex.scale = static_cast<double>(std::max(ex.image.width, ex.image.height));
  ex.keypoints.assign(static_cast<std::size_t>(config.model.keypoints), Keypoint2D{});

  const int n = config.model.input_size;
  CropResult crop = crop_normalize(ex, n);
  Tensor<float> input({1, 3, n, n});
  std::copy(crop.image.data(), crop.image.data() + crop.image.size(), input.data());

  Tape<float> tape;
  PosePrediction pred = model.forward(tape, input, kInferenceMode);

  fs::create_directories(out_dir);
  const std::string stem = fs::path(image_path).stem().string();

  std::vector<Keypoint2D> decoded(static_cast<std::size_t>(config.model.keypoints));
  const Tensor<float>& final_stack = tape.value(pred.final_id);
  for (int k = 0; k < config.model.keypoints; ++k) {
    PeakDecode peak = decode_peak(extract_channel(final_stack, 0, k));
    if (peak.detected) {
      auto [ox, oy] = crop.to_original.apply(peak.x, peak.y);
      decoded[static_cast<std::size_t>(k)] = {ox, oy, true};
    }
  }

  Image overlay = ex.image;
  draw_pose_overlay(overlay, decoded, model.skeleton());
  const std::string overlay_path = (fs::path(out_dir) / (stem + "_overlay.ppm")).string();
  write_ppm(overlay, overlay_path);
  std::cout << "overlay: " << overlay_path << "\n";

  if (dump_stages) {
    // pre-update, post-update and final panels per keypoint, plus the raw
    // stacks in the tensor container for downstream tooling
    const struct {
      const char* tag;
      int node;
    } stages[] = {{"pre", pred.stacks[0]}, {"post", pred.stacks[1]}, {"final", pred.final_id}};
    std::vector<std::pair<std::string, const Tensor<float>*>> raw;
    for (const auto& stage : stages) {
      const Tensor<float>& stack = tape.value(stage.node);
      raw.emplace_back(stage.tag, &stack);
      for (int k = 0; k < config.model.keypoints; ++k) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%s_k%02d_%s.pgm", stem.c_str(), k, stage.tag);
        write_pgm_heatmap(extract_channel(stack, 0, k), (fs::path(out_dir) / buf).string());
      }
    }
    save_tensors<float>((fs::path(out_dir) / (stem + "_stacks.ckpt")).string(), raw);
    std::cout << "heatmap panels: " << 3 * config.model.keypoints << " files in " << out_dir << "\n";
  }
  return 0;
}

int cmd_describe(const CommonArgs& args) {
  RunConfig config = resolve_config(args);
  ReposeModel<float> model = ReposeModel<float>::build(config.model, default_skeleton(config.model.keypoints),
                                                       config.seed);
  std::cout << model.describe();
  return 0;
}

int cmd_ablate(const CommonArgs& args, const std::string& grid_path, const std::string& out_path) {
  RunConfig base = resolve_config(args);

  std::vector<std::string> strategies;
  std::vector<int> coarsest_values;
  long cell_steps = 0;
  if (!grid_path.empty()) {
    std::ifstream in(grid_path);
    if (!in) throw CliError("io", "cannot open grid config " + grid_path);
    nlohmann::json j;
    try {
      in >> j;
      if (j.contains("strategies")) strategies = j.at("strategies").get<std::vector<std::string>>();
      if (j.contains("coarsest")) coarsest_values = j.at("coarsest").get<std::vector<int>>();
      if (j.contains("max_steps")) cell_steps = j.at("max_steps").get<long>();
      if (j.contains("train_count")) base.train_data.count = j.at("train_count").get<int>();
      if (j.contains("val_count")) base.val_data.count = j.at("val_count").get<int>();
    } catch (const nlohmann::json::exception& e) {
      throw CliError("config", std::string("grid config: ") + e.what());
    }
  } else {
    strategies = {"trainable", "add", "replace"};
    coarsest_values = {8, 16, 32};
  }

  if (strategies.empty() && coarsest_values.empty()) {
    std::cout << "ablation grid is empty; nothing to do\n";
    return 0;
  }
  if (strategies.empty()) strategies = {to_string(base.model.update_strategy)};
  if (coarsest_values.empty()) coarsest_values = {base.model.coarsest_size};
  if (cell_steps > 0) base.max_steps = cell_steps;

  struct Cell {
    std::string strategy;
    int coarsest;
    std::int64_t params = 0;
    double flops = 0;
    double loss = 0;
    double mean_pck = 0;
    bool ok = false;
    std::string error;
  };
  std::vector<Cell> cells;

  fs::create_directories(base.output_dir);
  for (const auto& strategy : strategies)
    for (int cs : coarsest_values) {
      Cell cell;
      cell.strategy = strategy;
      cell.coarsest = cs;
      RunConfig config = base;
      try {
        config.model.update_strategy = update_strategy_from_string(strategy);
        config.model.coarsest_size = cs;
        config.output_dir = (fs::path(base.output_dir) / ("cell_" + strategy + "_" + std::to_string(cs))).string();
        config.validate();
        ReposeModel<float> probe = ReposeModel<float>::build(config.model, default_skeleton(config.model.keypoints),
                                                             config.seed);
        cell.params = probe.trainable_param_count();
        cell.flops = probe.flops_estimate();
        TrainResult tr = train(config);  // shared seed across cells
        if (!tr.ok) throw std::runtime_error(tr.error);
        cell.loss = tr.final_loss;
        cell.mean_pck = tr.final_pck.mean;
        cell.ok = true;
      } catch (const std::exception& e) {
        cell.error = e.what();
      }
      std::cout << "cell strategy=" << cell.strategy << " coarsest=" << cell.coarsest
                << (cell.ok ? " done" : std::string(" FAILED: ") + cell.error) << "\n";
      cells.push_back(std::move(cell));
    }

  std::ostringstream tsv;
  tsv << "strategy\tcoarsest\tparams\tflops\tfinal_loss\tmean_pck\tstatus\n";
  for (const auto& c : cells)
    tsv << c.strategy << '\t' << c.coarsest << '\t' << c.params << '\t' << c.flops << '\t' << c.loss << '\t'
        << c.mean_pck << '\t' << (c.ok ? "ok" : "failed: " + c.error) << '\n';

  // coarsest-resolution matrix (params / FLOPs / PCK per resolution)
  tsv << "\nresolution_matrix\ncoarsest\tmean_pck\tparams\tflops\n";
  for (int cs : coarsest_values)
    for (const auto& c : cells)
      if (c.coarsest == cs && c.strategy == strategies.front())
        tsv << cs << "x" << cs << '\t' << c.mean_pck << '\t' << c.params << '\t' << c.flops << '\n';
  // update-strategy matrix
  tsv << "\nstrategy_matrix\nstrategy\tmean_pck\n";
  for (const auto& s : strategies)
    for (const auto& c : cells)
      if (c.strategy == s && c.coarsest == coarsest_values.front()) tsv << s << '\t' << c.mean_pck << '\n';

  const std::string path = out_path.empty() ? (fs::path(base.output_dir) / "ablate_results.tsv").string() : out_path;
  std::ofstream f(path);
  if (!f) throw CliError("io", "cannot write " + path);
  f << tsv.str();
  std::cout << tsv.str();
  std::cout << "results: " << path << "\n";
  const bool all_ok = std::all_of(cells.begin(), cells.end(), [](const Cell& c) { return c.ok; });
  return all_ok ? 0 : 4;
}

int cmd_convert(const std::string& format, const std::string& input, const std::string& output, int target_keypoints) {
  AnnotationFormat fmt;
  if (format == "lsp_style")
    fmt = AnnotationFormat::lsp_style;
  else if (format == "mpii_style")
    fmt = AnnotationFormat::mpii_style;
  else if (format == "native")
    fmt = AnnotationFormat::native;
  else
    throw CliError("config", "unknown annotation format '" + format + "'");
  LoadResult loaded;
  try {
    loaded = load_annotations(input, fmt, /*load_images=*/false);
  } catch (const std::exception& e) {
    throw CliError("io", e.what());
  }
  if (loaded.dropped > 0) std::cerr << "warning: dropped " << loaded.dropped << " empty record(s)\n";
  std::vector<PoseExample> examples = std::move(loaded.examples);
  if (target_keypoints > 0 && !examples.empty() &&
      static_cast<int>(examples.front().keypoints.size()) != target_keypoints) {
    const int have = static_cast<int>(examples.front().keypoints.size());
    examples = unify_keypoint_space(examples, default_skeleton(have), default_skeleton(target_keypoints));
  }
  save_annotations(output, examples);
  std::cout << "wrote " << examples.size() << " record(s) to " << output << "\n";
  return 0;
}

}  // namespace repose
