#include <iostream>

#include <CLI11.hpp>

#include "repose/cli.hpp"

int main(int argc, char** argv) {
  repose::apply_thread_override();

  CLI::App app{"repose: kinematically structured pose estimation"};
  app.require_subcommand(1);

  repose::CommonArgs common;
  std::uint64_t seed_value = 0;
  bool seed_set = false;
  auto add_common = [&](CLI::App* sub, bool with_checkpoint = true) {
    sub->add_option("--config", common.config_path, "run config JSON path");
    sub->add_option("--profile", common.profile, "built-in profile: paper or desk");
    sub->add_option("--seed", seed_value, "seed override")->each([&](const std::string&) { seed_set = true; });
    sub->add_option("--output-dir", common.output_dir, "output directory override");
    if (with_checkpoint) sub->add_option("--checkpoint", common.checkpoint, "checkpoint path");
  };

  auto* train_cmd = app.add_subcommand("train", "train a model");
  add_common(train_cmd);

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint (PCK table)");
  add_common(eval_cmd);
  std::string eval_dataset, eval_format, table_out;
  bool oracle_injection = false;
  eval_cmd->add_option("--dataset", eval_dataset, "annotation file overriding the config's val set");
  eval_cmd->add_option("--format", eval_format, "dataset format: native | lsp_style | mpii_style | synthetic");
  eval_cmd->add_flag("--oracle-injection", oracle_injection, "decode rendered ground truth instead of model output");
  eval_cmd->add_option("--table-out", table_out, "write the delimited table to this path");

  auto* infer_cmd = app.add_subcommand("infer", "run on an image, write overlay and heatmaps");
  add_common(infer_cmd);
  std::string image_path, infer_out = "infer_out";
  bool dump_stages = false;
  infer_cmd->add_option("--image", image_path, "input image (binary PPM)")->required();
  infer_cmd->add_option("--out", infer_out, "output directory");
  infer_cmd->add_flag("--dump-stages", dump_stages, "write pre/post/final heatmap panels per keypoint");

  auto* ablate_cmd = app.add_subcommand("ablate", "train/evaluate an ablation grid");
  add_common(ablate_cmd, false);
  std::string grid_path, ablate_out;
  ablate_cmd->add_option("--grid", grid_path, "grid config JSON (strategies, coarsest, max_steps, ...)");
  ablate_cmd->add_option("--out", ablate_out, "result TSV path");

  auto* describe_cmd = app.add_subcommand("describe", "print the layer plan, parameter count and FLOPs");
  add_common(describe_cmd, false);

  auto* convert_cmd = app.add_subcommand("convert", "convert annotations to the native format");
  std::string conv_format, conv_input, conv_output;
  int conv_k = 0;
  convert_cmd->add_option("--format", conv_format, "input format: lsp_style | mpii_style | native")->required();
  convert_cmd->add_option("--input", conv_input, "input annotation file")->required();
  convert_cmd->add_option("--output", conv_output, "output native annotation file")->required();
  convert_cmd->add_option("--to-keypoints", conv_k, "map into this keypoint space (14 or 16)");

  CLI11_PARSE(app, argc, argv);
  if (seed_set) common.seed = seed_value;

  try {
    if (app.got_subcommand(train_cmd)) return repose::cmd_train(common);
    if (app.got_subcommand(eval_cmd))
      return repose::cmd_eval(common, eval_dataset, eval_format, oracle_injection, table_out);
    if (app.got_subcommand(infer_cmd)) return repose::cmd_infer(common, image_path, infer_out, dump_stages);
    if (app.got_subcommand(ablate_cmd)) return repose::cmd_ablate(common, grid_path, ablate_out);
    if (app.got_subcommand(describe_cmd)) return repose::cmd_describe(common);
    if (app.got_subcommand(convert_cmd)) return repose::cmd_convert(conv_format, conv_input, conv_output, conv_k);
  } catch (const repose::CliError& e) {
    std::cerr << "error[" << e.category << "]: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error[internal]: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
