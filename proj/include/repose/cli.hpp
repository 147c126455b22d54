#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "repose/config.hpp"

namespace repose {

struct CliError : std::runtime_error {
  std::string category;
  CliError(std::string cat, const std::string& message)
      : std::runtime_error(message), category(std::move(cat)) {}
};

struct CommonArgs {
  std::string config_path;  // JSON run config
  std::string profile;      // built-in profile name
  std::string checkpoint;
  std::optional<std::uint64_t> seed;
  std::string output_dir;
};

// Profile (default desk) overlaid with an optional config file, then
// command-line overrides.
RunConfig resolve_config(const CommonArgs& args);

int cmd_train(const CommonArgs& args);
int cmd_eval(const CommonArgs& args, const std::string& dataset_path, const std::string& dataset_format,
             bool oracle_injection, const std::string& table_out);
int cmd_infer(const CommonArgs& args, const std::string& image_path, const std::string& out_dir, bool dump_stages);
int cmd_ablate(const CommonArgs& args, const std::string& grid_path, const std::string& out_path);
int cmd_describe(const CommonArgs& args);
int cmd_convert(const std::string& format, const std::string& input, const std::string& output, int target_keypoints);

// REPOSE_THREADS overrides the OpenMP thread count when set.
void apply_thread_override();

}  // namespace repose
