#include "repose/config.hpp"

#include <fstream>

#include <json.hpp>

namespace repose {

using nlohmann::json;

void RunConfig::validate() const {
  model.validate();
  augment.validate();
  pck.validate();
  if (batch_size < 1) throw std::invalid_argument("run config: batch_size must be >= 1");
  if (max_steps < 1) throw std::invalid_argument("run config: max_steps must be >= 1");
  if (lr_schedule.empty()) throw std::invalid_argument("run config: lr_schedule must not be empty");
  if (lr_schedule.front().step != 0) throw std::invalid_argument("run config: lr_schedule must start at step 0");
  for (std::size_t i = 1; i < lr_schedule.size(); ++i)
    if (lr_schedule[i].step <= lr_schedule[i - 1].step)
      throw std::invalid_argument("run config: lr_schedule steps must be strictly increasing");
  if (!(sigma > 0)) throw std::invalid_argument("run config: sigma must be positive");
  if (val_limit < 1) throw std::invalid_argument("run config: val_limit must be >= 1");
}

namespace {

json model_to_json(const ReposeConfig& m) {
  return json{{"keypoints", m.keypoints},
              {"input_size", m.input_size},
              {"coarsest_size", m.coarsest_size},
              {"decoupled_channels", m.decoupled_channels},
              {"trunk_channels", m.trunk_channels},
              {"update_conv_blocks", m.update_conv_blocks},
              {"update_strategy", to_string(m.update_strategy)},
              {"ordering_variant", to_string(m.ordering_variant)},
              {"stack_count", m.stack_count},
              {"joint_post_update_head", m.joint_post_update_head},
              {"head_conv_blocks", m.head_conv_blocks},
              {"bn_before_relu", m.bn_before_relu}};
}

ReposeConfig model_from_json(const json& j) {
  ReposeConfig m;
  m.keypoints = j.at("keypoints").get<int>();
  m.input_size = j.at("input_size").get<int>();
  m.coarsest_size = j.at("coarsest_size").get<int>();
  m.decoupled_channels = j.at("decoupled_channels").get<int>();
  m.trunk_channels = j.at("trunk_channels").get<int>();
  m.update_conv_blocks = j.at("update_conv_blocks").get<int>();
  m.update_strategy = update_strategy_from_string(j.at("update_strategy").get<std::string>());
  m.ordering_variant = ordering_variant_from_string(j.at("ordering_variant").get<std::string>());
  m.stack_count = j.at("stack_count").get<int>();
  m.joint_post_update_head = j.at("joint_post_update_head").get<bool>();
  m.head_conv_blocks = j.at("head_conv_blocks").get<int>();
  m.bn_before_relu = j.at("bn_before_relu").get<bool>();
  return m;
}

json augment_to_json(const AugmentConfig& a) {
  return json{{"scale_min", a.scale_min},       {"scale_max", a.scale_max},
              {"rotation_max_deg", a.rotation_max_deg}, {"hflip_prob", a.hflip_prob},
              {"brightness_min", a.brightness_min},     {"brightness_max", a.brightness_max},
              {"contrast_min", a.contrast_min},         {"contrast_max", a.contrast_max},
              {"channel_jitter", a.channel_jitter}};
}

AugmentConfig augment_from_json(const json& j) {
  AugmentConfig a;
  a.scale_min = j.at("scale_min").get<double>();
  a.scale_max = j.at("scale_max").get<double>();
  a.rotation_max_deg = j.at("rotation_max_deg").get<double>();
  a.hflip_prob = j.at("hflip_prob").get<double>();
  a.brightness_min = j.at("brightness_min").get<double>();
  a.brightness_max = j.at("brightness_max").get<double>();
  a.contrast_min = j.at("contrast_min").get<double>();
  a.contrast_max = j.at("contrast_max").get<double>();
  a.channel_jitter = j.at("channel_jitter").get<double>();
  return a;
}

json dataset_to_json(const DatasetSpec& d) {
  return json{{"type", d.type},
              {"path", d.path},
              {"count", d.count},
              {"canvas", d.canvas},
              {"occluded_fraction", d.occluded_fraction},
              {"unannotated_fraction", d.unannotated_fraction},
              {"seed", d.seed}};
}

DatasetSpec dataset_from_json(const json& j) {
  DatasetSpec d;
  d.type = j.at("type").get<std::string>();
  d.path = j.at("path").get<std::string>();
  d.count = j.at("count").get<int>();
  d.canvas = j.at("canvas").get<int>();
  d.occluded_fraction = j.at("occluded_fraction").get<double>();
  d.unannotated_fraction = j.at("unannotated_fraction").get<double>();
  d.seed = j.at("seed").get<std::uint64_t>();
  return d;
}

}  // namespace

std::string serialize_run_config(const RunConfig& c) {
  json j;
  j["model"] = model_to_json(c.model);
  j["augment"] = augment_to_json(c.augment);
  j["adam"] = json{{"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"eps", c.adam.eps}};
  j["batch_size"] = c.batch_size;
  auto& sched = j["lr_schedule"] = json::array();
  for (const auto& p : c.lr_schedule) sched.push_back(json{{"step", p.step}, {"lr", p.lr}});
  j["max_steps"] = c.max_steps;
  j["seed"] = c.seed;
  j["sigma"] = c.sigma;
  j["augment_enabled"] = c.augment_enabled;
  j["train_data"] = dataset_to_json(c.train_data);
  j["val_data"] = dataset_to_json(c.val_data);
  j["output_dir"] = c.output_dir;
  j["log_every"] = c.log_every;
  j["checkpoint_every"] = c.checkpoint_every;
  j["eval_every"] = c.eval_every;
  j["val_limit"] = c.val_limit;
  j["pck"] = json{{"alpha", c.pck.alpha}, {"reference", to_string(c.pck.reference)}};
  return j.dump(2);
}

RunConfig parse_run_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("run config: invalid JSON: ") + e.what());
  }
  RunConfig c;
  c.model = model_from_json(j.at("model"));
  c.augment = augment_from_json(j.at("augment"));
  c.adam.beta1 = j.at("adam").at("beta1").get<double>();
  c.adam.beta2 = j.at("adam").at("beta2").get<double>();
  c.adam.eps = j.at("adam").at("eps").get<double>();
  c.batch_size = j.at("batch_size").get<int>();
  c.lr_schedule.clear();
  for (const auto& p : j.at("lr_schedule")) c.lr_schedule.push_back({p.at("step").get<long>(), p.at("lr").get<double>()});
  c.max_steps = j.at("max_steps").get<long>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.sigma = j.at("sigma").get<double>();
  c.augment_enabled = j.at("augment_enabled").get<bool>();
  c.train_data = dataset_from_json(j.at("train_data"));
  c.val_data = dataset_from_json(j.at("val_data"));
  c.output_dir = j.at("output_dir").get<std::string>();
  c.log_every = j.at("log_every").get<long>();
  c.checkpoint_every = j.at("checkpoint_every").get<long>();
  c.eval_every = j.at("eval_every").get<long>();
  c.val_limit = j.at("val_limit").get<int>();
  c.pck.alpha = j.at("pck").at("alpha").get<double>();
  const std::string ref = j.at("pck").at("reference").get<std::string>();
  if (ref == "torso_diameter")
    c.pck.reference = PckSpec::Reference::torso_diameter;
  else if (ref == "head_length")
    c.pck.reference = PckSpec::Reference::head_length;
  else
    throw std::runtime_error("run config: unknown pck reference '" + ref + "'");
  c.validate();
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("run config: cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_run_config(text);
}

void save_run_config(const RunConfig& config, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("run config: cannot write " + path);
  out << serialize_run_config(config) << '\n';
}

RunConfig paper_profile() {
  RunConfig c;
  c.model.keypoints = 16;
  c.model.input_size = 128;
  c.model.coarsest_size = 16;
  c.model.decoupled_channels = 32;
  c.model.trunk_channels = 64;
  c.model.update_conv_blocks = 4;
  c.model.head_conv_blocks = 4;
  c.model.update_strategy = UpdateStrategy::trainable;
  c.batch_size = 64;
  c.lr_schedule = {{0, 1e-3}, {1000000, 5e-4}, {1300000, 1e-6}};
  c.max_steps = 2000000;
  c.sigma = 5.0;
  c.augment = AugmentConfig{};  // scaling [0.7,1.3], rotation +-60, flip 0.5, color noise
  c.train_data.type = "native";
  c.val_data.type = "native";
  c.pck.alpha = 0.5;
  c.pck.reference = PckSpec::Reference::head_length;
  c.output_dir = "runs/paper";
  c.log_every = 100;
  c.checkpoint_every = 10000;
  c.val_limit = 3000;
  return c;
}

RunConfig desk_profile() {
  RunConfig c;
  c.model.keypoints = 14;
  c.model.input_size = 64;
  c.model.coarsest_size = 8;
  c.model.decoupled_channels = 8;
  c.model.trunk_channels = 12;
  c.model.update_conv_blocks = 1;
  c.model.head_conv_blocks = 2;
  c.model.update_strategy = UpdateStrategy::trainable;
  c.batch_size = 8;
  c.lr_schedule = {{0, 3e-3}, {1500, 1e-3}, {2200, 3e-4}};
  c.max_steps = 2600;
  // sigma/coarse-cell ratio chosen to match the published 5-to-8 pairing at
  // the desk coarsest pitch (64/8 px)
  c.sigma = 4.0;
  c.augment.scale_min = 0.88;
  c.augment.scale_max = 1.12;
  c.augment.rotation_max_deg = 15.0;
  c.augment.hflip_prob = 0.0;  // left/right colors are the synthetic cue
  c.augment.channel_jitter = 0.02;
  c.augment.brightness_min = 0.92;
  c.augment.brightness_max = 1.08;
  c.augment.contrast_min = 0.92;
  c.augment.contrast_max = 1.08;
  c.train_data = DatasetSpec{"synthetic", "", 2000, 80, 0.10, 0.10, 7};
  c.val_data = DatasetSpec{"synthetic", "", 200, 80, 0.05, 0.0, 1234};
  c.pck.alpha = 0.2;
  c.pck.reference = PckSpec::Reference::torso_diameter;
  c.output_dir = "runs/desk";
  c.log_every = 25;
  c.checkpoint_every = 400;
  c.val_limit = 200;
  return c;
}

RunConfig profile_by_name(const std::string& name) {
  if (name == "paper") return paper_profile();
  if (name == "desk") return desk_profile();
  throw std::invalid_argument("unknown profile '" + name + "' (expected paper or desk)");
}

}  // namespace repose
