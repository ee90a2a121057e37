#pragma once

#include "propnet/control.hpp"
#include "propnet/dataset.hpp"
#include "propnet/models.hpp"
#include "propnet/training.hpp"

#include <json.hpp>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace propnet {

/// Invalid configuration; the message starts with the dotted field path.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(const std::string& path, const std::string& what)
      : std::invalid_argument(path + ": " + what), path_(path) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

struct EvalSettings {
  std::vector<int> horizons{1, 10, 20, 50};
  int rollouts = 0;  // 0: every rollout in the dataset
};

struct ControlSettings {
  int episodes = 1;
  int horizon = 30;  // string and boxes; the cradle uses shooting_horizon
  std::string planner = "mpc";  // mpc | open_loop | pd
  int iterations = 10;
  double lr = 0.05;
  int backtracks = 5;
  bool adapt = false;
  double bias = 0.0;  // multiplicative attribute noise given to the model
  double disturbance_sigma = 0.0;
  double kp = 10.0;
  double kd = 1.0;
  int masses = 15;
  int boxes = 8;
  double visible_fraction = 0.6;
  // Cradle shooting.
  double target_angle_deg = 60.0;
  double init_deg = 45.0;
  double shooting_lr = 0.1;
  int shooting_iterations = 50;
  int shooting_horizon = 60;
  double temperature = 50.0;
};

/// One JSON document describing a run. `seed` seeds data generation, model
/// initialisation, the train/validation split and control episodes.
struct RunConfig {
  Scenario scenario = Scenario::Cradle;
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  std::string dataset;     // default: <output_dir>/dataset.ndjson.gz
  std::string checkpoint;  // default: <output_dir>/model.ckpt
  bool oracle = false;     // "model": "oracle" selects the ground-truth simulator
  DataConfig data;
  ModelSpec model;
  TrainConfig train;
  EvalSettings eval;
  ControlSettings control;
};

/// Validates and converts a configuration document. Unknown keys, wrong
/// types and out-of-range values throw ConfigError naming the field path.
RunConfig run_config_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const RunConfig& c);

/// Applies "a.b.c=value" to `doc`; the value is parsed as JSON and kept as
/// a string when that fails. Intermediate objects are created as needed.
void apply_override(nlohmann::json& doc, std::string_view assignment);

/// Reads `path`, applies the overrides in order and validates.
RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides = {});

}  // namespace propnet
