#pragma once

#include "propnet/config.hpp"

#include <json.hpp>

#include <iosfwd>
#include <memory>

namespace propnet::cli {

enum ExitCode { kOk = 0, kConfigError = 2, kRuntimeError = 3 };

/// Each command writes its artifacts under config.output_dir plus
/// manifest_<command>.json and returns that manifest. Wall-clock values
/// (timestamp, timings) appear only in the manifest.
nlohmann::json cmd_gen_data(const RunConfig& config);
nlohmann::json cmd_train(const RunConfig& config);
nlohmann::json cmd_eval(const RunConfig& config);
nlohmann::json cmd_control(const RunConfig& config);

/// The ground-truth simulator for cradle or string configs with
/// "model": "oracle", otherwise the checkpoint. Throws ConfigError when the
/// checkpoint was trained on another scenario.
std::shared_ptr<const DynamicsModel> load_model(const RunConfig& config);

/// `propnet gen-data|train|eval|control <config.json> [--set key=value]...`
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace propnet::cli
