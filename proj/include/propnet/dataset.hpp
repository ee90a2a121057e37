#pragma once

#include "propnet/graph.hpp"
#include "propnet/simulators.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace propnet {

struct DataConfig {
  Scenario scenario = Scenario::String;
  int rollouts = 200;
  int steps = 200;
  std::uint64_t seed = 0;
  double dt = 0.02;

  // Cradle: ball 0 lifted to an angle drawn uniformly in degrees.
  int balls = 5;
  CradleGeometry cradle;
  double min_angle_deg = 15.0;
  double max_angle_deg = 75.0;

  // String: attributes jittered multiplicatively per rollout, Gaussian
  // forces on every free mass redrawn every `force_refresh` steps.
  int masses = 15;
  StringAttributes string;
  double attribute_jitter = 0.2;
  double force_sigma = 0.3;
  int force_refresh = 10;
  double obstacle_stiffness = 1000.0;

  // Boxes.
  int boxes = 8;
  double visible_fraction = 0.6;
  double max_push_speed = 0.5;
  int action_refresh = 10;

  void validate() const;
};

/// One simulated episode. graphs[t] is the (observed) graph at step t with
/// the external forces applied during t -> t+1; controls[t] is the control
/// input of that step: per-object forces flattened (string), the pusher
/// action slot (boxes) or empty (cradle).
struct Rollout {
  Scenario scenario = Scenario::String;
  std::uint64_t seed = 0;
  std::vector<DynamicsGraph> graphs;
  std::vector<std::vector<double>> controls;

  int steps() const { return static_cast<int>(graphs.size()); }
};

/// Two obstacles of radius 0.04-0.08 beside the string, 0.02-0.1 off its
/// axis and clear of every mass and of each other.
std::vector<Obstacle> place_string_obstacles(const StringState& s, const Vec2& dir, double rest,
                                             std::mt19937_64& rng);

/// Rollout `index` of the dataset described by `config`, simulated with
/// the seed config.seed ^ index.
Rollout generate_rollout(const DataConfig& config, int index);
std::vector<Rollout> generate_rollouts(const DataConfig& config);

struct DatasetSummary {
  int rollouts = 0;
  long records = 0;       // step records
  std::uint32_t crc32 = 0;  // of the uncompressed NDJSON text
};

/// Gzip-compressed NDJSON: per rollout a header record
/// {"rollout", "scenario", "seed", "steps"} followed by one
/// {"t", "graph", "control"} record per step.
DatasetSummary write_dataset(const std::vector<Rollout>& rollouts, const std::string& path);
std::vector<Rollout> read_dataset(const std::string& path);

struct Split {
  std::vector<int> train;
  std::vector<int> validation;
};

/// Seeded random partition of rollout indices; round(n * fraction) go to
/// training (at least one of each when n >= 2).
Split split_rollouts(int n, double train_fraction, std::uint64_t seed);

}  // namespace propnet
