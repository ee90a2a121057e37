#pragma once

#include "propnet/models.hpp"
#include "propnet/nn.hpp"
#include "propnet/simulators.hpp"

#include <array>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

namespace propnet {

// ---------------------------------------------------------------------------
// Open-loop shooting on the cradle: choose the release angle of ball 0 so
// that the last ball reaches a target height.

struct CradleShooting {
  int balls = 5;
  CradleGeometry geometry;
  int horizon = 60;
  double temperature = 50.0;  // of the soft maximum over time, 1/m
  double init_deg = 45.0;
  double lr = 0.1;
  int iterations = 50;
  double max_angle = 1.5;  // radians; iterates are clamped to [0, max_angle]
  double dt = kDefaultDt;
};

/// Height of the last ball above its rest position at every step of a
/// rollout released from `angle` (radians), and the softmax-weighted mean
/// of those heights. Recorded on `tape`; `angle` is 1 x 1.
struct CradleHeights {
  Var soft;                    // 1 x 1
  std::vector<double> heights;  // t = 1..horizon
  double hard_max() const;
};

CradleHeights cradle_heights(Tape& tape, const DynamicsModel& model, Var angle, const CradleShooting& problem);

/// Soft height reached from `angle` under `model` (no gradient).
double cradle_soft_height(const DynamicsModel& model, double angle, const CradleShooting& problem);

struct ShootingResult {
  double angle = 0.0;  // best-loss iterate, radians
  double loss = 0.0;
  double hard_height = 0.0;
  int best_iteration = 0;
  std::vector<double> angles;  // every evaluated iterate
  std::vector<double> losses;
};

/// Adam on the release angle against (soft height - target)^2. A
/// non-finite loss or gradient halves the last step and retries (at most 5
/// times) before NumericError is thrown. Returns the best-loss iterate.
ShootingResult shoot_cradle(const DynamicsModel& model, double target_height, const CradleShooting& problem);

// ---------------------------------------------------------------------------
// String manipulation: forces on the two masses at the free end drive the
// string to a goal configuration.

/// Log-space estimate of the string attributes the controller cannot
/// observe, in the order mass, stiffness, damping, friction.
struct AttributeEstimate {
  enum Index { kMass = 0, kStiffness = 1, kDamping = 2, kFriction = 3 };

  Eigen::Vector4d log_value = Eigen::Vector4d::Zero();
  std::array<bool, 4> active{false, true, false, false};
  double lr = 0.5;
  int window = 20;
  double bound = std::log(10.0);  // clamp |log(value / nominal)| to this
  Eigen::Vector4d log_nominal = Eigen::Vector4d::Zero();

  static AttributeEstimate from(const StringAttributes& a);
  StringAttributes apply(StringAttributes base) const;
  double value(int i) const { return std::exp(log_value[i]); }
};

/// Graph features with the estimated attributes written into the mass,
/// stiffness, damping and friction slots as functions of a 1 x 4 log
/// attribute Var, so gradients reach the estimate.
class AttributeBinding {
 public:
  explicit AttributeBinding(const DynamicsGraph& graph);
  GraphInputs bind(Tape& tape, Var log_attributes) const;
  const Topology& topology() const { return topology_; }

 private:
  Topology topology_;
  Tensor objects_, relations_;
  Tensor object_mask_, relation_mask_;
  Tensor object_select_, relation_select_;  // 4 x D
};

/// One SGD step on the active attributes through the model, minimising the
/// normalised prediction error L_s = sum ||v_hat - v||^2 / (sum ||v - v_prev||^2 + eps)
/// for the transition from `observed_prev` (with the forces that were
/// applied) to the velocities observed one step later. Returns L_s before
/// the step.
double adapt_attributes(const DynamicsModel& model, AttributeEstimate& estimate, const DynamicsGraph& observed_prev,
                        const std::vector<Vec2>& observed_velocity);

struct PdGains {
  double kp = 10.0;
  double kd = 1.0;
};

/// kp (goal - position) - kd velocity on each controlled mass; zero
/// elsewhere.
std::vector<Vec2> pd_control(const StringState& state, const std::vector<Vec2>& goal, const std::vector<int>& controlled,
                             const PdGains& gains);

struct StringEpisode {
  StringState initial;
  StringParams truth;
  std::vector<Vec2> goal;  // positions of every mass at the horizon
  std::vector<int> controlled;
  int horizon = 30;
};

/// Straight string with obstacles placed as in the training data; the goal
/// is what the true system reaches under random piecewise-constant forces
/// on the controlled masses, so it is attainable.
StringEpisode make_string_episode(int masses, int horizon, std::uint64_t seed, double goal_force_sigma = 0.5);

/// Mean squared distance between mass positions and the goal.
double string_goal_loss(const std::vector<Vec2>& positions, const std::vector<Vec2>& goal);

enum class Planner { MPC, OpenLoop, PD };

struct MpcConfig {
  int iterations = 10;  // N inner updates per control step
  double lr = 0.05;
  int backtracks = 5;
  bool adapt = false;
  double disturbance_sigma = 0.0;  // process noise force on every free mass
  std::uint64_t disturbance_seed = 0;
  int open_loop_iterations = 200;
  PdGains gains;
};

struct MpcState {
  Eigen::MatrixXd controls;  // horizon x (2 * controlled)
  AttributeEstimate estimate;
  int t = 0;
};

struct MpcStepResult {
  std::vector<double> inner_losses;  // L_g before and after each inner update
  DynamicsGraph predicted_next;
};

/// Model graph for an observed state: true geometry, estimated attributes,
/// forces from row t of the control plan.
DynamicsGraph model_graph(const StringEpisode& ep, const StringState& observed, const AttributeEstimate& estimate,
                          const Eigen::MatrixXd& controls, int t);

/// One step of model-predictive control: N backtracking Adam updates of
/// controls t..T-1 against the goal loss, rolling the model out from
/// `observed`.
/// Returns the inner loss trace and the predicted next graph. Throws
/// InvalidState when t >= horizon.
MpcStepResult mpc_step(const DynamicsModel& model, const StringEpisode& ep, const StringState& observed, MpcState& state,
                       const MpcConfig& config);

struct EpisodeLog {
  double final_loss = 0.0;
  std::vector<double> goal_loss;                 // true L_g after each step
  std::vector<Eigen::Vector4d> attributes;       // estimate after each step
  std::vector<std::vector<double>> inner_losses;  // per MPC step
  std::vector<std::vector<Vec2>> trajectory;     // true positions, t = 0..T
  std::vector<std::vector<Vec2>> forces;         // applied forces per step
  bool inner_descent = true;                     // every inner trace non-increasing
};

/// Runs one closed-loop episode on the true system. The model sees the
/// true geometry and the attribute estimate initialised from
/// `model_attributes`; with config.adapt the estimate is refined during
/// the first `window` steps.
EpisodeLog run_string_episode(const DynamicsModel& model, const StringEpisode& ep,
                              const StringAttributes& model_attributes, Planner planner, const MpcConfig& config);

/// Uniform multiplicative noise of +-fraction on mass, stiffness, damping
/// and friction.
StringAttributes bias_attributes(const StringAttributes& a, double fraction, std::mt19937_64& rng);

// ---------------------------------------------------------------------------
// Box pushing with the latent model.

struct BoxEpisode {
  BoxScene initial;
  BoxScene goal_scene;
  std::vector<Vec2> goal;  // observable goal positions
  int horizon = 30;
};

/// Random pile pushed by a random smooth action sequence for `horizon`
/// steps and left to come to rest; the goal is the resulting observable
/// configuration. Draws where the observable boxes end closer than
/// kMinGoalChamfer to where they started (the push missed, or moved only
/// hidden boxes) are redrawn, up to 100 times; short horizons may never
/// get there, and then the draw that moved the most is kept.
inline constexpr double kMinGoalChamfer = 5e-4;  // m^2
BoxEpisode make_box_episode(int boxes, double visible_fraction, int horizon, std::uint64_t seed);

struct BoxMpcConfig {
  int iterations = 10;
  double lr = 0.05;
  int backtracks = 5;
  double max_heading = std::numbers::pi / 3.0;  // pusher heading bound about +x
  int samples = 16;      // random initial plans tried at every step
  int sample_hold = 10;  // steps each sampled velocity is held
  std::uint64_t seed = 0;
};

struct BoxEpisodeResult {
  double final_chamfer = 0.0;
  double baseline_chamfer = 0.0;  // zero-action baseline
  std::vector<Vec2> actions;
  std::vector<std::vector<Vec2>> trajectory;  // observable positions
};

/// Shooting MPC in latent space: at every step encode the observation,
/// pick the best of the warm-started plan and `samples` random feasible
/// plans, optimise it against ||z_T - tau(goal)||^2 and execute its first
/// velocity.
BoxEpisodeResult run_box_episode(const Model& model, const BoxEpisode& ep, const BoxMpcConfig& config);

}  // namespace propnet
