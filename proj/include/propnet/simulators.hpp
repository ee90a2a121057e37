#pragma once

#include "propnet/graph.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace propnet {

// ---------------------------------------------------------------------------
// Newton's cradle, simulated in angle space. theta = 0 is hanging straight
// down; positive theta swings towards +x.

struct CradleState {
  std::vector<double> theta;
  std::vector<double> omega;

  int size() const { return static_cast<int>(theta.size()); }
};

std::vector<Vec2> cradle_positions(const CradleState& s, const CradleGeometry& g);

/// Sum of kinetic and pendulum potential energy.
double cradle_energy(const CradleState& s, const CradleGeometry& g);

/// Velocity-level impulse resolution. Repeatedly scans neighbouring pairs
/// and, for every pair whose positions after one more step of length dt
/// would touch and which is approaching, exchanges angular velocities with
/// the given restitution. Stops at the first scan without an exchange.
/// When `map` is given it receives the linear map omega_before ->
/// omega_after. Throws std::runtime_error after n^2 scans.
int resolve_impacts(const std::vector<double>& theta, std::vector<double>& omega, const CradleGeometry& g,
                    double dt, Eigen::MatrixXd* map = nullptr);

/// One step: omega += -dt (g/l) sin(theta); resolve_impacts; theta += dt omega.
CradleState step_cradle(const CradleState& s, const CradleGeometry& g, double dt);

/// Cradle graph for `s`. Ball velocities are chord velocities
/// (q_t - q_{t-1}) / dt taken from `previous` when given, else zero.
DynamicsGraph cradle_graph(const CradleState& s, const CradleGeometry& g, const CradleState* previous = nullptr,
                           double dt = 0.02);

/// All balls at rest except ball 0, lifted to -angle (radians).
CradleState cradle_lifted(int n, double angle);

// ---------------------------------------------------------------------------
// Spring-mass string with a fixed end (mass 0) and two circular obstacles.

struct StringParams {
  StringAttributes attributes;
  std::vector<Obstacle> obstacles;
  double obstacle_stiffness = 1000.0;
  int substeps = 4;
};

struct StringState {
  std::vector<Vec2> positions;
  std::vector<Vec2> velocities;  // chord velocities of the last step

  int size() const { return static_cast<int>(positions.size()); }
};

/// Straight string at rest lengths along `direction` from `fixed_end`.
StringState straight_string(int n, const Vec2& fixed_end, const Vec2& direction, double rest_length);

/// Spring (Hooke + damping) forces on every mass, given per-mass
/// velocities.
std::vector<Vec2> spring_forces(const std::vector<Vec2>& x, const std::vector<Vec2>& u, const StringAttributes& a);

/// Substeps semi-implicit Euler substeps of dt / substeps, starting from
/// the stored velocities. The returned velocities are the chord velocities
/// (x_{t+1} - x_t) / dt. `forces` holds one external force per mass.
StringState step_string(const StringState& s, const StringParams& p, const std::vector<Vec2>& forces, double dt);

double kinetic_energy(const StringState& s, double mass);

DynamicsGraph string_graph(const StringState& s, const StringParams& p, const std::vector<Vec2>& forces = {});

/// Reads masses, obstacles and attributes back from a string graph.
StringState string_state_from_graph(const DynamicsGraph& g);
StringParams string_params_from_graph(const DynamicsGraph& g);

// ---------------------------------------------------------------------------
// Box pushing: discs moved quasi-statically by a circular pusher.

struct BoxScene {
  std::vector<Vec2> centers;
  std::vector<Vec2> velocities;
  std::vector<bool> visible;
  double radius = 0.05;
  Vec2 pusher = Vec2::Zero();
  Vec2 pusher_velocity = Vec2::Zero();
  double pusher_radius = 0.05;
  double max_speed = 0.5;
  int relaxation_iterations = 5;
  double damping = 0.1;

  int size() const { return static_cast<int>(centers.size()); }
};

/// Clamps `action` (target pusher velocity) to max_speed, moves the
/// pusher, lets discs drift with their damped velocities and removes
/// overlaps by positional projection.
BoxScene step_boxes(const BoxScene& scene, const Vec2& action, double dt);

/// Largest pairwise penetration depth (disc-disc and pusher-disc).
double max_penetration(const BoxScene& scene);

std::vector<Vec2> observable_positions(const BoxScene& scene);
DynamicsGraph observe(const BoxScene& scene);

/// [pusher x, pusher y, commanded vx, commanded vy] after clamping.
std::array<double, 4> action_slot(const BoxScene& scene, const Vec2& action);

/// M non-overlapping discs in a loose pile near the origin with the pusher
/// to their left; each disc visible with probability `visible_fraction`
/// (at least one is always visible).
BoxScene random_box_scene(int m, double visible_fraction, std::mt19937_64& rng);

}  // namespace propnet
