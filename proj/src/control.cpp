#include "propnet/control.hpp"

#include "propnet/chamfer.hpp"
#include "propnet/dataset.hpp"
#include "propnet/latent.hpp"
#include "propnet/oracle_models.hpp"
#include "propnet/rollout.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace propnet {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr int kObjAttr = 4;
constexpr int kRelParam = kRelationTypeCount;

double deg(double d) { return d * std::numbers::pi / 180.0; }

bool finite(const Eigen::VectorXd& v) { return v.allFinite(); }

/// Value and gradient at x; +inf when the evaluation is not finite.
using Objective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd& grad)>;
using Projection = std::function<void(Eigen::VectorXd& x)>;

double safe_eval(const Objective& f, const Eigen::VectorXd& x, Eigen::VectorXd& grad) {
  try {
    const double loss = f(x, grad);
    if (!std::isfinite(loss) || !finite(grad)) return kInf;
    return loss;
  } catch (const NumericError&) {
    return kInf;
  }
}

/// Adam proposals accepted only if the objective does not increase; a
/// rejected proposal is halved up to `backtracks` times. Returns the loss
/// before the first and after every iteration.
std::vector<double> descend(Eigen::VectorXd& x, const Objective& f, int iterations, double lr, int backtracks,
                            const Projection& project = {}) {
  Eigen::VectorXd grad(x.size());
  double loss = safe_eval(f, x, grad);
  if (!std::isfinite(loss)) throw NumericError("planning objective is not finite at the initial plan", 0);
  std::vector<double> trace{loss};
  nn::AdamState adam(static_cast<std::size_t>(x.size()));
  Eigen::VectorXd trial_grad(x.size());
  for (int it = 0; it < iterations; ++it) {
    Eigen::VectorXd proposal = x;
    nn::adam_step(std::span<double>(proposal.data(), static_cast<std::size_t>(proposal.size())), grad, adam, lr);
    const Eigen::VectorXd step = proposal - x;
    double scale = 1.0;
    for (int b = 0; b <= backtracks; ++b, scale *= 0.5) {
      Eigen::VectorXd trial = x + scale * step;
      if (project) project(trial);
      const double l = safe_eval(f, trial, trial_grad);
      if (l <= loss) {
        x = trial;
        loss = l;
        grad = trial_grad;
        break;
      }
    }
    trace.push_back(loss);
  }
  return trace;
}

Tensor as_rows(const Eigen::VectorXd& x, Eigen::Index rows, Eigen::Index cols) {
  return Eigen::Map<const Tensor>(x.data(), rows, cols);
}

Eigen::VectorXd as_vector(const Tensor& t) {
  return Eigen::Map<const Eigen::VectorXd>(t.data(), t.size());
}

}  // namespace

// ---------------------------------------------------------------------------
// Cradle shooting

double CradleHeights::hard_max() const {
  return heights.empty() ? 0.0 : *std::max_element(heights.begin(), heights.end());
}

CradleHeights cradle_heights(Tape& tape, const DynamicsModel& model, Var angle, const CradleShooting& problem) {
  if (problem.balls < 1 || problem.horizon < 1) throw std::invalid_argument("cradle shooting needs balls and horizon >= 1");
  const DynamicsGraph g = build_cradle_graph(problem.balls, problem.geometry);
  const FlatGraph flat = flatten(g);
  const Topology topo = topology_of(g);
  const double l = problem.geometry.rod_length;
  const Vec2 pivot0 = problem.geometry.pivot(0);

  Tensor base = flat.objects;
  base(0, 0) = 0.0;
  base(0, 1) = 0.0;
  Var q0 = ad::concat_cols({ad::add_scalar(ad::scale(ad::sin(angle), -l), pivot0.x()),
                            ad::add_scalar(ad::scale(ad::cos(angle), -l), pivot0.y())});
  Var row = ad::concat_cols({q0, tape.constant(Tensor::Zero(1, base.cols() - 2))});
  const std::vector<int> first{0};
  Var objects = ad::add(tape.constant(base), ad::scatter_add_rows(row, first, g.num_objects()));

  const auto states = rollout(tape, model, objects, tape.constant(flat.relations), topo, problem.horizon, {}, problem.dt);

  const int last = problem.balls - 1;
  const double rest_y = problem.geometry.pivot(last).y() - l;
  const std::vector<int> pick{last};
  std::vector<Var> h;
  CradleHeights out;
  for (int t = 1; t <= problem.horizon; ++t) {
    h.push_back(ad::add_scalar(ad::slice_cols(ad::gather_rows(states[static_cast<std::size_t>(t)], pick), 1, 1), -rest_y));
    out.heights.push_back(h.back().scalar());
  }
  Var H = ad::concat_rows(h);
  const double peak = out.hard_max();
  Var w = ad::exp(ad::scale(ad::add_scalar(H, -peak), problem.temperature));
  out.soft = ad::div(ad::sum(ad::mul(w, H)), ad::sum(w));
  return out;
}

double cradle_soft_height(const DynamicsModel& model, double angle, const CradleShooting& problem) {
  Tape tape(model.params());
  Var a = tape.constant(Tensor::Constant(1, 1, angle));
  return cradle_heights(tape, model, a, problem).soft.scalar();
}

ShootingResult shoot_cradle(const DynamicsModel& model, double target_height, const CradleShooting& problem) {
  struct Point {
    double loss, grad, hard;
  };
  auto evaluate = [&](double angle) -> std::optional<Point> {
    try {
      Tape tape(model.params());
      Var a = tape.input(Tensor::Constant(1, 1, angle));
      const CradleHeights h = cradle_heights(tape, model, a, problem);
      Var loss = ad::square(ad::add_scalar(h.soft, -target_height));
      tape.backward(loss);
      const Point p{loss.scalar(), tape.grad(a)(0, 0), h.hard_max()};
      if (!std::isfinite(p.loss) || !std::isfinite(p.grad)) return std::nullopt;
      return p;
    } catch (const NumericError&) {
      return std::nullopt;
    }
  };
  auto clamp = [&](double a) { return std::clamp(a, 0.0, problem.max_angle); };

  ShootingResult result;
  double x = clamp(deg(problem.init_deg));
  auto p = evaluate(x);
  if (!p) throw NumericError("cradle shooting: non-finite loss at the initial angle", 0);
  nn::AdamState adam(1);
  result.loss = kInf;
  for (int it = 0;; ++it) {
    result.angles.push_back(x);
    result.losses.push_back(p->loss);
    if (p->loss < result.loss) {
      result.loss = p->loss;
      result.angle = x;
      result.hard_height = p->hard;
      result.best_iteration = it;
    }
    if (it == problem.iterations) break;

    const double from = x;
    double next = x;
    Eigen::VectorXd g(1);
    g[0] = p->grad;
    nn::adam_step(std::span<double>(&next, 1), g, adam, problem.lr);
    double step = clamp(next) - from;
    std::optional<Point> q;
    for (int retry = 0;; ++retry) {
      x = clamp(from + step);
      q = evaluate(x);
      if (q) break;
      if (retry == 5) throw NumericError("cradle shooting: non-finite loss after halving the step 5 times", it + 1);
      step *= 0.5;
    }
    p = q;
  }
  return result;
}

// ---------------------------------------------------------------------------
// Attribute estimation

AttributeEstimate AttributeEstimate::from(const StringAttributes& a) {
  AttributeEstimate e;
  e.log_value << std::log(a.mass), std::log(a.stiffness), std::log(a.damping), std::log(a.friction);
  e.log_nominal = e.log_value;
  return e;
}

StringAttributes AttributeEstimate::apply(StringAttributes base) const {
  base.mass = value(kMass);
  base.stiffness = value(kStiffness);
  base.damping = value(kDamping);
  base.friction = value(kFriction);
  return base;
}

AttributeBinding::AttributeBinding(const DynamicsGraph& graph) : topology_(topology_of(graph)) {
  const FlatGraph flat = flatten(graph);
  objects_ = flat.objects;
  relations_ = flat.relations;
  object_mask_ = Tensor::Zero(objects_.rows(), objects_.cols());
  relation_mask_ = Tensor::Zero(relations_.rows(), relations_.cols());
  object_select_ = Tensor::Zero(4, objects_.cols());
  relation_select_ = Tensor::Zero(4, relations_.cols());

  const int mass_col = kObjAttr + attr::kMass;
  const int stiffness_col = kRelParam + rparam::kStiffness;
  const int damping_col = kRelParam + rparam::kDamping;
  const int friction_col = kRelParam + rparam::kFriction;
  object_select_(AttributeEstimate::kMass, mass_col) = 1.0;
  relation_select_(AttributeEstimate::kStiffness, stiffness_col) = 1.0;
  relation_select_(AttributeEstimate::kDamping, damping_col) = 1.0;
  relation_select_(AttributeEstimate::kFriction, friction_col) = 1.0;

  for (int i = 0; i < topology_.num_objects; ++i) {
    if (topology_.pinned[static_cast<std::size_t>(i)]) continue;
    object_mask_(i, mass_col) = 1.0;
    objects_(i, mass_col) = 0.0;
  }
  for (int k = 0; k < topology_.num_relations(); ++k) {
    const RelationType t = topology_.types[static_cast<std::size_t>(k)];
    if (t == RelationType::Spring) {
      for (int c : {stiffness_col, damping_col}) {
        relation_mask_(k, c) = 1.0;
        relations_(k, c) = 0.0;
      }
    } else if (t == RelationType::FrictionSelf) {
      relation_mask_(k, friction_col) = 1.0;
      relations_(k, friction_col) = 0.0;
    }
  }
}

GraphInputs AttributeBinding::bind(Tape& tape, Var log_attributes) const {
  Var a = ad::exp(log_attributes);
  auto fill = [&](const Tensor& base, const Tensor& mask, const Tensor& select) {
    Var spread = ad::broadcast_rows(ad::matmul(a, tape.constant(select)), base.rows());
    return ad::add(tape.constant(base), ad::mul(tape.constant(mask), spread));
  };
  return {fill(objects_, object_mask_, object_select_), fill(relations_, relation_mask_, relation_select_), &topology_};
}

double adapt_attributes(const DynamicsModel& model, AttributeEstimate& estimate, const DynamicsGraph& observed_prev,
                        const std::vector<Vec2>& observed_velocity) {
  const AttributeBinding binding(observed_prev);
  const Topology& topo = binding.topology();
  if (static_cast<int>(observed_velocity.size()) > topo.num_objects) {
    throw std::invalid_argument("adapt_attributes: more velocities than objects");
  }
  Tensor target = Tensor::Zero(topo.num_objects, 2);
  Eigen::VectorXd free = Eigen::VectorXd::Zero(topo.num_objects);
  double denom = 1e-8;
  for (std::size_t i = 0; i < observed_velocity.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    if (topo.pinned[i]) continue;
    free[r] = 1.0;
    target.row(r) = observed_velocity[i].transpose();
    denom += (observed_velocity[i] - observed_prev.objects[i].velocity).squaredNorm();
  }

  Tape tape(model.params());
  Var log_a = tape.input(estimate.log_value.transpose());
  const GraphInputs in = binding.bind(tape, log_a);
  Var v = model.next_velocity(tape, in);
  Var diff = ad::scale_rows(ad::sub(v, tape.constant(target)), free);
  Var loss = ad::scale(ad::sum_squares(diff), 1.0 / denom);
  tape.backward(loss);
  Eigen::VectorXd g = as_vector(tape.grad(log_a));
  for (int i = 0; i < 4; ++i) {
    if (!estimate.active[static_cast<std::size_t>(i)]) g[i] = 0.0;
  }
  nn::require_finite(g, "attribute gradient");
  nn::sgd_step(std::span<double>(estimate.log_value.data(), 4), g, estimate.lr);
  for (int i = 0; i < 4; ++i) {
    estimate.log_value[i] = std::clamp(estimate.log_value[i], estimate.log_nominal[i] - estimate.bound,
                                       estimate.log_nominal[i] + estimate.bound);
  }
  return loss.scalar();
}

// ---------------------------------------------------------------------------
// String control

std::vector<Vec2> pd_control(const StringState& state, const std::vector<Vec2>& goal, const std::vector<int>& controlled,
                             const PdGains& gains) {
  std::vector<Vec2> f(state.positions.size(), Vec2::Zero());
  for (int c : controlled) {
    const auto i = static_cast<std::size_t>(c);
    f.at(i) = gains.kp * (goal.at(i) - state.positions[i]) - gains.kd * state.velocities[i];
  }
  return f;
}

StringEpisode make_string_episode(int masses, int horizon, std::uint64_t seed, double goal_force_sigma) {
  if (masses < 3) throw std::invalid_argument("string episodes need at least 3 masses");
  if (horizon < 1) throw std::invalid_argument("string episodes need horizon >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> heading(0.0, 2.0 * std::numbers::pi);
  std::normal_distribution<double> force(0.0, goal_force_sigma);

  StringEpisode ep;
  ep.horizon = horizon;
  ep.controlled = {masses - 1, masses - 2};
  const double a = heading(rng);
  const Vec2 dir(std::cos(a), std::sin(a));
  ep.initial = straight_string(masses, Vec2::Zero(), dir, ep.truth.attributes.rest_length);
  ep.truth.obstacles = place_string_obstacles(ep.initial, dir, ep.truth.attributes.rest_length, rng);

  StringState s = ep.initial;
  std::vector<Vec2> f(static_cast<std::size_t>(masses), Vec2::Zero());
  for (int t = 0; t < horizon; ++t) {
    if (t % 10 == 0) {
      for (int c : ep.controlled) f[static_cast<std::size_t>(c)] = Vec2(force(rng), force(rng));
    }
    s = step_string(s, ep.truth, f, kDefaultDt);
  }
  ep.goal = s.positions;
  return ep;
}

double string_goal_loss(const std::vector<Vec2>& positions, const std::vector<Vec2>& goal) {
  if (positions.size() != goal.size() || goal.empty()) throw std::invalid_argument("goal size mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < goal.size(); ++i) sum += (positions[i] - goal[i]).squaredNorm();
  return sum / static_cast<double>(goal.size());
}

DynamicsGraph model_graph(const StringEpisode& ep, const StringState& observed, const AttributeEstimate& estimate,
                          const Eigen::MatrixXd& controls, int t) {
  StringParams p = ep.truth;
  p.attributes = estimate.apply(p.attributes);
  std::vector<Vec2> f(static_cast<std::size_t>(observed.size()), Vec2::Zero());
  for (std::size_t j = 0; j < ep.controlled.size(); ++j) {
    const auto c = static_cast<std::size_t>(ep.controlled[j]);
    f[c] = Vec2(controls(t, 2 * static_cast<Eigen::Index>(j)), controls(t, 2 * static_cast<Eigen::Index>(j) + 1));
  }
  return string_graph(observed, p, f);
}

MpcStepResult mpc_step(const DynamicsModel& model, const StringEpisode& ep, const StringState& observed, MpcState& state,
                       const MpcConfig& config) {
  const int t = state.t;
  if (t < 0 || t >= ep.horizon) throw InvalidState("mpc_step: horizon exhausted at t = " + std::to_string(t));
  const int T = ep.horizon - t;
  const auto nc = static_cast<Eigen::Index>(2 * ep.controlled.size());
  if (state.controls.rows() != ep.horizon || state.controls.cols() != nc) {
    throw std::invalid_argument("mpc_step: control plan has the wrong shape");
  }

  const DynamicsGraph g = model_graph(ep, observed, state.estimate, state.controls, t);
  const FlatGraph flat = flatten(g);
  const Topology topo = topology_of(g);
  const int n = observed.size();
  std::vector<int> masses(static_cast<std::size_t>(n));
  Tensor goal(n, 2);
  for (int i = 0; i < n; ++i) {
    masses[static_cast<std::size_t>(i)] = i;
    goal.row(i) = ep.goal.at(static_cast<std::size_t>(i)).transpose();
  }

  const Objective objective = [&](const Eigen::VectorXd& x, Eigen::VectorXd& grad) {
    Tape tape(model.params());
    Var u = tape.input(as_rows(x, T, nc));
    const ForceSchedule forces = [&](int k) {
      Var row = ad::slice_rows(u, k, 1);
      std::vector<Var> parts;
      for (Eigen::Index j = 0; j < nc / 2; ++j) parts.push_back(ad::slice_cols(row, 2 * j, 2));
      return ad::scatter_add_rows(ad::concat_rows(parts), ep.controlled, topo.num_objects);
    };
    const auto states = rollout(tape, model, tape.constant(flat.objects), tape.constant(flat.relations), topo, T, forces);
    Var pos = ad::gather_rows(ad::slice_cols(states.back(), 0, 2), masses);
    Var loss = ad::scale(ad::sum_squares(ad::sub(pos, tape.constant(goal))), 1.0 / n);
    tape.backward(loss);
    grad = as_vector(tape.grad(u));
    return loss.scalar();
  };

  Tensor plan = state.controls.block(t, 0, T, nc);
  Eigen::VectorXd x = as_vector(plan);
  MpcStepResult out;
  out.inner_losses = descend(x, objective, config.iterations, config.lr, config.backtracks);
  state.controls.block(t, 0, T, nc) = as_rows(x, T, nc);

  const DynamicsGraph planned = model_graph(ep, observed, state.estimate, state.controls, t);
  out.predicted_next = rollout(model, planned, 1).back();
  return out;
}

EpisodeLog run_string_episode(const DynamicsModel& model, const StringEpisode& ep,
                              const StringAttributes& model_attributes, Planner planner, const MpcConfig& config) {
  const auto nc = static_cast<Eigen::Index>(2 * ep.controlled.size());
  MpcState state;
  state.controls = Eigen::MatrixXd::Zero(ep.horizon, nc);
  state.estimate = AttributeEstimate::from(model_attributes);
  std::mt19937_64 rng(config.disturbance_seed);
  std::normal_distribution<double> noise(0.0, config.disturbance_sigma > 0 ? config.disturbance_sigma : 1.0);

  EpisodeLog log;
  StringState s = ep.initial;
  log.trajectory.push_back(s.positions);
  auto check_descent = [&](const std::vector<double>& trace) {
    for (std::size_t i = 1; i < trace.size(); ++i) log.inner_descent = log.inner_descent && trace[i] <= trace[i - 1];
    log.inner_losses.push_back(trace);
  };

  if (planner == Planner::OpenLoop) {
    MpcConfig once = config;
    once.iterations = config.open_loop_iterations;
    check_descent(mpc_step(model, ep, s, state, once).inner_losses);
  }

  for (int t = 0; t < ep.horizon; ++t) {
    state.t = t;
    if (planner == Planner::MPC) check_descent(mpc_step(model, ep, s, state, config).inner_losses);

    std::vector<Vec2> commanded(static_cast<std::size_t>(s.size()), Vec2::Zero());
    if (planner == Planner::PD) {
      commanded = pd_control(s, ep.goal, ep.controlled, config.gains);
      for (std::size_t j = 0; j < ep.controlled.size(); ++j) {
        const Vec2& f = commanded[static_cast<std::size_t>(ep.controlled[j])];
        state.controls(t, 2 * static_cast<Eigen::Index>(j)) = f.x();
        state.controls(t, 2 * static_cast<Eigen::Index>(j) + 1) = f.y();
      }
    } else {
      for (std::size_t j = 0; j < ep.controlled.size(); ++j) {
        commanded[static_cast<std::size_t>(ep.controlled[j])] =
            Vec2(state.controls(t, 2 * static_cast<Eigen::Index>(j)), state.controls(t, 2 * static_cast<Eigen::Index>(j) + 1));
      }
    }
    std::vector<Vec2> applied = commanded;
    if (config.disturbance_sigma > 0) {
      for (std::size_t i = 1; i < applied.size(); ++i) applied[i] += Vec2(noise(rng), noise(rng));
    }

    const StringState before = s;
    s = step_string(s, ep.truth, applied, kDefaultDt);
    if (config.adapt && t < state.estimate.window) {
      adapt_attributes(model, state.estimate, model_graph(ep, before, state.estimate, state.controls, t), s.velocities);
    }

    log.forces.push_back(commanded);
    log.trajectory.push_back(s.positions);
    log.goal_loss.push_back(string_goal_loss(s.positions, ep.goal));
    log.attributes.push_back(state.estimate.log_value.array().exp());
  }
  log.final_loss = log.goal_loss.back();
  return log;
}

StringAttributes bias_attributes(const StringAttributes& a, double fraction, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(1.0 - fraction, 1.0 + fraction);
  StringAttributes b = a;
  b.mass *= u(rng);
  b.stiffness *= u(rng);
  b.damping *= u(rng);
  b.friction *= u(rng);
  return b;
}

// ---------------------------------------------------------------------------
// Box pushing

BoxEpisode make_box_episode(int boxes, double visible_fraction, int horizon, std::uint64_t seed) {
  if (horizon < 1) throw std::invalid_argument("box episodes need horizon >= 1");
  std::mt19937_64 rng(seed);
  BoxEpisode best;
  double best_change = -1.0;
  for (int attempt = 0; attempt < 100; ++attempt) {
    BoxEpisode ep;
    ep.horizon = horizon;
    ep.initial = random_box_scene(boxes, visible_fraction, rng);
    std::uniform_real_distribution<double> heading(-std::numbers::pi / 6.0, std::numbers::pi / 6.0);
    std::uniform_real_distribution<double> speed(0.5 * ep.initial.max_speed, ep.initial.max_speed);
    BoxScene s = ep.initial;
    Vec2 action = Vec2::Zero();
    for (int t = 0; t < horizon; ++t) {
      if (t % 10 == 0) {
        const double h = heading(rng), v = speed(rng);
        action = Vec2(v * std::cos(h), v * std::sin(h));
      }
      s = step_boxes(s, action, kDefaultDt);
    }
    // The target is a resting configuration: let the pile coast to a stop.
    for (int k = 0; k < 200; ++k) {
      double fastest = 0.0;
      for (const auto& v : s.velocities) fastest = std::max(fastest, v.norm());
      if (fastest < 1e-4) break;
      s = step_boxes(s, Vec2::Zero(), kDefaultDt);
    }
    ep.goal_scene = s;
    ep.goal = observable_positions(s);
    const double change = chamfer(observable_positions(ep.initial), ep.goal);
    if (change >= kMinGoalChamfer) return ep;
    if (change > best_change) {
      best_change = change;
      best = std::move(ep);
    }
  }
  return best;
}

BoxEpisodeResult run_box_episode(const Model& model, const BoxEpisode& ep, const BoxMpcConfig& config) {
  if (!model.spec().latent()) throw std::invalid_argument("box control needs the latent model");
  if (config.samples < 0 || config.sample_hold < 1) throw std::invalid_argument("invalid box MPC sampling settings");
  Tensor z_goal;
  {
    Tape tape(model.params());
    z_goal = encode(tape, model, observe(ep.goal_scene)).value();
  }
  const double max_speed = ep.initial.max_speed;

  BoxEpisodeResult result;
  result.baseline_chamfer = chamfer(observable_positions(ep.initial), ep.goal);
  BoxScene scene = ep.initial;
  result.trajectory.push_back(observable_positions(scene));
  Eigen::MatrixXd plan = Eigen::MatrixXd::Zero(ep.horizon, 2);

  // Feasible pusher velocities: speed <= max_speed, heading within
  // max_heading of +x (the pile is pushed forward).
  const Vec2 upper(std::cos(config.max_heading), std::sin(config.max_heading));
  const Vec2 lower(upper.x(), -upper.y());
  const Projection feasible = [&](Eigen::VectorXd& x) {
    for (Eigen::Index k = 0; k + 1 < x.size(); k += 2) {
      Vec2 a(x[k], x[k + 1]);
      if (std::abs(std::atan2(a.y(), a.x())) > config.max_heading) {
        const Vec2& edge = a.y() >= 0.0 ? upper : lower;
        a = std::max(0.0, a.dot(edge)) * edge;
      }
      if (a.norm() > max_speed) a *= max_speed / a.norm();
      x[k] = a.x();
      x[k + 1] = a.y();
    }
  };

  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> heading(-config.max_heading, config.max_heading);
  std::uniform_real_distribution<double> speed(0.0, max_speed);

  for (int t = 0; t < ep.horizon; ++t) {
    const int T = ep.horizon - t;
    const DynamicsGraph now = observe(scene);
    const Vec2 pusher = scene.pusher;
    const Objective objective = [&](const Eigen::VectorXd& x, Eigen::VectorXd& grad) {
      Tape tape(model.params());
      Var u = tape.input(as_rows(x, T, 2));
      Var z = encode(tape, model, now);
      Var p = tape.constant(pusher.transpose());
      for (int k = 0; k < T; ++k) {
        Var a = ad::slice_rows(u, k, 1);
        z = model.latent_step(tape, z, ad::concat_cols({p, a}));
        p = ad::add(p, ad::scale(a, kDefaultDt));
      }
      Var loss = ad::sum_squares(ad::sub(z, tape.constant(z_goal)));
      tape.backward(loss);
      grad = as_vector(tape.grad(u));
      return loss.scalar();
    };
    Tensor rest = plan.block(t, 0, T, 2);
    Eigen::VectorXd x = as_vector(rest);
    // Start from the best of the warm-started plan and a few random
    // feasible plans, as ranked by the model.
    Eigen::VectorXd scratch(x.size());
    double best = safe_eval(objective, x, scratch);
    for (int n = 0; n < config.samples; ++n) {
      Eigen::VectorXd candidate(x.size());
      for (int k = 0; k < T; ++k) {
        if (k % config.sample_hold == 0) {
          const double h = heading(rng), v = speed(rng);
          candidate[2 * k] = v * std::cos(h);
          candidate[2 * k + 1] = v * std::sin(h);
        } else {
          candidate.segment(2 * k, 2) = candidate.segment(2 * k - 2, 2);
        }
      }
      const double l = safe_eval(objective, candidate, scratch);
      if (l < best) {
        best = l;
        x = candidate;
      }
    }
    descend(x, objective, config.iterations, config.lr, config.backtracks, feasible);
    plan.block(t, 0, T, 2) = as_rows(x, T, 2);

    const Vec2 action(plan(t, 0), plan(t, 1));
    result.actions.push_back(action);
    scene = step_boxes(scene, action, kDefaultDt);
    result.trajectory.push_back(observable_positions(scene));
  }
  result.final_chamfer = chamfer(observable_positions(scene), ep.goal);
  return result;
}

}  // namespace propnet
