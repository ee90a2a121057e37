#include "propnet/cli.hpp"

#include "propnet/chamfer.hpp"
#include "propnet/checkpoint.hpp"
#include "propnet/oracle_models.hpp"
#include "propnet/parallel.hpp"
#include "propnet/rollout.hpp"
#include "propnet/svg.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <numeric>
#include <sstream>

namespace propnet::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string path_in(const RunConfig& c, const std::string& name) { return (fs::path(c.output_dir) / name).string(); }

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << text;
}

std::string timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string hex32(std::uint32_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(8) << std::setfill('0') << v;
  return s.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

json finish(const RunConfig& c, const std::string& command, json body, json timing) {
  json m = {{"command", command},
            {"scenario", to_string(c.scenario)},
            {"seed", c.seed},
            {"timestamp", timestamp()},
            {"config", to_json(c)},
            {"result", std::move(body)},
            {"timing", std::move(timing)}};
  write_file(path_in(c, "manifest_" + command + ".json"), m.dump(2) + "\n");
  return m;
}

std::vector<Rollout> load_data(const RunConfig& c) {
  if (!fs::exists(c.dataset)) throw std::runtime_error("dataset '" + c.dataset + "' does not exist; run gen-data first");
  auto data = read_dataset(c.dataset);
  if (data.empty()) throw std::runtime_error("dataset '" + c.dataset + "' is empty");
  for (const auto& r : data) {
    if (r.scenario != c.scenario) {
      throw ConfigError("scenario", "config scenario '" + std::string(to_string(c.scenario)) + "' does not match dataset scenario '" +
                                        std::string(to_string(r.scenario)) + "'");
    }
  }
  return data;
}

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

json points(const std::vector<Vec2>& p) {
  json a = json::array();
  for (const auto& x : p) a.push_back({x.x(), x.y()});
  return a;
}

json frames(const std::vector<std::vector<Vec2>>& f) {
  json a = json::array();
  for (const auto& x : f) a.push_back(points(x));
  return a;
}

SvgLayer layer(std::vector<std::vector<Vec2>> lines, std::vector<Vec2> pts, const std::string& color, double opacity,
               double stroke = 1.5) {
  SvgLayer l;
  l.polylines = std::move(lines);
  l.points = std::move(pts);
  l.color = color;
  l.opacity = opacity;
  l.stroke_width = stroke;
  return l;
}

// ---------------------------------------------------------------------------

json control_cradle(const RunConfig& c, const DynamicsModel& model) {
  const ControlSettings& k = c.control;
  CradleShooting problem;
  problem.balls = c.data.balls;
  problem.geometry = c.data.cradle;
  problem.horizon = k.shooting_horizon;
  problem.temperature = k.temperature;
  problem.init_deg = k.init_deg;
  problem.lr = k.shooting_lr;
  problem.iterations = k.shooting_iterations;
  problem.dt = c.data.dt;

  const double target_angle = k.target_angle_deg * std::numbers::pi / 180.0;
  const CradleOracle truth(c.data.cradle.gravity, c.data.dt);
  const double target = cradle_soft_height(truth, target_angle, problem);
  const ShootingResult r = shoot_cradle(model, target, problem);

  std::ostringstream csv;
  csv << "iteration,angle_deg,loss\n";
  for (std::size_t i = 0; i < r.angles.size(); ++i) {
    csv << i << ',' << fmt(r.angles[i] * 180.0 / std::numbers::pi) << ',' << fmt(r.losses[i]) << '\n';
  }
  write_file(path_in(c, "control_log.csv"), csv.str());

  auto simulate = [&](double angle) {
    std::vector<std::vector<Vec2>> out;
    CradleState s = cradle_lifted(problem.balls, angle);
    for (int t = 0; t <= problem.horizon; ++t) {
      out.push_back(cradle_positions(s, problem.geometry));
      s = step_cradle(s, problem.geometry, problem.dt);
    }
    return out;
  };
  const auto goal = simulate(target_angle);
  const auto achieved = simulate(r.angle);
  SvgLayer ref = layer(object_tracks(goal), {}, "#1f77b4", 0.3);
  SvgLayer got = layer(object_tracks(achieved), {}, "#d62728", 1.0);
  got.points = achieved.back();
  got.circle_radii.assign(got.points.size(), problem.geometry.ball_radius);
  write_file(path_in(c, "trajectory.svg"), render_svg({ref, got}));

  const double recovered = r.angle * 180.0 / std::numbers::pi;
  json result = {{"target_angle_deg", k.target_angle_deg},
                 {"target_height", target},
                 {"recovered_angle_deg", recovered},
                 {"angle_error_deg", std::abs(recovered - k.target_angle_deg)},
                 {"loss", r.loss},
                 {"hard_height", r.hard_height},
                 {"best_iteration", r.best_iteration},
                 {"trajectory", frames(achieved)}};
  write_file(path_in(c, "control_result.json"), result.dump(2) + "\n");
  result.erase("trajectory");
  return result;
}

Planner planner_of(const std::string& s) {
  if (s == "mpc") return Planner::MPC;
  if (s == "open_loop") return Planner::OpenLoop;
  return Planner::PD;
}

json control_string(const RunConfig& c, const DynamicsModel& model) {
  const ControlSettings& k = c.control;
  MpcConfig cfg;
  cfg.iterations = k.iterations;
  cfg.lr = k.lr;
  cfg.backtracks = k.backtracks;
  cfg.adapt = k.adapt;
  cfg.disturbance_sigma = k.disturbance_sigma;
  cfg.gains = {k.kp, k.kd};
  const Planner planner = planner_of(k.planner);

  std::vector<json> summaries(static_cast<std::size_t>(k.episodes));
  parallel_for(summaries.size(), [&](std::size_t e) {
    const std::uint64_t seed = c.seed ^ (0x5bd1e995ull * (e + 1));
    const StringEpisode ep = make_string_episode(k.masses, k.horizon, seed);
    StringAttributes attrs = ep.truth.attributes;
    if (k.bias > 0) {
      std::mt19937_64 rng(seed + 1);
      attrs = bias_attributes(attrs, k.bias, rng);
    }
    MpcConfig local = cfg;
    local.disturbance_seed = seed + 2;
    const EpisodeLog log = run_string_episode(model, ep, attrs, planner, local);

    std::ostringstream csv;
    csv << "step,goal_loss,mass,stiffness,damping,friction,control_norm\n";
    for (std::size_t t = 0; t < log.goal_loss.size(); ++t) {
      double norm = 0.0;
      for (int ci : ep.controlled) norm += log.forces[t][static_cast<std::size_t>(ci)].squaredNorm();
      const auto& a = log.attributes[t];
      csv << t + 1 << ',' << fmt(log.goal_loss[t]) << ',' << fmt(a[0]) << ',' << fmt(a[1]) << ',' << fmt(a[2]) << ','
          << fmt(a[3]) << ',' << fmt(std::sqrt(norm)) << '\n';
    }
    const std::string stem = "episode_" + std::to_string(e);
    write_file(path_in(c, stem + ".csv"), csv.str());

    json obstacles = json::array();
    for (const auto& o : ep.truth.obstacles) obstacles.push_back({{"center", {o.center.x(), o.center.y()}}, {"radius", o.radius}});
    const json traj = {{"goal", points(ep.goal)}, {"obstacles", obstacles}, {"trajectory", frames(log.trajectory)}};
    write_file(path_in(c, stem + ".json"), traj.dump() + "\n");

    SvgLayer goal = layer({ep.goal}, ep.goal, "#1f77b4", 0.35);
    SvgLayer tracks = layer(object_tracks(log.trajectory), {}, "#d62728", 0.25, 0.8);
    SvgLayer final_state = layer({log.trajectory.back()}, log.trajectory.back(), "#d62728", 1.0);
    SvgLayer obst = layer({}, {}, "gray", 0.6);
    for (const auto& o : ep.truth.obstacles) {
      obst.points.push_back(o.center);
      obst.circle_radii.push_back(o.radius);
    }
    write_file(path_in(c, stem + ".svg"), render_svg({obst, goal, tracks, final_state}));

    summaries[e] = {{"episode", e},
                    {"final_loss", log.final_loss},
                    {"inner_descent", log.inner_descent},
                    {"model_attributes",
                     {{"mass", attrs.mass}, {"stiffness", attrs.stiffness}, {"damping", attrs.damping}, {"friction", attrs.friction}}}};
  });

  std::ostringstream csv;
  csv << "episode,final_loss\n";
  double mean = 0.0;
  for (const auto& s : summaries) {
    csv << s["episode"].get<int>() << ',' << fmt(s["final_loss"].get<double>()) << '\n';
    mean += s["final_loss"].get<double>() / static_cast<double>(summaries.size());
  }
  write_file(path_in(c, "control_summary.csv"), csv.str());
  return {{"planner", k.planner}, {"episodes", summaries}, {"mean_final_loss", mean}};
}

json control_boxes(const RunConfig& c, const Model& model) {
  const ControlSettings& k = c.control;
  BoxMpcConfig cfg;
  cfg.iterations = k.iterations;
  cfg.lr = k.lr;
  cfg.backtracks = k.backtracks;

  std::vector<json> summaries(static_cast<std::size_t>(k.episodes));
  parallel_for(summaries.size(), [&](std::size_t e) {
    const std::uint64_t seed = c.seed ^ (0x5bd1e995ull * (e + 1));
    const BoxEpisode ep = make_box_episode(k.boxes, k.visible_fraction, k.horizon, seed);
    const BoxEpisodeResult r = run_box_episode(model, ep, cfg);

    std::ostringstream csv;
    csv << "step,action_x,action_y,chamfer\n";
    for (std::size_t t = 0; t < r.actions.size(); ++t) {
      csv << t + 1 << ',' << fmt(r.actions[t].x()) << ',' << fmt(r.actions[t].y()) << ','
          << fmt(chamfer(r.trajectory[t + 1], ep.goal)) << '\n';
    }
    const std::string stem = "episode_" + std::to_string(e);
    write_file(path_in(c, stem + ".csv"), csv.str());
    const json traj = {{"goal", points(ep.goal)}, {"trajectory", frames(r.trajectory)}};
    write_file(path_in(c, stem + ".json"), traj.dump() + "\n");

    SvgLayer goal = layer({}, ep.goal, "#1f77b4", 0.35);
    goal.circle_radii.assign(ep.goal.size(), ep.initial.radius);
    SvgLayer tracks = layer(object_tracks(r.trajectory), {}, "#d62728", 0.3, 0.8);
    SvgLayer final_state = layer({}, r.trajectory.back(), "#d62728", 1.0);
    final_state.circle_radii.assign(final_state.points.size(), ep.initial.radius);
    write_file(path_in(c, stem + ".svg"), render_svg({goal, tracks, final_state}));

    summaries[e] = {{"episode", e}, {"final_chamfer", r.final_chamfer}, {"baseline_chamfer", r.baseline_chamfer}};
  });

  std::ostringstream csv;
  csv << "episode,final_chamfer,baseline_chamfer\n";
  int wins = 0;
  for (const auto& s : summaries) {
    csv << s["episode"].get<int>() << ',' << fmt(s["final_chamfer"].get<double>()) << ','
        << fmt(s["baseline_chamfer"].get<double>()) << '\n';
    wins += s["final_chamfer"].get<double>() < s["baseline_chamfer"].get<double>();
  }
  write_file(path_in(c, "control_summary.csv"), csv.str());
  return {{"episodes", summaries}, {"beats_zero_action", wins}};
}

}  // namespace

std::shared_ptr<const DynamicsModel> load_model(const RunConfig& c) {
  if (c.oracle) {
    if (c.scenario == Scenario::Cradle) return std::make_shared<CradleOracle>(c.data.cradle.gravity, c.data.dt);
    if (c.scenario == Scenario::String) {
      return std::make_shared<StringOracle>(c.data.obstacle_stiffness, 4, c.data.dt);
    }
    throw ConfigError("model", "no ground-truth model exists for boxes");
  }
  if (!fs::exists(c.checkpoint)) throw std::runtime_error("checkpoint '" + c.checkpoint + "' does not exist; run train first");
  auto model = std::make_shared<Model>(load_checkpoint(c.checkpoint));
  if (model->scenario() != c.scenario) {
    throw ConfigError("checkpoint", "checkpoint scenario '" + std::string(to_string(model->scenario())) +
                                        "' does not match config scenario '" + std::string(to_string(c.scenario)) + "'");
  }
  return model;
}

json cmd_gen_data(const RunConfig& c) {
  fs::create_directories(c.output_dir);
  const auto t0 = std::chrono::steady_clock::now();
  const auto rollouts = generate_rollouts(c.data);
  if (!fs::path(c.dataset).parent_path().empty()) fs::create_directories(fs::path(c.dataset).parent_path());
  const DatasetSummary s = write_dataset(rollouts, c.dataset);
  return finish(c, "gen-data",
                {{"dataset", c.dataset}, {"rollouts", s.rollouts}, {"steps", c.data.steps}, {"records", s.records},
                 {"checksum", hex32(s.crc32)}},
                {{"seconds", seconds_since(t0)}});
}

json cmd_train(const RunConfig& c) {
  if (c.oracle) throw ConfigError("model", "the ground-truth model cannot be trained");
  fs::create_directories(c.output_dir);
  const auto data = load_data(c);
  const FlatGraph first = flatten(data.front().graphs.front());
  Model model(c.model, c.scenario, static_cast<int>(first.objects.cols()), kRelationFeatureWidth, c.seed);
  TrainConfig cfg = c.train;
  cfg.log_csv = path_in(c, "train_log.csv");
  cfg.checkpoint = c.checkpoint;
  if (!fs::path(c.checkpoint).parent_path().empty()) fs::create_directories(fs::path(c.checkpoint).parent_path());
  const auto t0 = std::chrono::steady_clock::now();
  const TrainResult r = train(model, data, cfg);
  return finish(c, "train",
                {{"checkpoint", c.checkpoint},
                 {"log", cfg.log_csv},
                 {"best_val", r.best_val},
                 {"best_epoch", r.best_epoch},
                 {"train_rollouts", r.split.train.size()},
                 {"validation_rollouts", r.split.validation.size()}},
                {{"seconds", seconds_since(t0)}});
}

json cmd_eval(const RunConfig& c) {
  fs::create_directories(c.output_dir);
  const auto model = load_model(c);
  const auto data = load_data(c);
  const int n = c.eval.rollouts > 0 ? std::min<int>(c.eval.rollouts, static_cast<int>(data.size())) : static_cast<int>(data.size());
  std::vector<int> ids(static_cast<std::size_t>(n));
  std::iota(ids.begin(), ids.end(), 0);

  if (const auto* learned = dynamic_cast<const Model*>(model.get()); learned && learned->spec().latent()) {
    const double loss = dataset_loss(*learned, data, ids);
    write_file(path_in(c, "eval.csv"), "metric,value\nlatent_loss," + fmt(loss) + "\n");
    return finish(c, "eval", {{"latent_loss", loss}, {"rollouts", n}}, json::object());
  }
  const EvalReport r = evaluate(*model, data, ids, c.eval.horizons, c.data.dt);
  std::ostringstream csv;
  csv << "horizon,mse\n";
  json mse = json::object();
  for (std::size_t i = 0; i < r.horizons.size(); ++i) {
    csv << r.horizons[i] << ',' << fmt(r.mse[i]) << '\n';
    mse[std::to_string(r.horizons[i])] = r.mse[i];
  }
  write_file(path_in(c, "eval.csv"), csv.str());
  return finish(c, "eval", {{"model", model->name()}, {"rollouts", r.rollouts}, {"mse", mse}},
                {{"seconds_per_step", r.seconds_per_step}});
}

json cmd_control(const RunConfig& c) {
  fs::create_directories(c.output_dir);
  const auto model = load_model(c);
  const auto t0 = std::chrono::steady_clock::now();
  json result;
  switch (c.scenario) {
    case Scenario::Cradle: result = control_cradle(c, *model); break;
    case Scenario::String: result = control_string(c, *model); break;
    case Scenario::Boxes: result = control_boxes(c, dynamic_cast<const Model&>(*model)); break;
  }
  return finish(c, "control", result, {{"seconds", seconds_since(t0)}});
}

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Propagation network dynamics: data generation, training, evaluation and control"};
  std::string command, config_path;
  std::vector<std::string> overrides;
  app.add_option("command", command, "gen-data | train | eval | control")
      ->required()
      ->check(CLI::IsMember({"gen-data", "train", "eval", "control"}));
  app.add_option("config", config_path, "JSON run configuration")->required();
  app.add_option("--set", overrides, "Override a config field, e.g. --set train.epochs=5")->take_all();
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n" << app.help();
    return kConfigError;
  }

  RunConfig config;
  try {
    config = load_run_config(config_path, overrides);
  } catch (const std::exception& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  }

  try {
    json manifest;
    if (command == "gen-data") manifest = cmd_gen_data(config);
    else if (command == "train") manifest = cmd_train(config);
    else if (command == "eval") manifest = cmd_eval(config);
    else manifest = cmd_control(config);
    out << manifest["result"].dump(2) << "\n";
    return kOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
}

}  // namespace propnet::cli
