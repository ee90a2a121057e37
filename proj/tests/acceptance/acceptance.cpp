// Acceptance suite: one PASS/FAIL line per criterion. Trained models are
// cached under --cache so that re-runs skip training.

#include "propnet/checkpoint.hpp"
#include "propnet/cli.hpp"
#include "propnet/control.hpp"
#include "propnet/latent.hpp"
#include "propnet/oracle_models.hpp"
#include "propnet/rollout.hpp"
#include "propnet/training.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

using namespace propnet;
namespace fs = std::filesystem;

namespace {

constexpr double kDeg = M_PI / 180.0;
// Hidden width and effect size of every trained model in the suite.
constexpr int kDeskWidth = 64;

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s << std::setprecision(precision) << v;
  return s.str();
}

std::vector<int> iota_vector(int n) {
  std::vector<int> v(static_cast<std::size_t>(n));
  std::iota(v.begin(), v.end(), 0);
  return v;
}

fs::path g_cache;

Model desk_model(ModelKind kind, Scenario scenario, int L, int object_width) {
  ModelSpec spec = ModelSpec::defaults(kind).with_widths(kDeskWidth, kDeskWidth);
  if (kind != ModelKind::IN) spec.L = L;
  return Model(spec, scenario, object_width, kRelationFeatureWidth, 1);
}

// Trains `model` on `data` or loads the cached result of an identical run.
Model train_cached(Model model, const std::vector<Rollout>& data, const TrainConfig& cfg, const std::string& key,
                   TrainResult* result) {
  const fs::path ckpt = g_cache / (key + ".ckpt");
  if (fs::exists(ckpt)) {
    nlohmann::json meta;
    Model m = load_checkpoint(ckpt.string(), &meta);
    if (result) {
      result->split = split_rollouts(static_cast<int>(data.size()), cfg.train_fraction, cfg.seed);
      result->log.clear();
      for (const auto& e : meta.at("log")) {
        result->log.push_back({e.at(0).get<int>(), e.at(1).get<double>(), e.at(2).get<double>(), e.at(3).get<double>()});
      }
    }
    std::cout << "  [cache] " << key << "\n" << std::flush;
    return m;
  }
  const auto t0 = Clock::now();
  TrainResult r = train(model, data, cfg);
  nlohmann::json log = nlohmann::json::array();
  for (const auto& e : r.log) log.push_back({e.epoch, e.train_loss, e.val_loss, e.lr});
  fs::create_directories(g_cache);
  save_checkpoint(model, ckpt.string(), {{"log", log}});
  std::cout << "  trained " << key << " in " << fmt(seconds_since(t0)) << " s, best val " << fmt(r.best_val) << "\n"
            << std::flush;
  if (result) *result = std::move(r);
  return model;
}

// ---------------------------------------------------------------------------
// Shared cradle setup (criteria 4 and 6).

DataConfig cradle_data_config() {
  DataConfig c;
  c.scenario = Scenario::Cradle;
  c.rollouts = 200;
  c.steps = 200;
  c.seed = 0;
  return c;
}

TrainConfig cradle_train_config() {
  TrainConfig t;
  t.epochs = 200;
  t.max_validation_samples = 2000;
  t.seed = 0;
  return t;
}

struct CradleModels {
  std::vector<Rollout> data;
  Split split;
  std::unique_ptr<Model> in, propnet;
};

CradleModels& cradle_models() {
  static CradleModels m = [] {
    CradleModels c;
    c.data = generate_rollouts(cradle_data_config());
    TrainResult r;
    c.in = std::make_unique<Model>(
        train_cached(desk_model(ModelKind::IN, Scenario::Cradle, 1, 9), c.data, cradle_train_config(), "cradle_in", &r));
    c.split = r.split;
    c.propnet = std::make_unique<Model>(train_cached(desk_model(ModelKind::PropNet, Scenario::Cradle, 4, 9), c.data,
                                                     cradle_train_config(), "cradle_propnet_l4", nullptr));
    return c;
  }();
  return m;
}

// ---------------------------------------------------------------------------
// Shared string setup (criteria 5 and 8).

DataConfig string_data_config(int masses, int rollouts, std::uint64_t seed) {
  DataConfig c;
  c.scenario = Scenario::String;
  c.masses = masses;
  c.rollouts = rollouts;
  c.steps = 100;
  c.seed = seed;
  return c;
}

TrainConfig string_train_config() {
  TrainConfig t;
  t.epochs = 60;
  t.max_validation_samples = 2000;
  return t;
}

struct StringModels {
  std::vector<Rollout> data;
  Split split;
  std::map<int, std::unique_ptr<Model>> by_depth;
};

StringModels& string_models() {
  static StringModels m = [] {
    StringModels s;
    s.data = generate_rollouts(string_data_config(15, 100, 0));
    for (int L : {1, 3}) {
      TrainResult r;
      s.by_depth[L] = std::make_unique<Model>(train_cached(desk_model(ModelKind::PropNet, Scenario::String, L, 9),
                                                           s.data, string_train_config(),
                                                           "string_propnet_l" + std::to_string(L), &r));
      s.split = r.split;
    }
    return s;
  }();
  return m;
}

// ---------------------------------------------------------------------------

Outcome criterion1() {
  std::vector<std::string> bad;
  auto expect = [&](const std::string& what, int got, int want) {
    if (got != want) bad.push_back(what + " " + std::to_string(got) + " != " + std::to_string(want));
  };
  const auto cradle = build_cradle_graph(5, CradleGeometry{});
  expect("cradle objects", cradle.num_objects(), 10);
  expect("cradle relations", cradle.num_relations(), 18);
  const std::vector<Obstacle> obstacles{{Vec2(0.2, 0.1), 0.05}, {Vec2(0.5, -0.1), 0.05}};
  const auto string = build_string_graph(15, obstacles, Vec2::Zero());
  expect("string objects", string.num_objects(), 17);
  expect("string relations", string.num_relations(), 103);
  for (int n = 1; n <= 30; ++n) {
    const auto boxes = build_box_graph(std::vector<Vec2>(static_cast<std::size_t>(n), Vec2::Zero()));
    expect("boxes(" + std::to_string(n) + ") relations", boxes.num_relations(), n * (n - 1));
  }
  if (!bad.empty()) return {false, bad.front()};
  return {true, "cradle 10/18, string 17/103, boxes n(n-1) for n = 1..30"};
}

Outcome criterion2() {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> angle(-0.7, 0.7), rate(-3.0, 3.0);
  std::normal_distribution<double> n01;
  int identical = 0;
  const int graphs = 100;
  std::map<Scenario, std::pair<std::unique_ptr<Model>, std::unique_ptr<Model>>> models;
  for (Scenario s : {Scenario::Cradle, Scenario::String}) {
    auto in = std::make_unique<Model>(ModelSpec::defaults(ModelKind::IN), s, 9, kRelationFeatureWidth, 7);
    const auto stats = compute_norm_stats(generate_rollouts(s == Scenario::Cradle ? [] {
      DataConfig c = cradle_data_config();
      c.rollouts = 2;
      c.steps = 30;
      return c;
    }()
                                                                                  : string_data_config(15, 2, 1)),
                                          iota_vector(2));
    in->norm() = stats;
    auto vanilla = std::make_unique<Model>(vanilla_from_in(*in));
    models[s] = {std::move(in), std::move(vanilla)};
  }
  for (int k = 0; k < graphs; ++k) {
    DynamicsGraph g;
    Scenario s;
    if (k % 2 == 0) {
      s = Scenario::Cradle;
      CradleState now, before;
      const int n = 2 + k % 6;
      for (int i = 0; i < n; ++i) {
        before.theta.push_back(angle(rng));
        before.omega.push_back(0.0);
        now.theta.push_back(before.theta.back() + 0.02 * rate(rng));
        now.omega.push_back(rate(rng));
      }
      g = cradle_graph(now, CradleGeometry{}, &before);
    } else {
      s = Scenario::String;
      StringParams p;
      const int n = 5 + k % 16;
      StringState st = straight_string(n, Vec2::Zero(), Vec2(1.0, 0.0), p.attributes.rest_length);
      p.obstacles = place_string_obstacles(st, Vec2(1.0, 0.0), p.attributes.rest_length, rng);
      std::vector<Vec2> forces(static_cast<std::size_t>(n), Vec2::Zero());
      for (int i = 1; i < n; ++i) {
        st.positions[static_cast<std::size_t>(i)] += 0.01 * Vec2(n01(rng), n01(rng));
        st.velocities[static_cast<std::size_t>(i)] = 0.3 * Vec2(n01(rng), n01(rng));
        forces[static_cast<std::size_t>(i)] = 0.3 * Vec2(n01(rng), n01(rng));
      }
      g = string_graph(st, p, forces);
    }
    const auto& [in, vanilla] = models.at(s);
    const FlatGraph flat = flatten(g);
    const Topology topo = topology_of(g);
    Tape a(&in->store()), b(&vanilla->store());
    const Tensor ya = in->next_velocity(a, record(a, flat, topo)).value();
    const Tensor yb = vanilla->next_velocity(b, record(b, flat, topo)).value();
    identical += ya == yb;
  }
  return {identical == graphs, std::to_string(identical) + "/" + std::to_string(graphs) + " graphs bit-identical"};
}

// Central differences with h = 1e-5 at the sampled coordinates; probes
// that change the tape's branch signature (ReLU kink, impact set) are
// skipped.
struct FdTally {
  int checked = 0, skipped = 0;
  double worst = 0.0;
  void add(double analytic, double numeric) {
    const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    worst = std::max(worst, std::abs(analytic - numeric) / scale);
    ++checked;
  }
  std::string summary(const std::string& name) const {
    return name + " " + std::to_string(checked) + " checked/" + std::to_string(skipped) + " skipped, worst " +
           fmt(worst, 2);
  }
  bool ok(int requested) const { return worst < 1e-4 && checked >= requested * 9 / 10; }
};

using ScalarFn = std::function<double(const Eigen::VectorXd&, std::uint64_t*)>;

void fd_at(FdTally& tally, const ScalarFn& f, const Eigen::VectorXd& x, const Eigen::VectorXd& grad,
           const std::vector<int>& coords) {
  const double h = 1e-5;
  std::uint64_t base = 0;
  f(x, &base);
  for (int i : coords) {
    Eigen::VectorXd xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    std::uint64_t bp = 0, bm = 0;
    const double fp = f(xp, &bp), fm = f(xm, &bm);
    if (bp != base || bm != base) {
      ++tally.skipped;
      continue;
    }
    tally.add(grad[i], (fp - fm) / (2.0 * h));
  }
}

std::vector<int> sample_coords(int n, int count, std::mt19937_64& rng) {
  std::vector<int> idx = iota_vector(n);
  std::shuffle(idx.begin(), idx.end(), rng);
  if (n > count) idx.resize(static_cast<std::size_t>(count));
  return idx;
}

Outcome criterion3() {
  std::mt19937_64 rng(3);
  std::vector<std::string> lines;
  bool pass = true;
  constexpr int kCoords = 200;

  auto cradle_small = cradle_data_config();
  cradle_small.rollouts = 2;
  cradle_small.steps = 60;
  const auto cradle_data = generate_rollouts(cradle_small);
  const auto string_data = generate_rollouts(string_data_config(15, 2, 4));
  DataConfig box_cfg;
  box_cfg.scenario = Scenario::Boxes;
  box_cfg.rollouts = 2;
  box_cfg.steps = 20;
  const auto box_data = generate_rollouts(box_cfg);

  auto check_params = [&](Model& m, const std::function<Var(Tape&)>& loss_fn, const std::string& name) {
    auto f = [&](const Eigen::VectorXd& x, std::uint64_t* branch) {
      m.store().flat_vector() = x;
      Tape tape(&m.store());
      const double v = loss_fn(tape).scalar();
      if (branch) *branch = tape.branch_signature();
      return v;
    };
    const Eigen::VectorXd x0 = m.store().flat_vector();
    Tape tape(&m.store());
    tape.backward(loss_fn(tape));
    const Eigen::VectorXd grad = tape.param_grad();
    FdTally tally;
    fd_at(tally, f, x0, grad, sample_coords(static_cast<int>(x0.size()), kCoords, rng));
    m.store().flat_vector() = x0;
    lines.push_back(tally.summary(name));
    pass = pass && tally.ok(kCoords);
  };

  for (ModelKind kind : {ModelKind::IN, ModelKind::VanillaPropNet, ModelKind::PropNet}) {
    for (Scenario s : {Scenario::Cradle, Scenario::String}) {
      const auto& data = s == Scenario::Cradle ? cradle_data : string_data;
      ModelSpec spec = ModelSpec::defaults(kind);
      if (kind != ModelKind::IN) spec.L = 3;
      Model m(spec, s, 9, kRelationFeatureWidth, 5);
      m.norm() = compute_norm_stats(data, iota_vector(2));
      const DynamicsGraph& g = data[0].graphs[17];
      const DynamicsGraph& next = data[0].graphs[18];
      Tensor target(g.num_objects(), 2);
      for (int i = 0; i < g.num_objects(); ++i) {
        target.row(i) = next.objects[static_cast<std::size_t>(i)].velocity.transpose();
      }
      const Eigen::VectorXd mask = Eigen::VectorXd::Ones(g.num_objects());
      const FlatGraph flat = flatten(g);
      const Topology topo = topology_of(g);
      check_params(
          m,
          [&](Tape& tape) {
            Var v = m.next_velocity(tape, record(tape, flat, topo));
            return masked_mse(v, tape.constant(target), mask);
          },
          std::string(to_string(kind)) + "/" + std::string(to_string(s)));
    }
  }

  {
    Model latent(ModelSpec::defaults(ModelKind::LatentPropNet), Scenario::Boxes, 6, kRelationFeatureWidth, 5);
    latent.norm() = compute_norm_stats(box_data, iota_vector(2));
    std::vector<LatentSample> samples;
    for (int t = 0; t < 4; ++t) {
      const auto& r = box_data[static_cast<std::size_t>(t % 2)];
      const auto k = static_cast<std::size_t>(3 + t);
      std::array<double, 4> a{};
      std::copy_n(r.controls[k].begin(), 4, a.begin());
      samples.push_back({&r.graphs[k], &r.graphs[k + 1], a});
    }
    check_params(latent, [&](Tape& tape) { return latent_loss(tape, latent, samples).total; }, "LatentPropNet/boxes");
  }

  {
    // Shooting loss (soft height - target)^2 w.r.t. the release angle, at
    // 200 random (angle, target) pairs under the simulator model.
    const CradleOracle oracle;
    CradleShooting problem;
    std::uniform_real_distribution<double> angle(15.0 * kDeg, 75.0 * kDeg), target(0.02, 0.3);
    FdTally tally;
    for (int k = 0; k < kCoords; ++k) {
      const double goal = target(rng);
      auto f = [&](const Eigen::VectorXd& x, std::uint64_t* branch) {
        Tape tape;
        const auto h = cradle_heights(tape, oracle, tape.constant(Tensor::Constant(1, 1, x[0])), problem);
        if (branch) *branch = tape.branch_signature();
        return std::pow(h.soft.scalar() - goal, 2);
      };
      const Eigen::VectorXd x = Eigen::VectorXd::Constant(1, angle(rng));
      Tape tape;
      Var a = tape.input(Tensor::Constant(1, 1, x[0]));
      const auto h = cradle_heights(tape, oracle, a, problem);
      tape.backward(ad::square(ad::add_scalar(h.soft, -goal)));
      fd_at(tally, f, x, Eigen::VectorXd::Constant(1, tape.grad(a)(0, 0)), {0});
    }
    lines.push_back(tally.summary("shooting loss"));
    pass = pass && tally.ok(kCoords);
  }

  {
    // Goal loss L_g w.r.t. the control plan, for the simulator and a
    // PropNet as model, 100 random plan coordinates each.
    Model propnet(ModelSpec::defaults(ModelKind::PropNet), Scenario::String, 9, kRelationFeatureWidth, 6);
    propnet.norm() = compute_norm_stats(string_data, iota_vector(2));
    const StringOracle oracle;
    FdTally tally;
    int episode = 0;
    for (const DynamicsModel* model : {static_cast<const DynamicsModel*>(&oracle),
                                       static_cast<const DynamicsModel*>(&propnet)}) {
      const StringEpisode ep = make_string_episode(15, 30, 100 + static_cast<std::uint64_t>(episode++));
      const AttributeEstimate est = AttributeEstimate::from(ep.truth.attributes);
      const Eigen::Index T = ep.horizon, nc = 4;
      std::normal_distribution<double> force(0.0, 0.3);
      Eigen::VectorXd u0(T * nc);
      for (Eigen::Index i = 0; i < u0.size(); ++i) u0[i] = force(rng);
      const DynamicsGraph g = model_graph(ep, ep.initial, est, Eigen::MatrixXd::Zero(T, nc), 0);
      const FlatGraph flat = flatten(g);
      const Topology topo = topology_of(g);
      auto loss = [&](Tape& tape, Var u) {
        const ForceSchedule forces = [&](int k) {
          Var row = ad::slice_rows(u, k, 1);
          return ad::scatter_add_rows(ad::concat_rows(std::vector<Var>{ad::slice_cols(row, 0, 2), ad::slice_cols(row, 2, 2)}),
                                      ep.controlled, topo.num_objects);
        };
        const auto states = rollout(tape, *model, tape.constant(flat.objects), tape.constant(flat.relations), topo,
                                    static_cast<int>(T), forces);
        Tensor goal(15, 2);
        for (int i = 0; i < 15; ++i) goal.row(i) = ep.goal[static_cast<std::size_t>(i)].transpose();
        Var pos = ad::slice_rows(ad::slice_cols(states.back(), 0, 2), 0, 15);
        return ad::scale(ad::sum_squares(ad::sub(pos, tape.constant(goal))), 1.0 / 15.0);
      };
      auto as_plan = [&](const Eigen::VectorXd& x) {
        Tensor t(T, nc);
        for (Eigen::Index i = 0; i < x.size(); ++i) t.data()[i] = x[i];
        return t;
      };
      auto f = [&](const Eigen::VectorXd& x, std::uint64_t* branch) {
        Tape tape(model->params());
        const double v = loss(tape, tape.constant(as_plan(x))).scalar();
        if (branch) *branch = tape.branch_signature();
        return v;
      };
      Tape tape(model->params());
      Var u = tape.input(as_plan(u0));
      tape.backward(loss(tape, u));
      const Tensor gu = tape.grad(u);
      const Eigen::VectorXd grad = Eigen::Map<const Eigen::VectorXd>(gu.data(), gu.size());
      fd_at(tally, f, u0, grad, sample_coords(static_cast<int>(u0.size()), kCoords / 2, rng));
    }
    lines.push_back(tally.summary("goal loss"));
    pass = pass && tally.ok(kCoords);
  }

  std::string detail;
  for (const auto& l : lines) detail += (detail.empty() ? "" : "; ") + l;
  return {pass, detail};
}

// Largest predicted speed of the last ball before the first impact of the
// true rollout.
double speed_before_contact(const DynamicsModel& model, const Rollout& r, int balls) {
  const auto last = static_cast<std::size_t>(balls - 1);
  int contact = 0;
  while (contact + 1 < r.steps() && r.graphs[static_cast<std::size_t>(contact + 1)].objects[last].velocity.norm() == 0.0) {
    ++contact;
  }
  const auto pred = rollout(model, r.graphs[0], contact);
  double worst = 0.0;
  for (int t = 1; t <= contact; ++t) worst = std::max(worst, pred[static_cast<std::size_t>(t)].objects[last].velocity.norm());
  return worst;
}

Outcome criterion4() {
  auto& c = cradle_models();
  const std::vector<int> horizons{50};
  const double in_mse = evaluate(*c.in, c.data, c.split.validation, horizons).mse[0];
  const double pn_mse = evaluate(*c.propnet, c.data, c.split.validation, horizons).mse[0];
  int in_fail = 0, pn_fail = 0;
  double pn_worst = 0.0;
  for (int r : c.split.validation) {
    const auto& roll = c.data[static_cast<std::size_t>(r)];
    in_fail += speed_before_contact(*c.in, roll, 5) >= 1e-3;
    const double s = speed_before_contact(*c.propnet, roll, 5);
    pn_worst = std::max(pn_worst, s);
    pn_fail += s >= 1e-3;
  }
  const bool ordering = pn_mse <= 0.5 * in_mse;
  const bool failure = in_fail > 0 && pn_fail == 0;
  const std::string n = std::to_string(c.split.validation.size());
  return {ordering && failure, "h50 MSE PropNet " + fmt(pn_mse) + " vs IN " + fmt(in_mse) + " (ratio " +
                                   fmt(pn_mse / in_mse, 3) + "); early last-ball motion IN " + std::to_string(in_fail) +
                                   "/" + n + ", PropNet " + std::to_string(pn_fail) + "/" + n + " (max speed " +
                                   fmt(pn_worst, 3) + ")"};
}

Outcome criterion5() {
  // Forward wall-clock per step on a 15-mass string graph: the fastest of
  // several repeats, each timing a batch of forward passes.
  const auto data = generate_rollouts(string_data_config(15, 1, 9));
  const DynamicsGraph& g = data[0].graphs[10];
  const FlatGraph flat = flatten(g);
  const Topology topo = topology_of(g);
  std::vector<double> per_step;
  for (int L = 1; L <= 4; ++L) {
    Model m = desk_model(ModelKind::PropNet, Scenario::String, L, 9);
    m.norm() = compute_norm_stats(data, iota_vector(1));
    double best = 1e30;
    for (int rep = 0; rep < 7; ++rep) {
      const auto t0 = Clock::now();
      for (int k = 0; k < 200; ++k) {
        Tape tape(&m.store());
        m.next_velocity(tape, record(tape, flat, topo));
      }
      best = std::min(best, seconds_since(t0) / 200.0);
    }
    per_step.push_back(best);
  }
  bool monotone = true;
  for (std::size_t i = 1; i < per_step.size(); ++i) monotone = monotone && per_step[i] > per_step[i - 1];

  auto& s = string_models();
  const std::vector<int> horizons{1, 10, 20};
  const auto e1 = evaluate(*s.by_depth.at(1), s.data, s.split.validation, horizons);
  const auto e3 = evaluate(*s.by_depth.at(3), s.data, s.split.validation, horizons);
  const double m1 = std::accumulate(e1.mse.begin(), e1.mse.end(), 0.0) / 3.0;
  const double m3 = std::accumulate(e3.mse.begin(), e3.mse.end(), 0.0) / 3.0;
  std::string times;
  for (double t : per_step) times += (times.empty() ? "" : " < ") + fmt(1e6 * t, 3) + "us";
  return {monotone && m3 <= m1, "forward per step " + times + "; string MSE (mean over h = 1, 10, 20) L=3 " +
                                    fmt(m3) + " vs L=1 " + fmt(m1)};
}

Outcome criterion6() {
  const CradleOracle oracle;
  CradleShooting problem;
  double worst = 0.0;
  for (int deg = 20; deg <= 70; deg += 5) {
    const double target = cradle_soft_height(oracle, deg * kDeg, problem);
    const auto r = shoot_cradle(oracle, target, problem);
    worst = std::max(worst, std::abs(r.angle / kDeg - deg));
  }

  auto& c = cradle_models();
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> hidden(20.0, 70.0);
  int propnet_better = 0;
  double in_sum = 0.0, pn_sum = 0.0;
  for (int k = 0; k < 10; ++k) {
    const double deg = hidden(rng);
    const double target = cradle_soft_height(oracle, deg * kDeg, problem);
    auto error = [&](const DynamicsModel& m) {
      try {
        return std::abs(shoot_cradle(m, target, problem).angle / kDeg - deg);
      } catch (const NumericError&) {
        return std::numeric_limits<double>::infinity();
      }
    };
    const double ein = error(*c.in), epn = error(*c.propnet);
    in_sum += ein;
    pn_sum += epn;
    propnet_better += epn < ein;
  }
  return {worst < 1.0 && propnet_better >= 8,
          "oracle worst error " + fmt(worst, 3) + " deg over 20..70; PropNet better on " +
              std::to_string(propnet_better) + "/10 goals (mean error PropNet " + fmt(pn_sum / 10, 3) + " vs IN " +
              fmt(in_sum / 10, 3) + " deg)"};
}

Outcome criterion7() {
  const StringOracle oracle;
  MpcConfig bias_cfg;
  MpcConfig adapt_cfg;
  adapt_cfg.adapt = true;
  int adapt_wins = 0, halved = 0;
  bool descent = true;
  double worst_ratio = 0.0;
  for (int e = 0; e < 20; ++e) {
    const StringEpisode ep = make_string_episode(15, 30, 1000 + static_cast<std::uint64_t>(e));
    StringAttributes wrong = ep.truth.attributes;
    wrong.stiffness *= 1.15;
    const auto bias = run_string_episode(oracle, ep, wrong, Planner::MPC, bias_cfg);
    const auto adapt = run_string_episode(oracle, ep, wrong, Planner::MPC, adapt_cfg);
    descent = descent && bias.inner_descent && adapt.inner_descent;
    adapt_wins += adapt.final_loss <= bias.final_loss;
    const double truth = ep.truth.attributes.stiffness;
    const double e0 = std::abs(wrong.stiffness - truth);
    const double e1 = std::abs(adapt.attributes[19][AttributeEstimate::kStiffness] - truth);
    worst_ratio = std::max(worst_ratio, e1 / e0);
    halved += e1 <= 0.5 * e0;
  }
  return {descent && adapt_wins >= 16 && halved == 20,
          std::string("inner L_g non-increasing: ") + (descent ? "yes" : "no") + "; Adapt <= Bias on " +
              std::to_string(adapt_wins) + "/20; stiffness error halved in 20 steps on " + std::to_string(halved) +
              "/20 (worst remaining fraction " + fmt(worst_ratio, 3) + ")"};
}

Outcome criterion8() {
  auto& s = string_models();
  const Model& model = *s.by_depth.at(3);
  const std::vector<int> horizons{1, 10, 20};
  std::map<int, double> mse;
  for (int n = 10; n <= 20; ++n) {
    const auto data = generate_rollouts(string_data_config(n, 20, 500 + static_cast<std::uint64_t>(n)));
    const auto rep = evaluate(model, data, iota_vector(20), horizons);
    mse[n] = std::accumulate(rep.mse.begin(), rep.mse.end(), 0.0) / 3.0;
  }
  double worst = 0.0;
  int worst_n = 15;
  for (const auto& [n, v] : mse) {
    if (v / mse.at(15) > worst) {
      worst = v / mse.at(15);
      worst_n = n;
    }
  }
  return {worst <= 3.0, "length-15 MSE " + fmt(mse.at(15)) + "; worst ratio " + fmt(worst, 3) + " at length " +
                            std::to_string(worst_n) + " (lengths 10..20 all ran)"};
}

Outcome criterion9() {
  // Permutation invariance on random scenes.
  ModelSpec spec = ModelSpec::defaults(ModelKind::LatentPropNet).with_widths(kDeskWidth, kDeskWidth);
  spec.L = 2;
  spec.latent_dim = 100;
  spec.residual_transition = true;
  Model fresh(spec, Scenario::Boxes, 6, kRelationFeatureWidth, 1);
  DataConfig cfg;
  cfg.scenario = Scenario::Boxes;
  cfg.rollouts = 100;
  cfg.steps = 200;
  cfg.seed = 0;
  const auto data = generate_rollouts(cfg);
  fresh.norm() = compute_norm_stats(data, iota_vector(100));
  std::mt19937_64 rng(9);
  int invariant = 0;
  for (int k = 0; k < 100; ++k) {
    BoxScene scene = random_box_scene(2 + k % 7, 1.0, rng);
    DynamicsGraph g = observe(scene);
    DynamicsGraph h = g;
    std::shuffle(h.objects.begin(), h.objects.end(), rng);
    Tape tape(&fresh.store());
    invariant += encode(tape, fresh, g).value() == encode(tape, fresh, h).value();
  }

  TrainConfig tc;
  tc.epochs = 40;
  tc.max_validation_samples = 2000;
  TrainResult r;
  const Model model = train_cached(fresh, data, tc, "boxes_latent", &r);
  const double initial = r.log.front().val_loss;
  double best = initial;
  for (const auto& e : r.log) best = std::min(best, e.val_loss);
  const double reduction = 1.0 - best / initial;

  int wins = 0;
  double mean_final = 0.0, mean_base = 0.0;
  for (int e = 0; e < 10; ++e) {
    const BoxEpisode ep = make_box_episode(8, 0.6, 30, 2000 + static_cast<std::uint64_t>(e));
    const auto res = run_box_episode(model, ep, BoxMpcConfig{});
    wins += res.final_chamfer < res.baseline_chamfer;
    mean_final += res.final_chamfer / 10;
    mean_base += res.baseline_chamfer / 10;
  }
  return {invariant == 100 && reduction >= 0.5 && wins >= 8,
          "tau bit-identical under relabelling " + std::to_string(invariant) + "/100; latent loss reduced " +
              fmt(100 * reduction, 3) + "%; MPC beats zero action on " + std::to_string(wins) +
              "/10 (mean Chamfer " + fmt(mean_final, 3) + " vs " + fmt(mean_base, 3) + ")"};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome criterion10() {
  // Every CLI stage twice into separate directories; every artifact must
  // match byte for byte, and the manifests must match outside the
  // wall-clock fields.
  std::vector<std::string> differing;
  int compared = 0;
  for (const std::string scenario : {"cradle", "string", "boxes"}) {
    nlohmann::json doc{{"scenario", scenario},
                       {"seed", 5},
                       {"data", {{"rollouts", 6}, {"steps", 40}, {"masses", 8}, {"boxes", 5}}},
                       {"model",
                        {{"kind", scenario == "boxes" ? "LatentPropNet" : "PropNet"}, {"L", 2}, {"width", 16},
                         {"effect", 16}}},
                       {"train", {{"epochs", 2}}},
                       {"eval", {{"horizons", {1, 10}}}},
                       {"control",
                        {{"episodes", 2}, {"horizon", 6}, {"shooting_iterations", 5}, {"shooting_horizon", 30}}}};
    // Both runs write to the same directory, since manifests record paths.
    const fs::path dir = g_cache / "determinism" / scenario;
    doc["output_dir"] = dir.string();
    const RunConfig cfg = run_config_from_json(doc);
    std::vector<std::map<std::string, std::string>> runs;
    for (int run = 0; run < 2; ++run) {
      fs::remove_all(dir);
      cli::cmd_gen_data(cfg);
      cli::cmd_train(cfg);
      cli::cmd_eval(cfg);
      cli::cmd_control(cfg);
      auto& files = runs.emplace_back();
      for (const auto& entry : fs::directory_iterator(dir)) files[entry.path().filename().string()] = slurp(entry.path());
    }
    if (runs[0].size() != runs[1].size()) differing.push_back(scenario + " file set");
    for (const auto& [name, bytes] : runs[0]) {
      ++compared;
      const auto other = runs[1].find(name);
      if (other == runs[1].end()) {
        differing.push_back(scenario + "/" + name);
      } else if (name.rfind("manifest_", 0) == 0) {
        auto a = nlohmann::json::parse(bytes), b = nlohmann::json::parse(other->second);
        for (auto* m : {&a, &b}) {
          m->erase("timestamp");
          m->erase("timing");
        }
        if (a != b) differing.push_back(scenario + "/" + name);
      } else if (bytes != other->second) {
        differing.push_back(scenario + "/" + name);
      }
    }
  }
  if (!differing.empty()) return {false, "differs: " + differing.front()};
  return {true, std::to_string(compared) + " artifacts identical across re-runs (gen-data, train, eval, control)"};
}

struct Criterion {
  int id;
  double budget_seconds;
  Outcome (*run)();
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance suite"};
  std::vector<int> only;
  std::string cache = "acceptance_cache";
  app.add_option("--only", only, "Run only these criteria");
  app.add_option("--cache", cache, "Directory for trained models and scratch output");
  CLI11_PARSE(app, argc, argv);
  g_cache = cache;
  fs::create_directories(g_cache);

  const std::vector<Criterion> criteria{{1, 1.0, criterion1},      {2, 10.0, criterion2},    {3, 120.0, criterion3},
                                        {4, 7200.0, criterion4},   {5, 7200.0, criterion5},  {6, 1800.0, criterion6},
                                        {7, 3600.0, criterion7},   {8, 1800.0, criterion8},  {9, 3600.0, criterion9},
                                        {10, 1800.0, criterion10}};
  int failures = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = seconds_since(t0);
    const bool in_budget = secs <= c.budget_seconds;
    const bool pass = o.pass && in_budget;
    failures += !pass;
    std::cout << "criterion " << c.id << ": " << (pass ? "PASS" : "FAIL") << "  " << o.detail << " ["
              << fmt(secs, 3) << " s" << (in_budget ? "" : ", over the " + fmt(c.budget_seconds) + " s budget")
              << "]" << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
