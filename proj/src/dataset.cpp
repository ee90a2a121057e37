#include "propnet/dataset.hpp"

#include "propnet/parallel.hpp"
#include "propnet/simulators.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace propnet {

void DataConfig::validate() const {
  if (rollouts < 1) throw std::invalid_argument("data.rollouts must be >= 1");
  if (steps < 1) throw std::invalid_argument("data.steps must be >= 1");
  if (!(dt > 0)) throw std::invalid_argument("data.dt must be positive");
  if (balls < 1) throw std::invalid_argument("data.balls must be >= 1");
  if (masses < 2) throw std::invalid_argument("data.masses must be >= 2");
  if (boxes < 1) throw std::invalid_argument("data.boxes must be >= 1");
  if (force_refresh < 1 || action_refresh < 1) throw std::invalid_argument("data refresh intervals must be >= 1");
  if (min_angle_deg > max_angle_deg) throw std::invalid_argument("data.min_angle_deg exceeds data.max_angle_deg");
  if (attribute_jitter < 0 || attribute_jitter >= 1) throw std::invalid_argument("data.attribute_jitter must be in [0, 1)");
  cradle.validate();
}

std::vector<Obstacle> place_string_obstacles(const StringState& s, const Vec2& dir, double rest, std::mt19937_64& rng) {
  const int n = s.size();
  const Vec2 normal(-dir.y(), dir.x());
  std::uniform_int_distribution<int> along(std::min(3, n - 1), n - 1);
  std::uniform_real_distribution<double> radius(0.04, 0.08);
  std::uniform_real_distribution<double> gap(0.02, 0.1);
  std::bernoulli_distribution side(0.5);
  std::vector<Obstacle> out;
  for (int attempt = 0; out.size() < 2; ++attempt) {
    if (attempt > 1000) throw std::runtime_error("could not place string obstacles");
    Obstacle o;
    o.radius = radius(rng);
    const double offset = (o.radius + gap(rng)) * (side(rng) ? 1.0 : -1.0);
    o.center = s.positions[0] + rest * along(rng) * dir + offset * normal;
    bool clear = true;
    for (const auto& x : s.positions) clear = clear && (x - o.center).norm() > o.radius + 0.01;
    for (const auto& other : out) clear = clear && (other.center - o.center).norm() > other.radius + o.radius;
    if (clear) out.push_back(o);
  }
  return out;
}

namespace {

Rollout cradle_rollout(const DataConfig& c, std::mt19937_64& rng) {
  Rollout r;
  r.scenario = Scenario::Cradle;
  std::uniform_real_distribution<double> angle(c.min_angle_deg, c.max_angle_deg);
  CradleState s = cradle_lifted(c.balls, angle(rng) * std::numbers::pi / 180.0);
  CradleState prev = s;
  for (int t = 0; t < c.steps; ++t) {
    r.graphs.push_back(cradle_graph(s, c.cradle, t == 0 ? nullptr : &prev, c.dt));
    r.controls.emplace_back();
    prev = s;
    s = step_cradle(s, c.cradle, c.dt);
  }
  return r;
}

Rollout string_rollout(const DataConfig& c, std::mt19937_64& rng) {
  Rollout r;
  r.scenario = Scenario::String;
  std::uniform_real_distribution<double> jitter(1.0 - c.attribute_jitter, 1.0 + c.attribute_jitter);
  std::uniform_real_distribution<double> heading(0.0, 2.0 * std::numbers::pi);
  std::normal_distribution<double> force(0.0, c.force_sigma);

  StringParams p;
  p.attributes = c.string;
  p.attributes.mass *= jitter(rng);
  p.attributes.stiffness *= jitter(rng);
  p.attributes.damping *= jitter(rng);
  p.attributes.friction *= jitter(rng);
  p.obstacle_stiffness = c.obstacle_stiffness;
  const double a = heading(rng);
  const Vec2 dir(std::cos(a), std::sin(a));
  StringState s = straight_string(c.masses, Vec2::Zero(), dir, p.attributes.rest_length);
  p.obstacles = place_string_obstacles(s, dir, p.attributes.rest_length, rng);

  std::vector<Vec2> f(static_cast<std::size_t>(c.masses), Vec2::Zero());
  for (int t = 0; t < c.steps; ++t) {
    if (t % c.force_refresh == 0) {
      for (std::size_t i = 1; i < f.size(); ++i) f[i] = Vec2(force(rng), force(rng));
    }
    r.graphs.push_back(string_graph(s, p, f));
    std::vector<double> control;
    for (const auto& fi : f) control.insert(control.end(), {fi.x(), fi.y()});
    r.controls.push_back(std::move(control));
    s = step_string(s, p, f, c.dt);
  }
  return r;
}

Rollout box_rollout(const DataConfig& c, std::mt19937_64& rng) {
  Rollout r;
  r.scenario = Scenario::Boxes;
  BoxScene s = random_box_scene(c.boxes, c.visible_fraction, rng);
  s.max_speed = c.max_push_speed;
  std::uniform_real_distribution<double> heading(-std::numbers::pi / 3.0, std::numbers::pi / 3.0);
  std::uniform_real_distribution<double> speed(0.1 * c.max_push_speed, c.max_push_speed);
  std::bernoulli_distribution idle(0.15);
  Vec2 action = Vec2::Zero();
  for (int t = 0; t < c.steps; ++t) {
    if (t % c.action_refresh == 0) {
      // Aim roughly at the pile so that long rollouts keep pushing it.
      Vec2 centroid = Vec2::Zero();
      for (const auto& p : s.centers) centroid += p / static_cast<double>(s.size());
      const Vec2 to_pile = centroid - s.pusher;
      const double h = std::atan2(to_pile.y(), to_pile.x()) + heading(rng), v = speed(rng);
      action = idle(rng) ? Vec2::Zero() : Vec2(v * std::cos(h), v * std::sin(h));
    }
    r.graphs.push_back(observe(s));
    const auto slot = action_slot(s, action);
    r.controls.emplace_back(slot.begin(), slot.end());
    s = step_boxes(s, action, c.dt);
  }
  return r;
}

}  // namespace

Rollout generate_rollout(const DataConfig& config, int index) {
  config.validate();
  const std::uint64_t seed = config.seed ^ static_cast<std::uint64_t>(index);
  std::mt19937_64 rng(seed);
  Rollout r;
  switch (config.scenario) {
    case Scenario::Cradle: r = cradle_rollout(config, rng); break;
    case Scenario::String: r = string_rollout(config, rng); break;
    case Scenario::Boxes: r = box_rollout(config, rng); break;
  }
  r.seed = seed;
  return r;
}

std::vector<Rollout> generate_rollouts(const DataConfig& config) {
  config.validate();
  std::vector<Rollout> out(static_cast<std::size_t>(config.rollouts));
  parallel_for(out.size(), [&](std::size_t i) { out[i] = generate_rollout(config, static_cast<int>(i)); });
  return out;
}

// ---------------------------------------------------------------------------
// Files

namespace {

class GzWriter {
 public:
  explicit GzWriter(const std::string& path) : path_(path), file_(gzopen(path.c_str(), "wb6")) {
    if (!file_) throw std::runtime_error("cannot open '" + path + "' for writing");
  }
  ~GzWriter() {
    if (file_) gzclose(file_);
  }
  void line(const std::string& text) {
    write(text);
    write("\n");
  }
  void close() {
    if (gzclose(file_) != Z_OK) {
      file_ = nullptr;
      throw std::runtime_error("failed to finish writing '" + path_ + "'");
    }
    file_ = nullptr;
  }
  std::uint32_t crc() const { return static_cast<std::uint32_t>(crc_); }

 private:
  void write(const std::string& s) {
    if (s.empty()) return;
    crc_ = crc32(crc_, reinterpret_cast<const Bytef*>(s.data()), static_cast<uInt>(s.size()));
    if (gzwrite(file_, s.data(), static_cast<unsigned>(s.size())) != static_cast<int>(s.size())) {
      throw std::runtime_error("write error on '" + path_ + "'");
    }
  }
  std::string path_;
  gzFile file_;
  uLong crc_ = crc32(0L, Z_NULL, 0);
};

}  // namespace

DatasetSummary write_dataset(const std::vector<Rollout>& rollouts, const std::string& path) {
  GzWriter out(path);
  DatasetSummary summary;
  for (std::size_t i = 0; i < rollouts.size(); ++i) {
    const Rollout& r = rollouts[i];
    out.line(nlohmann::json{{"rollout", i}, {"scenario", to_string(r.scenario)}, {"seed", r.seed}, {"steps", r.steps()}}
                 .dump());
    for (int t = 0; t < r.steps(); ++t) {
      out.line(nlohmann::json{{"t", t},
                              {"graph", to_json(r.graphs[static_cast<std::size_t>(t)])},
                              {"control", r.controls[static_cast<std::size_t>(t)]}}
                   .dump());
      ++summary.records;
    }
    ++summary.rollouts;
  }
  out.close();
  summary.crc32 = out.crc();
  return summary;
}

std::vector<Rollout> read_dataset(const std::string& path) {
  gzFile in = gzopen(path.c_str(), "rb");
  if (!in) throw std::runtime_error("cannot open dataset '" + path + "'");
  std::vector<Rollout> out;
  std::string line;
  char buf[1 << 16];
  long line_no = 0;
  auto handle = [&](const std::string& text) {
    ++line_no;
    if (text.empty()) return;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
      if (j.contains("rollout")) {
        Rollout r;
        r.scenario = scenario_from_string(j.at("scenario").get<std::string>());
        r.seed = j.at("seed").get<std::uint64_t>();
        out.push_back(std::move(r));
      } else {
        if (out.empty()) throw std::runtime_error("step record before any rollout header");
        out.back().graphs.push_back(graph_from_json(j.at("graph")));
        out.back().controls.push_back(j.at("control").get<std::vector<double>>());
      }
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  };
  for (;;) {
    const int n = gzread(in, buf, sizeof buf);
    if (n < 0) {
      gzclose(in);
      throw std::runtime_error("read error on '" + path + "'");
    }
    if (n == 0) break;
    const char* p = buf;
    const char* end = buf + n;
    while (p < end) {
      const char* nl = std::find(p, end, '\n');
      line.append(p, nl);
      if (nl == end) break;
      handle(line);
      line.clear();
      p = nl + 1;
    }
  }
  gzclose(in);
  handle(line);
  return out;
}

Split split_rollouts(int n, double train_fraction, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("split_rollouts: no rollouts");
  std::vector<int> idx(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  int n_train = static_cast<int>(std::lround(n * train_fraction));
  if (n >= 2) n_train = std::clamp(n_train, 1, n - 1);
  Split s;
  s.train.assign(idx.begin(), idx.begin() + n_train);
  s.validation.assign(idx.begin() + n_train, idx.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.validation.begin(), s.validation.end());
  return s;
}

}  // namespace propnet
