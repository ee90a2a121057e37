#include "propnet/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace propnet {

using nlohmann::json;

namespace {

/// Typed access to the keys of one JSON object; remembers which keys were
/// consumed so the rest can be rejected.
class Fields {
 public:
  Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string at(std::string_view key) const { return path_.empty() ? std::string(key) : path_ + "." + std::string(key); }
  bool has(const char* key) const { return j_.contains(key); }

  template <class T>
  void get(const char* key, T& out) {
    if (!j_.contains(key)) return;
    seen_.insert(key);
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(at(key), std::string("expected ") + type_name<T>() + ", got " + j_.at(key).dump());
    }
  }

  const json& sub(const char* key) {
    seen_.insert(key);
    return j_.at(key);
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError(at(key), "unknown key");
    }
  }

 private:
  template <class T>
  static const char* type_name() {
    if constexpr (std::is_same_v<T, bool>) return "a boolean";
    else if constexpr (std::is_integral_v<T>) return "an integer";
    else if constexpr (std::is_floating_point_v<T>) return "a number";
    else if constexpr (std::is_same_v<T, std::string>) return "a string";
    else return "a list";
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

/// Re-raises a validation message such as "data.rollouts must be >= 1" as
/// a ConfigError whose path is the leading dotted token.
[[noreturn]] void rethrow(const std::string& section, const std::exception& e) {
  const std::string msg = e.what();
  const auto end = msg.find_first_of(" :");
  if (end != std::string::npos && msg.compare(0, section.size(), section) == 0) {
    std::string rest = msg.substr(end);
    while (!rest.empty() && (rest.front() == ' ' || rest.front() == ':')) rest.erase(rest.begin());
    throw ConfigError(msg.substr(0, end), rest);
  }
  throw ConfigError(section, msg);
}

void read_geometry(Fields& f, CradleGeometry& g) {
  f.get("rod_length", g.rod_length);
  f.get("ball_radius", g.ball_radius);
  f.get("gravity", g.gravity);
  f.get("restitution", g.restitution);
  f.get("ball_mass", g.ball_mass);
  f.finish();
}

void read_attributes(Fields& f, StringAttributes& a) {
  f.get("mass", a.mass);
  f.get("stiffness", a.stiffness);
  f.get("rest_length", a.rest_length);
  f.get("damping", a.damping);
  f.get("friction", a.friction);
  f.finish();
}

void read_data(Fields& f, DataConfig& d) {
  f.get("rollouts", d.rollouts);
  f.get("steps", d.steps);
  f.get("dt", d.dt);
  f.get("balls", d.balls);
  if (f.has("cradle")) {
    Fields g(f.sub("cradle"), f.at("cradle"));
    read_geometry(g, d.cradle);
  }
  f.get("min_angle_deg", d.min_angle_deg);
  f.get("max_angle_deg", d.max_angle_deg);
  f.get("masses", d.masses);
  if (f.has("string")) {
    Fields a(f.sub("string"), f.at("string"));
    read_attributes(a, d.string);
  }
  f.get("attribute_jitter", d.attribute_jitter);
  f.get("force_sigma", d.force_sigma);
  f.get("force_refresh", d.force_refresh);
  f.get("obstacle_stiffness", d.obstacle_stiffness);
  f.get("boxes", d.boxes);
  f.get("visible_fraction", d.visible_fraction);
  f.get("max_push_speed", d.max_push_speed);
  f.get("action_refresh", d.action_refresh);
  f.finish();
  try {
    d.validate();
  } catch (const std::exception& e) {
    rethrow("data", e);
  }
}

void read_train(Fields& f, TrainConfig& t) {
  f.get("batch_size", t.batch_size);
  f.get("epochs", t.epochs);
  f.get("lr", t.lr);
  f.get("patience", t.patience);
  f.get("decay", t.decay);
  f.get("clip_norm", t.clip_norm);
  f.get("train_fraction", t.train_fraction);
  f.get("max_batches_per_epoch", t.max_batches_per_epoch);
  f.get("max_validation_samples", t.max_validation_samples);
  f.get("verbose", t.verbose);
  f.finish();
  try {
    t.validate();
  } catch (const std::exception& e) {
    rethrow("train", e);
  }
}

void read_eval(Fields& f, EvalSettings& e) {
  f.get("horizons", e.horizons);
  f.get("rollouts", e.rollouts);
  f.finish();
  if (e.horizons.empty()) throw ConfigError("eval.horizons", "must not be empty");
  for (int h : e.horizons) {
    if (h < 1) throw ConfigError("eval.horizons", "every horizon must be >= 1");
  }
  if (e.rollouts < 0) throw ConfigError("eval.rollouts", "must be >= 0");
}

void read_control(Fields& f, ControlSettings& c) {
  f.get("episodes", c.episodes);
  f.get("horizon", c.horizon);
  f.get("planner", c.planner);
  f.get("iterations", c.iterations);
  f.get("lr", c.lr);
  f.get("backtracks", c.backtracks);
  f.get("adapt", c.adapt);
  f.get("bias", c.bias);
  f.get("disturbance_sigma", c.disturbance_sigma);
  f.get("kp", c.kp);
  f.get("kd", c.kd);
  f.get("masses", c.masses);
  f.get("boxes", c.boxes);
  f.get("visible_fraction", c.visible_fraction);
  f.get("target_angle_deg", c.target_angle_deg);
  f.get("init_deg", c.init_deg);
  f.get("shooting_lr", c.shooting_lr);
  f.get("shooting_iterations", c.shooting_iterations);
  f.get("shooting_horizon", c.shooting_horizon);
  f.get("temperature", c.temperature);
  f.finish();
  if (c.episodes < 1) throw ConfigError("control.episodes", "must be >= 1");
  if (c.horizon < 1) throw ConfigError("control.horizon", "must be >= 1");
  if (c.planner != "mpc" && c.planner != "open_loop" && c.planner != "pd") {
    throw ConfigError("control.planner", "expected mpc, open_loop or pd, got " + c.planner);
  }
  if (c.iterations < 0) throw ConfigError("control.iterations", "must be >= 0");
  if (c.backtracks < 0) throw ConfigError("control.backtracks", "must be >= 0");
  if (!(c.lr > 0)) throw ConfigError("control.lr", "must be positive");
  if (c.bias < 0 || c.bias >= 1) throw ConfigError("control.bias", "must be in [0, 1)");
  if (c.disturbance_sigma < 0) throw ConfigError("control.disturbance_sigma", "must be >= 0");
  if (c.kp < 0 || c.kd < 0) throw ConfigError("control.kp", "gains must be >= 0");
  if (c.masses < 3) throw ConfigError("control.masses", "must be >= 3");
  if (c.boxes < 1) throw ConfigError("control.boxes", "must be >= 1");
  if (!(c.visible_fraction > 0 && c.visible_fraction <= 1)) throw ConfigError("control.visible_fraction", "must be in (0, 1]");
  if (c.shooting_iterations < 0) throw ConfigError("control.shooting_iterations", "must be >= 0");
  if (c.shooting_horizon < 1) throw ConfigError("control.shooting_horizon", "must be >= 1");
  if (!(c.shooting_lr > 0)) throw ConfigError("control.shooting_lr", "must be positive");
  if (!(c.temperature > 0)) throw ConfigError("control.temperature", "must be positive");
}

ModelSpec read_model(const json& j) {
  json spec = j;
  int width = 0, effect = 0;
  {
    Fields f(j, "model");
    if (j.contains("width")) f.get("width", width);
    if (j.contains("effect")) f.get("effect", effect);
  }
  spec.erase("width");
  spec.erase("effect");
  ModelSpec s;
  try {
    s = model_spec_from_json(spec);
    if (width > 0) {
      const int latent = s.latent_dim;
      s = s.with_widths(width, effect > 0 ? effect : width);
      if (spec.contains("latent_dim")) s.latent_dim = latent;
    } else if (effect > 0) {
      throw ConfigError("model.effect", "requires model.width");
    }
    s.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    rethrow("model", e);
  }
  return s;
}

}  // namespace

RunConfig run_config_from_json(const json& doc) {
  RunConfig c;
  Fields f(doc, "");
  if (!doc.contains("scenario")) throw ConfigError("scenario", "missing required key");
  std::string scenario;
  f.get("scenario", scenario);
  try {
    c.scenario = scenario_from_string(scenario);
  } catch (const std::exception&) {
    throw ConfigError("scenario", "expected cradle, string or boxes, got " + scenario);
  }
  f.get("seed", c.seed);
  f.get("output_dir", c.output_dir);
  f.get("dataset", c.dataset);
  f.get("checkpoint", c.checkpoint);
  if (c.output_dir.empty()) throw ConfigError("output_dir", "must not be empty");
  if (c.dataset.empty()) c.dataset = c.output_dir + "/dataset.ndjson.gz";
  if (c.checkpoint.empty()) c.checkpoint = c.output_dir + "/model.ckpt";

  c.data.scenario = c.scenario;
  if (f.has("data")) {
    Fields d(f.sub("data"), "data");
    read_data(d, c.data);
  } else {
    c.data.validate();
  }
  c.data.seed = c.seed;

  c.model = ModelSpec::defaults(c.scenario == Scenario::Boxes ? ModelKind::LatentPropNet : ModelKind::PropNet);
  if (f.has("model")) {
    const json& m = f.sub("model");
    if (m.is_string()) {
      if (m.get<std::string>() != "oracle") throw ConfigError("model", "expected an object or \"oracle\"");
      if (c.scenario == Scenario::Boxes) throw ConfigError("model", "no ground-truth model exists for boxes");
      c.oracle = true;
    } else {
      c.model = read_model(m);
    }
  }
  if (!c.oracle && c.model.latent() != (c.scenario == Scenario::Boxes)) {
    throw ConfigError("model.kind", std::string(to_string(c.model.kind)) + " does not fit scenario " +
                                        std::string(to_string(c.scenario)));
  }

  if (f.has("train")) {
    Fields t(f.sub("train"), "train");
    read_train(t, c.train);
  }
  c.train.seed = c.seed;
  if (f.has("eval")) {
    Fields e(f.sub("eval"), "eval");
    read_eval(e, c.eval);
  }
  if (f.has("control")) {
    Fields k(f.sub("control"), "control");
    read_control(k, c.control);
  }
  f.finish();
  return c;
}

json to_json(const RunConfig& c) {
  json j;
  j["scenario"] = to_string(c.scenario);
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  j["dataset"] = c.dataset;
  j["checkpoint"] = c.checkpoint;
  const DataConfig& d = c.data;
  j["data"] = {{"rollouts", d.rollouts},
               {"steps", d.steps},
               {"dt", d.dt},
               {"balls", d.balls},
               {"cradle",
                {{"rod_length", d.cradle.rod_length},
                 {"ball_radius", d.cradle.ball_radius},
                 {"gravity", d.cradle.gravity},
                 {"restitution", d.cradle.restitution},
                 {"ball_mass", d.cradle.ball_mass}}},
               {"min_angle_deg", d.min_angle_deg},
               {"max_angle_deg", d.max_angle_deg},
               {"masses", d.masses},
               {"string",
                {{"mass", d.string.mass},
                 {"stiffness", d.string.stiffness},
                 {"rest_length", d.string.rest_length},
                 {"damping", d.string.damping},
                 {"friction", d.string.friction}}},
               {"attribute_jitter", d.attribute_jitter},
               {"force_sigma", d.force_sigma},
               {"force_refresh", d.force_refresh},
               {"obstacle_stiffness", d.obstacle_stiffness},
               {"boxes", d.boxes},
               {"visible_fraction", d.visible_fraction},
               {"max_push_speed", d.max_push_speed},
               {"action_refresh", d.action_refresh}};
  if (c.oracle) {
    j["model"] = "oracle";
  } else {
    j["model"] = to_json(c.model);
  }
  const TrainConfig& t = c.train;
  j["train"] = {{"batch_size", t.batch_size},
                {"epochs", t.epochs},
                {"lr", t.lr},
                {"patience", t.patience},
                {"decay", t.decay},
                {"clip_norm", t.clip_norm},
                {"train_fraction", t.train_fraction},
                {"max_batches_per_epoch", t.max_batches_per_epoch},
                {"max_validation_samples", t.max_validation_samples},
                {"verbose", t.verbose}};
  j["eval"] = {{"horizons", c.eval.horizons}, {"rollouts", c.eval.rollouts}};
  const ControlSettings& k = c.control;
  j["control"] = {{"episodes", k.episodes},
                  {"horizon", k.horizon},
                  {"planner", k.planner},
                  {"iterations", k.iterations},
                  {"lr", k.lr},
                  {"backtracks", k.backtracks},
                  {"adapt", k.adapt},
                  {"bias", k.bias},
                  {"disturbance_sigma", k.disturbance_sigma},
                  {"kp", k.kp},
                  {"kd", k.kd},
                  {"masses", k.masses},
                  {"boxes", k.boxes},
                  {"visible_fraction", k.visible_fraction},
                  {"target_angle_deg", k.target_angle_deg},
                  {"init_deg", k.init_deg},
                  {"shooting_lr", k.shooting_lr},
                  {"shooting_iterations", k.shooting_iterations},
                  {"shooting_horizon", k.shooting_horizon},
                  {"temperature", k.temperature}};
  return j;
}

void apply_override(json& doc, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ConfigError(std::string(assignment), "override must look like key=value");
  }
  const std::string key(assignment.substr(0, eq));
  const std::string text(assignment.substr(eq + 1));
  json value;
  try {
    value = json::parse(text);
  } catch (const json::exception&) {
    value = text;
  }
  json* node = &doc;
  std::stringstream parts(key);
  std::string part, walked;
  std::vector<std::string> path;
  while (std::getline(parts, part, '.')) {
    if (part.empty()) throw ConfigError(key, "empty path component in override");
    path.push_back(part);
  }
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    walked += (walked.empty() ? "" : ".") + path[i];
    if (!node->is_object()) throw ConfigError(walked, "cannot override inside a non-object");
    node = &(*node)[path[i]];
    if (node->is_null()) *node = json::object();
  }
  if (!node->is_object()) throw ConfigError(key, "cannot override inside a non-object");
  (*node)[path.back()] = value;
}

RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path, "cannot open config file");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path, std::string("invalid JSON: ") + e.what());
  }
  for (const auto& o : overrides) apply_override(doc, o);
  return run_config_from_json(doc);
}

}  // namespace propnet
