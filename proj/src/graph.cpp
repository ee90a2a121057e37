#include "propnet/graph.hpp"

#include <cmath>
#include <stdexcept>

namespace propnet {

namespace {

constexpr std::array<std::string_view, 3> kScenarioNames = {"cradle", "string", "boxes"};
constexpr std::array<std::string_view, kRelationTypeCount> kRelationNames = {
    "rigid", "spring", "collision", "friction_self", "pairwise_box"};

bool finite(const Vec2& v) { return std::isfinite(v.x()) && std::isfinite(v.y()); }

Relation make_relation(int receiver, int sender, RelationType type, std::array<double, 3> params) {
  Relation r;
  r.receiver = receiver;
  r.sender = sender;
  r.type = type;
  r.params = params;
  return r;
}

}  // namespace

std::string_view to_string(Scenario s) { return kScenarioNames.at(static_cast<std::size_t>(s)); }

Scenario scenario_from_string(std::string_view s) {
  for (std::size_t i = 0; i < kScenarioNames.size(); ++i) {
    if (kScenarioNames[i] == s) return static_cast<Scenario>(i);
  }
  throw std::invalid_argument("unknown scenario '" + std::string(s) + "'");
}

std::string_view to_string(RelationType t) { return kRelationNames.at(static_cast<std::size_t>(t)); }

RelationType relation_type_from_string(std::string_view s) {
  for (std::size_t i = 0; i < kRelationNames.size(); ++i) {
    if (kRelationNames[i] == s) return static_cast<RelationType>(i);
  }
  throw std::invalid_argument("unknown relation type '" + std::string(s) + "'");
}

int DynamicsGraph::attribute_width() const {
  return objects.empty() ? (scenario == Scenario::Boxes ? 0 : attr::kWidth)
                         : static_cast<int>(objects.front().attributes.size());
}

void DynamicsGraph::validate() const {
  const int width = attribute_width();
  for (std::size_t i = 0; i < objects.size(); ++i) {
    const auto& o = objects[i];
    if (static_cast<int>(o.attributes.size()) != width) {
      throw std::invalid_argument("object " + std::to_string(i) + " has attribute width " +
                                  std::to_string(o.attributes.size()) + ", expected " + std::to_string(width));
    }
    bool ok = finite(o.position) && finite(o.velocity) && finite(o.external_force);
    for (double a : o.attributes) ok = ok && std::isfinite(a);
    if (!ok) throw std::invalid_argument("object " + std::to_string(i) + " has non-finite state");
  }
  const int n = num_objects();
  for (std::size_t k = 0; k < relations.size(); ++k) {
    const auto& r = relations[k];
    if (r.receiver < 0 || r.receiver >= n || r.sender < 0 || r.sender >= n) {
      throw std::invalid_argument("relation " + std::to_string(k) + " index out of range");
    }
    const bool self = r.receiver == r.sender;
    if (self != (r.type == RelationType::FrictionSelf)) {
      throw std::invalid_argument("relation " + std::to_string(k) +
                                  ": only friction relations may (and must) be self-loops");
    }
    for (double p : r.params) {
      if (!std::isfinite(p)) throw std::invalid_argument("relation " + std::to_string(k) + " has non-finite params");
    }
  }
}

int DynamicsGraph::count(RelationType t) const {
  int c = 0;
  for (const auto& r : relations) c += r.type == t;
  return c;
}

Incidence build_incidence(const DynamicsGraph& g) {
  Incidence inc;
  inc.incoming.resize(g.objects.size());
  inc.receivers.reserve(g.relations.size());
  inc.senders.reserve(g.relations.size());
  for (int k = 0; k < g.num_relations(); ++k) {
    const auto& r = g.relations[static_cast<std::size_t>(k)];
    inc.incoming[static_cast<std::size_t>(r.receiver)].push_back(k);
    inc.receivers.push_back(r.receiver);
    inc.senders.push_back(r.sender);
  }
  return inc;
}

FlatGraph flatten(const DynamicsGraph& g) {
  g.validate();
  FlatGraph flat;
  flat.scenario = g.scenario;
  const int width = g.attribute_width();
  flat.objects.resize(g.num_objects(), 6 + width);
  for (int i = 0; i < g.num_objects(); ++i) {
    const auto& o = g.objects[static_cast<std::size_t>(i)];
    auto row = flat.objects.row(i);
    row(0) = o.position.x();
    row(1) = o.position.y();
    row(2) = o.velocity.x();
    row(3) = o.velocity.y();
    for (int a = 0; a < width; ++a) row(4 + a) = o.attributes[static_cast<std::size_t>(a)];
    row(4 + width) = o.external_force.x();
    row(5 + width) = o.external_force.y();
  }
  flat.relations = Tensor::Zero(g.num_relations(), kRelationFeatureWidth);
  for (int k = 0; k < g.num_relations(); ++k) {
    const auto& r = g.relations[static_cast<std::size_t>(k)];
    flat.relations(k, static_cast<int>(r.type)) = 1.0;
    for (int p = 0; p < kRelationParamWidth; ++p) {
      flat.relations(k, kRelationTypeCount + p) = r.params[static_cast<std::size_t>(p)];
    }
  }
  flat.incidence = build_incidence(g);
  return flat;
}

DynamicsGraph unflatten(const FlatGraph& flat) {
  const auto n = flat.objects.rows();
  if (n > 0 && flat.objects.cols() < 6) throw std::logic_error("object feature matrix narrower than 6 columns");
  if (flat.relations.rows() > 0 && flat.relations.cols() != kRelationFeatureWidth) {
    throw std::logic_error("relation feature matrix has the wrong width");
  }
  if (static_cast<std::size_t>(flat.relations.rows()) != flat.incidence.receivers.size()) {
    throw std::logic_error("incidence does not match relation count");
  }
  DynamicsGraph g;
  g.scenario = flat.scenario;
  const int width = n > 0 ? static_cast<int>(flat.objects.cols()) - 6 : 0;
  g.objects.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    auto& o = g.objects[static_cast<std::size_t>(i)];
    o.position = {flat.objects(i, 0), flat.objects(i, 1)};
    o.velocity = {flat.objects(i, 2), flat.objects(i, 3)};
    o.attributes.resize(static_cast<std::size_t>(width));
    for (int a = 0; a < width; ++a) o.attributes[static_cast<std::size_t>(a)] = flat.objects(i, 4 + a);
    o.external_force = {flat.objects(i, 4 + width), flat.objects(i, 5 + width)};
  }
  g.relations.resize(static_cast<std::size_t>(flat.relations.rows()));
  for (Eigen::Index k = 0; k < flat.relations.rows(); ++k) {
    auto& r = g.relations[static_cast<std::size_t>(k)];
    Eigen::Index type = 0;
    flat.relations.row(k).head(kRelationTypeCount).maxCoeff(&type);
    r.type = static_cast<RelationType>(type);
    r.receiver = flat.incidence.receivers[static_cast<std::size_t>(k)];
    r.sender = flat.incidence.senders[static_cast<std::size_t>(k)];
    for (int p = 0; p < kRelationParamWidth; ++p) r.params[static_cast<std::size_t>(p)] = flat.relations(k, kRelationTypeCount + p);
  }
  return g;
}

bool is_pinned(const DynamicsGraph& g, int object) {
  const auto& a = g.objects.at(static_cast<std::size_t>(object)).attributes;
  if (a.size() < static_cast<std::size_t>(attr::kWidth)) return false;
  return a[attr::kFlag] != 0.0 || a[attr::kMass] == 0.0;
}

std::vector<int> pinned_mask(const DynamicsGraph& g) {
  std::vector<int> mask(g.objects.size());
  for (int i = 0; i < g.num_objects(); ++i) mask[static_cast<std::size_t>(i)] = is_pinned(g, i) ? 1 : 0;
  return mask;
}

void CradleGeometry::validate() const {
  if (!(rod_length > 0 && ball_radius > 0 && gravity >= 0 && ball_mass > 0)) {
    throw std::invalid_argument("cradle geometry needs positive rod length, radius and mass");
  }
  if (restitution < 0.0 || restitution > 1.0) throw std::invalid_argument("restitution must lie in [0, 1]");
}

DynamicsGraph build_cradle_graph(int n, const CradleGeometry& geometry) {
  if (n < 1) throw std::invalid_argument("cradle needs at least one ball");
  geometry.validate();
  DynamicsGraph g;
  g.scenario = Scenario::Cradle;
  g.objects.resize(static_cast<std::size_t>(2 * n));
  for (int i = 0; i < n; ++i) {
    auto& ball = g.objects[static_cast<std::size_t>(i)];
    ball.position = geometry.pivot(i) + Vec2(0.0, -geometry.rod_length);
    ball.attributes = {geometry.ball_mass, 0.0, geometry.ball_radius};
    auto& pivot = g.objects[static_cast<std::size_t>(n + i)];
    pivot.position = geometry.pivot(i);
    pivot.attributes = {0.0, 1.0, 0.0};
  }
  for (int i = 0; i < n; ++i) {
    g.relations.push_back(make_relation(i, n + i, RelationType::Rigid, {geometry.rod_length, 0.0, 0.0}));
    g.relations.push_back(make_relation(n + i, i, RelationType::Rigid, {geometry.rod_length, 0.0, 0.0}));
  }
  const std::array<double, 3> contact = {2.0 * geometry.ball_radius, geometry.restitution, 0.0};
  for (int i = 0; i + 1 < n; ++i) {
    g.relations.push_back(make_relation(i + 1, i, RelationType::Collision, contact));
    g.relations.push_back(make_relation(i, i + 1, RelationType::Collision, contact));
  }
  return g;
}

DynamicsGraph build_string_graph(int n, const std::vector<Obstacle>& obstacles, const Vec2& fixed_end,
                                 const StringAttributes& a) {
  if (n < 1) throw std::invalid_argument("string needs at least one mass");
  if (obstacles.size() != 2) {
    throw std::invalid_argument("string scenario needs exactly 2 obstacles, got " + std::to_string(obstacles.size()));
  }
  if (!(a.stiffness > 0 && a.mass > 0 && a.rest_length > 0)) {
    throw std::invalid_argument("string needs positive mass, stiffness and rest length");
  }
  for (const auto& o : obstacles) {
    if (!(o.radius > 0)) throw std::invalid_argument("obstacle radius must be positive");
  }
  DynamicsGraph g;
  g.scenario = Scenario::String;
  for (int i = 0; i < n; ++i) {
    ObjectState m;
    m.position = fixed_end + Vec2(a.rest_length * i, 0.0);
    m.attributes = {a.mass, i == 0 ? 1.0 : 0.0, 0.0};
    g.objects.push_back(m);
  }
  for (const auto& o : obstacles) {
    ObjectState s;
    s.position = o.center;
    s.attributes = {0.0, 0.0, o.radius};
    g.objects.push_back(s);
  }
  for (int i = 0; i + 1 < n; ++i) {
    const std::array<double, 3> spring = {a.rest_length, a.stiffness, a.damping};
    g.relations.push_back(make_relation(i + 1, i, RelationType::Spring, spring));
    g.relations.push_back(make_relation(i, i + 1, RelationType::Spring, spring));
  }
  for (int i = 0; i < n; ++i) {
    for (int o = 0; o < 2; ++o) {
      const int obstacle = n + o;
      const std::array<double, 3> contact = {obstacles[static_cast<std::size_t>(o)].radius, 0.0, 0.0};
      g.relations.push_back(make_relation(i, obstacle, RelationType::Collision, contact));
      g.relations.push_back(make_relation(obstacle, i, RelationType::Collision, contact));
    }
  }
  for (int i = 0; i < n; ++i) {
    g.relations.push_back(make_relation(i, i, RelationType::FrictionSelf, {a.friction, 0.0, 0.0}));
  }
  return g;
}

DynamicsGraph build_box_graph(const std::vector<Vec2>& positions, const std::vector<Vec2>& velocities) {
  if (!velocities.empty() && velocities.size() != positions.size()) {
    throw std::invalid_argument("box velocities must match positions");
  }
  DynamicsGraph g;
  g.scenario = Scenario::Boxes;
  const int n = static_cast<int>(positions.size());
  g.objects.resize(positions.size());
  for (int i = 0; i < n; ++i) {
    g.objects[static_cast<std::size_t>(i)].position = positions[static_cast<std::size_t>(i)];
    if (!velocities.empty()) g.objects[static_cast<std::size_t>(i)].velocity = velocities[static_cast<std::size_t>(i)];
  }
  for (int u = 0; u < n; ++u) {
    for (int v = 0; v < n; ++v) {
      if (u != v) g.relations.push_back(make_relation(u, v, RelationType::PairwiseBox, {0.0, 0.0, 0.0}));
    }
  }
  return g;
}

nlohmann::json to_json(const DynamicsGraph& g) {
  nlohmann::json objects = nlohmann::json::array();
  for (const auto& o : g.objects) {
    objects.push_back({{"q", {o.position.x(), o.position.y()}},
                       {"v", {o.velocity.x(), o.velocity.y()}},
                       {"attr", o.attributes},
                       {"p", {o.external_force.x(), o.external_force.y()}}});
  }
  nlohmann::json relations = nlohmann::json::array();
  for (const auto& r : g.relations) {
    relations.push_back({{"u", r.receiver}, {"v", r.sender}, {"type", to_string(r.type)}, {"params", r.params}});
  }
  return {{"scenario", to_string(g.scenario)}, {"objects", std::move(objects)}, {"relations", std::move(relations)}};
}

DynamicsGraph graph_from_json(const nlohmann::json& j) {
  DynamicsGraph g;
  g.scenario = scenario_from_string(j.at("scenario").get<std::string>());
  for (const auto& o : j.at("objects")) {
    ObjectState s;
    const auto q = o.at("q").get<std::array<double, 2>>();
    const auto v = o.at("v").get<std::array<double, 2>>();
    const auto p = o.at("p").get<std::array<double, 2>>();
    s.position = {q[0], q[1]};
    s.velocity = {v[0], v[1]};
    s.external_force = {p[0], p[1]};
    s.attributes = o.at("attr").get<std::vector<double>>();
    g.objects.push_back(std::move(s));
  }
  for (const auto& r : j.at("relations")) {
    Relation rel;
    rel.receiver = r.at("u").get<int>();
    rel.sender = r.at("v").get<int>();
    rel.type = relation_type_from_string(r.at("type").get<std::string>());
    rel.params = r.at("params").get<std::array<double, 3>>();
    g.relations.push_back(rel);
  }
  g.validate();
  return g;
}

}  // namespace propnet
