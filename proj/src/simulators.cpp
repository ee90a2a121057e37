#include "propnet/simulators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <stdexcept>

namespace propnet {

namespace {

constexpr double kContactTolerance = 1e-9;
constexpr double kApproachTolerance = 1e-12;

Vec2 ball_position(const CradleGeometry& g, int i, double theta) {
  return g.pivot(i) + g.rod_length * Vec2(std::sin(theta), -std::cos(theta));
}

}  // namespace

// ---------------------------------------------------------------------------
// Cradle

std::vector<Vec2> cradle_positions(const CradleState& s, const CradleGeometry& g) {
  std::vector<Vec2> out;
  for (int i = 0; i < s.size(); ++i) out.push_back(ball_position(g, i, s.theta[static_cast<std::size_t>(i)]));
  return out;
}

double cradle_energy(const CradleState& s, const CradleGeometry& g) {
  double e = 0.0;
  for (int i = 0; i < s.size(); ++i) {
    const double w = s.omega[static_cast<std::size_t>(i)];
    const double th = s.theta[static_cast<std::size_t>(i)];
    e += 0.5 * g.ball_mass * g.rod_length * g.rod_length * w * w;
    e += g.ball_mass * g.gravity * g.rod_length * (1.0 - std::cos(th));
  }
  return e;
}

int resolve_impacts(const std::vector<double>& theta, std::vector<double>& omega, const CradleGeometry& g,
                    double dt, Eigen::MatrixXd* map) {
  const int n = static_cast<int>(theta.size());
  if (omega.size() != theta.size()) throw std::invalid_argument("resolve_impacts: theta/omega size mismatch");
  if (map) *map = Eigen::MatrixXd::Identity(n, n);
  const double contact = 2.0 * g.ball_radius + kContactTolerance;
  const double keep = 0.5 * (1.0 - g.restitution), pass = 0.5 * (1.0 + g.restitution);
  int exchanges = 0;
  const int max_scans = std::max(1, n * n);
  for (int scan = 0; scan < max_scans; ++scan) {
    bool any = false;
    for (int i = 0; i + 1 < n; ++i) {
      const auto a = static_cast<std::size_t>(i), b = a + 1;
      if (omega[a] - omega[b] <= kApproachTolerance) continue;
      const Vec2 pa = ball_position(g, i, theta[a] + dt * omega[a]);
      const Vec2 pb = ball_position(g, i + 1, theta[b] + dt * omega[b]);
      if ((pb - pa).norm() > contact) continue;
      const double wa = omega[a], wb = omega[b];
      omega[a] = keep * wa + pass * wb;
      omega[b] = pass * wa + keep * wb;
      if (map) {
        const Eigen::RowVectorXd ra = map->row(i), rb = map->row(i + 1);
        map->row(i) = keep * ra + pass * rb;
        map->row(i + 1) = pass * ra + keep * rb;
      }
      ++exchanges;
      any = true;
    }
    if (!any) return exchanges;
  }
  throw std::runtime_error("cradle impulse resolution did not settle after " + std::to_string(max_scans) + " scans");
}

CradleState step_cradle(const CradleState& s, const CradleGeometry& g, double dt) {
  CradleState next = s;
  for (std::size_t i = 0; i < next.theta.size(); ++i) {
    next.omega[i] -= dt * (g.gravity / g.rod_length) * std::sin(next.theta[i]);
  }
  resolve_impacts(next.theta, next.omega, g, dt);
  for (std::size_t i = 0; i < next.theta.size(); ++i) next.theta[i] += dt * next.omega[i];
  return next;
}

DynamicsGraph cradle_graph(const CradleState& s, const CradleGeometry& g, const CradleState* previous, double dt) {
  DynamicsGraph graph = build_cradle_graph(s.size(), g);
  const auto q = cradle_positions(s, g);
  std::vector<Vec2> q0;
  if (previous) q0 = cradle_positions(*previous, g);
  for (int i = 0; i < s.size(); ++i) {
    auto& ball = graph.objects[static_cast<std::size_t>(i)];
    ball.position = q[static_cast<std::size_t>(i)];
    ball.velocity = previous ? Vec2((q[static_cast<std::size_t>(i)] - q0[static_cast<std::size_t>(i)]) / dt)
                             : Vec2::Zero();
  }
  return graph;
}

CradleState cradle_lifted(int n, double angle) {
  CradleState s;
  s.theta.assign(static_cast<std::size_t>(n), 0.0);
  s.omega.assign(static_cast<std::size_t>(n), 0.0);
  if (n > 0) s.theta[0] = -angle;
  return s;
}

// ---------------------------------------------------------------------------
// String

StringState straight_string(int n, const Vec2& fixed_end, const Vec2& direction, double rest_length) {
  StringState s;
  const Vec2 d = direction.normalized();
  for (int i = 0; i < n; ++i) {
    s.positions.push_back(fixed_end + rest_length * i * d);
    s.velocities.push_back(Vec2::Zero());
  }
  return s;
}

std::vector<Vec2> spring_forces(const std::vector<Vec2>& x, const std::vector<Vec2>& u, const StringAttributes& a) {
  std::vector<Vec2> f(x.size(), Vec2::Zero());
  for (std::size_t i = 0; i + 1 < x.size(); ++i) {
    const Vec2 d = x[i + 1] - x[i];
    const double len = d.norm();
    if (len <= 0.0) continue;
    const Vec2 dir = d / len;
    const double tension = a.stiffness * (len - a.rest_length) + a.damping * (u[i + 1] - u[i]).dot(dir);
    f[i] += tension * dir;
    f[i + 1] -= tension * dir;
  }
  return f;
}

StringState step_string(const StringState& s, const StringParams& p, const std::vector<Vec2>& forces, double dt) {
  const std::size_t n = s.positions.size();
  if (!forces.empty() && forces.size() != n) throw std::invalid_argument("step_string: one force per mass required");
  if (p.substeps < 1) throw std::invalid_argument("step_string: substeps must be >= 1");
  const double h = dt / p.substeps;
  const double m = p.attributes.mass;
  std::vector<Vec2> x = s.positions, u = s.velocities;
  if (n > 0) u[0] = Vec2::Zero();
  for (int sub = 0; sub < p.substeps; ++sub) {
    std::vector<Vec2> f = spring_forces(x, u, p.attributes);
    for (std::size_t i = 1; i < n; ++i) {
      for (const auto& o : p.obstacles) {
        const Vec2 d = x[i] - o.center;
        const double dist = d.norm();
        if (dist < o.radius && dist > 0.0) f[i] += p.obstacle_stiffness * (o.radius - dist) * d / dist;
      }
      f[i] -= p.attributes.friction * u[i];
      if (!forces.empty()) f[i] += forces[i];
      u[i] += h * f[i] / m;
      x[i] += h * u[i];
    }
  }
  StringState next;
  next.positions = x;
  next.positions[0] = s.positions[0];
  for (std::size_t i = 0; i < n; ++i) next.velocities.push_back((next.positions[i] - s.positions[i]) / dt);
  return next;
}

double kinetic_energy(const StringState& s, double mass) {
  double e = 0.0;
  for (std::size_t i = 1; i < s.velocities.size(); ++i) e += 0.5 * mass * s.velocities[i].squaredNorm();
  return e;
}

DynamicsGraph string_graph(const StringState& s, const StringParams& p, const std::vector<Vec2>& forces) {
  if (s.size() < 1) throw std::invalid_argument("string_graph: empty string");
  DynamicsGraph g = build_string_graph(s.size(), p.obstacles, s.positions[0], p.attributes);
  for (int i = 0; i < s.size(); ++i) {
    auto& o = g.objects[static_cast<std::size_t>(i)];
    o.position = s.positions[static_cast<std::size_t>(i)];
    o.velocity = i == 0 ? Vec2::Zero() : s.velocities[static_cast<std::size_t>(i)];
    if (!forces.empty() && i > 0) o.external_force = forces.at(static_cast<std::size_t>(i));
  }
  return g;
}

StringState string_state_from_graph(const DynamicsGraph& g) {
  StringState s;
  for (const auto& o : g.objects) {
    if (o.attributes.at(attr::kMass) == 0.0 && o.attributes.at(attr::kFlag) == 0.0) break;  // obstacles follow
    s.positions.push_back(o.position);
    s.velocities.push_back(o.velocity);
  }
  return s;
}

StringParams string_params_from_graph(const DynamicsGraph& g) {
  StringParams p;
  for (const auto& o : g.objects) {
    if (o.attributes.at(attr::kMass) == 0.0 && o.attributes.at(attr::kFlag) == 0.0) {
      p.obstacles.push_back({o.position, o.attributes.at(attr::kRadius)});
    } else {
      p.attributes.mass = o.attributes.at(attr::kMass);
    }
  }
  for (const auto& r : g.relations) {
    if (r.type == RelationType::Spring) {
      p.attributes.rest_length = r.params[rparam::kRestLength];
      p.attributes.stiffness = r.params[rparam::kStiffness];
      p.attributes.damping = r.params[rparam::kDamping];
    } else if (r.type == RelationType::FrictionSelf) {
      p.attributes.friction = r.params[rparam::kFriction];
    }
  }
  return p;
}

// ---------------------------------------------------------------------------
// Boxes

namespace {

// Contact depth of every disc: 0 for discs touching the pusher, otherwise
// one more than the shallowest touching neighbour; unreachable discs get
// the maximum value.
std::vector<int> contact_depths(const BoxScene& s, double slack) {
  const int n = s.size();
  std::vector<int> depth(static_cast<std::size_t>(n), std::numeric_limits<int>::max());
  std::queue<int> frontier;
  for (int i = 0; i < n; ++i) {
    if ((s.centers[static_cast<std::size_t>(i)] - s.pusher).norm() <= s.radius + s.pusher_radius + slack) {
      depth[static_cast<std::size_t>(i)] = 0;
      frontier.push(i);
    }
  }
  while (!frontier.empty()) {
    const int i = frontier.front();
    frontier.pop();
    for (int j = 0; j < n; ++j) {
      if (depth[static_cast<std::size_t>(j)] != std::numeric_limits<int>::max()) continue;
      if ((s.centers[static_cast<std::size_t>(i)] - s.centers[static_cast<std::size_t>(j)]).norm() <=
          2.0 * s.radius + slack) {
        depth[static_cast<std::size_t>(j)] = depth[static_cast<std::size_t>(i)] + 1;
        frontier.push(j);
      }
    }
  }
  return depth;
}

Vec2 separation_direction(const Vec2& from, const Vec2& to) {
  const Vec2 d = to - from;
  const double len = d.norm();
  return len > 0.0 ? Vec2(d / len) : Vec2(1.0, 0.0);
}

}  // namespace

BoxScene step_boxes(const BoxScene& scene, const Vec2& action, double dt) {
  BoxScene s = scene;
  const int n = s.size();
  Vec2 a = action;
  if (a.norm() > s.max_speed) a *= s.max_speed / a.norm();
  s.pusher_velocity = a;
  s.pusher += dt * a;
  const std::vector<Vec2> start = scene.centers;
  for (int i = 0; i < n; ++i) s.centers[static_cast<std::size_t>(i)] += dt * s.velocities[static_cast<std::size_t>(i)];

  for (int it = 0; it < s.relaxation_iterations; ++it) {
    const std::vector<int> depth = contact_depths(s, 1e-9);
    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    std::stable_sort(order.begin(), order.end(), [&](int x, int y) {
      return depth[static_cast<std::size_t>(x)] < depth[static_cast<std::size_t>(y)];
    });
    for (int i : order) {
      auto& c = s.centers[static_cast<std::size_t>(i)];
      const double overlap = s.radius + s.pusher_radius - (c - s.pusher).norm();
      if (overlap > 0.0) c += overlap * separation_direction(s.pusher, c);
    }
    for (std::size_t oi = 0; oi < order.size(); ++oi) {
      for (std::size_t oj = oi + 1; oj < order.size(); ++oj) {
        const int i = order[oi], j = order[oj];
        auto& ci = s.centers[static_cast<std::size_t>(i)];
        auto& cj = s.centers[static_cast<std::size_t>(j)];
        const double overlap = 2.0 * s.radius - (cj - ci).norm();
        if (overlap <= 0.0) continue;
        const Vec2 dir = separation_direction(ci, cj);
        if (depth[static_cast<std::size_t>(i)] < depth[static_cast<std::size_t>(j)]) {
          cj += overlap * dir;
        } else {
          ci -= 0.5 * overlap * dir;
          cj += 0.5 * overlap * dir;
        }
      }
    }
  }
  for (int i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    s.velocities[k] = s.damping * (s.centers[k] - start[k]) / dt;
  }
  return s;
}

double max_penetration(const BoxScene& s) {
  double worst = 0.0;
  for (int i = 0; i < s.size(); ++i) {
    const Vec2& ci = s.centers[static_cast<std::size_t>(i)];
    worst = std::max(worst, s.radius + s.pusher_radius - (ci - s.pusher).norm());
    for (int j = i + 1; j < s.size(); ++j) {
      worst = std::max(worst, 2.0 * s.radius - (ci - s.centers[static_cast<std::size_t>(j)]).norm());
    }
  }
  return worst;
}

std::vector<Vec2> observable_positions(const BoxScene& s) {
  std::vector<Vec2> out;
  for (int i = 0; i < s.size(); ++i) {
    if (s.visible[static_cast<std::size_t>(i)]) out.push_back(s.centers[static_cast<std::size_t>(i)]);
  }
  return out;
}

DynamicsGraph observe(const BoxScene& s) {
  std::vector<Vec2> q, v;
  for (int i = 0; i < s.size(); ++i) {
    if (!s.visible[static_cast<std::size_t>(i)]) continue;
    q.push_back(s.centers[static_cast<std::size_t>(i)]);
    v.push_back(s.velocities[static_cast<std::size_t>(i)]);
  }
  return build_box_graph(q, v);
}

std::array<double, 4> action_slot(const BoxScene& s, const Vec2& action) {
  Vec2 a = action;
  if (a.norm() > s.max_speed) a *= s.max_speed / a.norm();
  return {s.pusher.x(), s.pusher.y(), a.x(), a.y()};
}

BoxScene random_box_scene(int m, double visible_fraction, std::mt19937_64& rng) {
  if (m < 1) throw std::invalid_argument("box scene needs at least one box");
  BoxScene s;
  std::uniform_real_distribution<double> coord(-0.15, 0.15);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  // Sequential placement can jam; start the layout over when it does.
  for (int attempt = 0, since_restart = 0; static_cast<int>(s.centers.size()) < m; ++attempt, ++since_restart) {
    if (attempt > 200000) throw std::runtime_error("could not place non-overlapping boxes");
    if (since_restart > 2000) {
      s.centers.clear();
      since_restart = 0;
    }
    const Vec2 c(coord(rng), coord(rng));
    bool free = true;
    for (const auto& o : s.centers) free = free && (c - o).norm() >= 2.0 * s.radius;
    if (free) s.centers.push_back(c);
  }
  s.velocities.assign(static_cast<std::size_t>(m), Vec2::Zero());
  bool any = false;
  for (int i = 0; i < m; ++i) {
    const bool v = unit(rng) < visible_fraction;
    s.visible.push_back(v);
    any = any || v;
  }
  if (!any) s.visible[std::uniform_int_distribution<int>(0, m - 1)(rng)] = true;
  double min_x = s.centers[0].x();
  for (const auto& c : s.centers) min_x = std::min(min_x, c.x());
  s.pusher = Vec2(min_x - s.radius - s.pusher_radius - 0.05, coord(rng) * 0.5);
  return s;
}

}  // namespace propnet
