#include "propnet/models.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace propnet {

using nn::InputBlock;
using nn::Mlp;

std::string_view to_string(ModelKind k) {
  switch (k) {
    case ModelKind::IN: return "IN";
    case ModelKind::VanillaPropNet: return "VanillaPropNet";
    case ModelKind::PropNet: return "PropNet";
    case ModelKind::LatentPropNet: return "LatentPropNet";
  }
  return "?";
}

ModelKind model_kind_from_string(std::string_view s) {
  for (auto k : {ModelKind::IN, ModelKind::VanillaPropNet, ModelKind::PropNet, ModelKind::LatentPropNet}) {
    if (to_string(k) == s) return k;
  }
  throw std::invalid_argument("unknown model kind '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// ModelSpec

ModelSpec ModelSpec::defaults(ModelKind kind) {
  ModelSpec s;
  s.kind = kind;
  switch (kind) {
    case ModelKind::IN:
      s.L = 1;
      s.share_weights = false;
      break;
    case ModelKind::VanillaPropNet:
      s.share_weights = false;
      break;
    case ModelKind::PropNet:
    case ModelKind::LatentPropNet:
      s.share_weights = true;
      break;
  }
  return s;
}

ModelSpec ModelSpec::with_widths(int width, int effect) const {
  ModelSpec s = *this;
  for (auto* v : {&s.relation_hidden, &s.object_hidden, &s.relation_encoder_hidden, &s.object_encoder_hidden,
                  &s.propagator_hidden, &s.transition_hidden, &s.decoder_hidden}) {
    for (int& w : *v) w = width;
  }
  s.effect_dim = effect;
  s.latent_dim = effect;
  return s;
}

void ModelSpec::validate() const {
  if (L < 1) throw std::invalid_argument("model.L must be >= 1, got " + std::to_string(L));
  if (kind == ModelKind::IN && L != 1) throw std::invalid_argument("model.L must be 1 for IN");
  if (effect_dim <= 0) throw std::invalid_argument("model.effect_dim must be positive");
  if (latent_dim <= 0) throw std::invalid_argument("model.latent_dim must be positive");
  if (keypoints <= 0) throw std::invalid_argument("model.keypoints must be positive");
  if (reconstruction_weight < 0) throw std::invalid_argument("model.reconstruction_weight must be >= 0");
  auto check = [](const std::vector<int>& v, const char* field) {
    for (int w : v) {
      if (w <= 0) throw std::invalid_argument(std::string("model.") + field + " has a non-positive width");
    }
  };
  check(relation_hidden, "relation_hidden");
  check(object_hidden, "object_hidden");
  check(relation_encoder_hidden, "relation_encoder_hidden");
  check(object_encoder_hidden, "object_encoder_hidden");
  check(propagator_hidden, "propagator_hidden");
  check(transition_hidden, "transition_hidden");
  check(decoder_hidden, "decoder_hidden");
}

nlohmann::json to_json(const ModelSpec& s) {
  return {{"kind", to_string(s.kind)},
          {"L", s.L},
          {"share_weights", s.share_weights},
          {"effect_dim", s.effect_dim},
          {"relation_hidden", s.relation_hidden},
          {"object_hidden", s.object_hidden},
          {"relation_encoder_hidden", s.relation_encoder_hidden},
          {"object_encoder_hidden", s.object_encoder_hidden},
          {"propagator_hidden", s.propagator_hidden},
          {"latent_dim", s.latent_dim},
          {"keypoints", s.keypoints},
          {"transition_hidden", s.transition_hidden},
          {"residual_transition", s.residual_transition},
          {"decoder_hidden", s.decoder_hidden},
          {"reconstruction_weight", s.reconstruction_weight}};
}

ModelSpec model_spec_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("model: expected an object");
  ModelSpec s = ModelSpec::defaults(model_kind_from_string(j.value("kind", std::string("PropNet"))));
  for (const auto& [key, value] : j.items()) {
    if (key == "kind") continue;
    else if (key == "L") s.L = value.get<int>();
    else if (key == "share_weights") s.share_weights = value.get<bool>();
    else if (key == "effect_dim") s.effect_dim = value.get<int>();
    else if (key == "relation_hidden") s.relation_hidden = value.get<std::vector<int>>();
    else if (key == "object_hidden") s.object_hidden = value.get<std::vector<int>>();
    else if (key == "relation_encoder_hidden") s.relation_encoder_hidden = value.get<std::vector<int>>();
    else if (key == "object_encoder_hidden") s.object_encoder_hidden = value.get<std::vector<int>>();
    else if (key == "propagator_hidden") s.propagator_hidden = value.get<std::vector<int>>();
    else if (key == "latent_dim") s.latent_dim = value.get<int>();
    else if (key == "keypoints") s.keypoints = value.get<int>();
    else if (key == "transition_hidden") s.transition_hidden = value.get<std::vector<int>>();
    else if (key == "residual_transition") s.residual_transition = value.get<bool>();
    else if (key == "decoder_hidden") s.decoder_hidden = value.get<std::vector<int>>();
    else if (key == "reconstruction_weight") s.reconstruction_weight = value.get<double>();
    else throw std::invalid_argument("model." + key + ": unknown key");
  }
  s.validate();
  return s;
}

// ---------------------------------------------------------------------------
// NormStats

void NormStats::floor_std() {
  for (RowVector* v : {&object_std, &relation_std, &target_std, &action_std}) {
    for (Eigen::Index i = 0; i < v->size(); ++i) {
      if (!((*v)[i] >= 1e-8)) (*v)[i] = 1.0;
    }
  }
}

namespace {

std::vector<double> to_vec(const RowVector& v) { return {v.data(), v.data() + v.size()}; }

RowVector from_vec(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  RowVector r(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) r[static_cast<Eigen::Index>(i)] = v[i];
  return r;
}

}  // namespace

nlohmann::json to_json(const NormStats& n) {
  return {{"object_mean", to_vec(n.object_mean)},     {"object_std", to_vec(n.object_std)},
          {"relation_mean", to_vec(n.relation_mean)}, {"relation_std", to_vec(n.relation_std)},
          {"target_mean", to_vec(n.target_mean)},     {"target_std", to_vec(n.target_std)},
          {"action_mean", to_vec(n.action_mean)},     {"action_std", to_vec(n.action_std)}};
}

NormStats norm_stats_from_json(const nlohmann::json& j) {
  NormStats n;
  n.object_mean = from_vec(j.at("object_mean"));
  n.object_std = from_vec(j.at("object_std"));
  n.relation_mean = from_vec(j.at("relation_mean"));
  n.relation_std = from_vec(j.at("relation_std"));
  n.target_mean = from_vec(j.at("target_mean"));
  n.target_std = from_vec(j.at("target_std"));
  n.action_mean = from_vec(j.at("action_mean"));
  n.action_std = from_vec(j.at("action_std"));
  return n;
}

// ---------------------------------------------------------------------------
// Topology

Topology topology_of(const DynamicsGraph& g) {
  Topology t;
  t.num_objects = g.num_objects();
  for (const auto& r : g.relations) {
    t.receivers.push_back(r.receiver);
    t.senders.push_back(r.sender);
    t.types.push_back(r.type);
  }
  t.pinned = pinned_mask(g);
  return t;
}

Topology concat(const std::vector<const Topology*>& parts) {
  Topology out;
  for (const Topology* p : parts) {
    for (int k = 0; k < p->num_relations(); ++k) {
      out.receivers.push_back(p->receivers[static_cast<std::size_t>(k)] + out.num_objects);
      out.senders.push_back(p->senders[static_cast<std::size_t>(k)] + out.num_objects);
      out.types.push_back(p->types[static_cast<std::size_t>(k)]);
    }
    out.pinned.insert(out.pinned.end(), p->pinned.begin(), p->pinned.end());
    out.num_objects += p->num_objects;
  }
  return out;
}

GraphInputs record(Tape& tape, const FlatGraph& flat, const Topology& topology) {
  return {tape.constant(flat.objects), tape.constant(flat.relations), &topology};
}

Var masked_mse(Var prediction, Var target, const Eigen::VectorXd& mask) {
  const double count = mask.sum() * static_cast<double>(prediction.cols());
  if (count <= 0) throw std::invalid_argument("masked_mse: empty mask");
  Var sq = ad::square(ad::sub(prediction, target));
  Var masked = ad::mul_col(sq, prediction.tape()->constant(mask));
  return ad::scale(ad::sum(masked), 1.0 / count);
}

// ---------------------------------------------------------------------------
// Model

namespace {

std::vector<int> layer_widths(int in, const std::vector<int>& hidden, int out) {
  std::vector<int> w{in};
  w.insert(w.end(), hidden.begin(), hidden.end());
  w.push_back(out);
  return w;
}

}  // namespace

Model::Model(ModelSpec spec, Scenario scenario, int object_width, int relation_width, std::uint64_t seed)
    : spec_(std::move(spec)), scenario_(scenario), object_width_(object_width), relation_width_(relation_width) {
  spec_.validate();
  const int Do = object_width, Dr = relation_width, E = spec_.effect_dim;
  const int out = spec_.latent() ? spec_.latent_dim : 2;
  auto add = [&](const std::string& name, std::vector<int> widths) {
    mlps_.emplace_back(name, nn::make_mlp(params_, name, std::move(widths)));
  };
  switch (spec_.kind) {
    case ModelKind::IN:
      add("in.relation", layer_widths(2 * Do + Dr, spec_.relation_hidden, E));
      add("in.object", layer_widths(Do + E, spec_.object_hidden, out));
      break;
    case ModelKind::VanillaPropNet: {
      const int nrel = spec_.share_weights ? 1 : spec_.L;
      const int nobj = spec_.share_weights ? std::min(1, spec_.L - 1) : spec_.L - 1;
      for (int l = 0; l < nrel; ++l) {
        add("vanilla.relation" + std::to_string(l), layer_widths(2 * Do + Dr + 2 * E, spec_.relation_hidden, E));
      }
      for (int l = 0; l < nobj; ++l) {
        add("vanilla.object" + std::to_string(l), layer_widths(Do + E, spec_.object_hidden, E));
      }
      add("vanilla.output", layer_widths(Do + E, spec_.object_hidden, out));
      break;
    }
    case ModelKind::PropNet:
    case ModelKind::LatentPropNet: {
      add("propnet.object_encoder", layer_widths(Do, spec_.object_encoder_hidden, E));
      add("propnet.relation_encoder", layer_widths(2 * Do + Dr, spec_.relation_encoder_hidden, E));
      const int n = spec_.share_weights ? 1 : spec_.L;
      for (int l = 0; l < n; ++l) {
        add("propnet.relation" + std::to_string(l), layer_widths(3 * E, spec_.propagator_hidden, E));
        add("propnet.object" + std::to_string(l), layer_widths(3 * E, spec_.propagator_hidden, E));
      }
      add("propnet.output", layer_widths(E, spec_.object_hidden, out));
      if (spec_.latent()) {
        add("latent.transition", layer_widths(spec_.latent_dim + 4, spec_.transition_hidden, spec_.latent_dim));
        add("latent.decoder", layer_widths(spec_.latent_dim, spec_.decoder_hidden, 2 * spec_.keypoints));
        empty_scene_ = params_.add("latent.empty", 1, spec_.latent_dim);
      }
      break;
    }
  }

  std::mt19937_64 rng(seed);
  for (const auto& [name, m] : mlps_) nn::init_uniform(params_, m, rng);
  if (empty_scene_ >= 0) {
    std::uniform_real_distribution<double> dist(-0.1, 0.1);
    auto v = params_.view(empty_scene_);
    for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = dist(rng);
  }
}

const nn::Mlp& Model::mlp(const std::string& name) const {
  for (const auto& [n, m] : mlps_) {
    if (n == name) return m;
  }
  throw std::invalid_argument("model has no network named '" + name + "'");
}

std::vector<std::string> Model::mlp_names() const {
  std::vector<std::string> names;
  for (const auto& [n, m] : mlps_) names.push_back(n);
  return names;
}

void Model::require_norm() const {
  if (norm_.empty()) throw InvalidState("model '" + name() + "' has no normalisation statistics");
}

Var Model::normalize_objects(Var raw) const {
  require_norm();
  if (raw.cols() != object_width_) {
    throw std::invalid_argument("object features have width " + std::to_string(raw.cols()) + ", model expects " +
                                std::to_string(object_width_));
  }
  const RowVector scale = norm_.object_std.cwiseInverse();
  return ad::affine_cols(raw, scale, -norm_.object_mean.cwiseProduct(scale));
}

Var Model::normalize_relations(Var raw) const {
  require_norm();
  if (raw.cols() != relation_width_) throw std::invalid_argument("relation feature width mismatch");
  const RowVector scale = norm_.relation_std.cwiseInverse();
  return ad::affine_cols(raw, scale, -norm_.relation_mean.cwiseProduct(scale));
}

const nn::Mlp& Model::relation_propagator(int l) const {
  const std::string prefix = spec_.kind == ModelKind::VanillaPropNet ? "vanilla.relation" : "propnet.relation";
  return mlp(prefix + std::to_string(spec_.share_weights ? 0 : l));
}

const nn::Mlp& Model::object_propagator(int l) const {
  if (spec_.kind == ModelKind::VanillaPropNet) {
    if (l == spec_.L - 1) return mlp("vanilla.output");
    return mlp("vanilla.object" + std::to_string(spec_.share_weights ? 0 : l));
  }
  return mlp("propnet.object" + std::to_string(spec_.share_weights ? 0 : l));
}

Var Model::forward_normalized(Tape& tape, const GraphInputs& in) const {
  if (!in.topology) throw std::invalid_argument("graph inputs without topology");
  const Topology& topo = *in.topology;
  if (in.objects.rows() != topo.num_objects || in.relations.rows() != topo.num_relations()) {
    throw std::invalid_argument("feature rows do not match topology");
  }
  Var o = normalize_objects(in.objects);
  Var r = normalize_relations(in.relations);
  switch (spec_.kind) {
    case ModelKind::IN: return forward_in(tape, o, r, topo);
    case ModelKind::VanillaPropNet: return forward_vanilla(tape, o, r, topo);
    case ModelKind::PropNet:
    case ModelKind::LatentPropNet: return forward_propnet(tape, o, r, topo);
  }
  throw std::logic_error("unhandled model kind");
}

Var Model::forward_in(Tape& tape, Var o, Var r, const Topology& topo) const {
  const int Do = object_width_, Dr = relation_width_, E = spec_.effect_dim;
  Var ou = ad::gather_rows(o, topo.receivers);
  Var ov = ad::gather_rows(o, topo.senders);
  const InputBlock rel[] = {{ou, Do}, {ov, Do}, {r, Dr}};
  Var e = nn::mlp_forward(tape, mlp("in.relation"), rel);
  Var agg = ad::scatter_add_rows(e, topo.receivers, topo.num_objects);
  const InputBlock obj[] = {{o, Do}, {agg, E}};
  return nn::mlp_forward(tape, mlp("in.object"), obj);
}

Var Model::forward_vanilla(Tape& tape, Var o, Var r, const Topology& topo) const {
  const int Do = object_width_, Dr = relation_width_, E = spec_.effect_dim;
  Var ou = ad::gather_rows(o, topo.receivers);
  Var ov = ad::gather_rows(o, topo.senders);
  Var h;  // h^0 = 0
  for (int l = 0; l < spec_.L; ++l) {
    Var hu, hv;
    if (h.valid()) {
      hu = ad::gather_rows(h, topo.receivers);
      hv = ad::gather_rows(h, topo.senders);
    }
    const InputBlock rel[] = {{ou, Do}, {ov, Do}, {r, Dr}, {hu, E}, {hv, E}};
    Var e = nn::mlp_forward(tape, relation_propagator(l), rel);
    Var agg = ad::scatter_add_rows(e, topo.receivers, topo.num_objects);
    const InputBlock obj[] = {{o, Do}, {agg, E}};
    h = nn::mlp_forward(tape, object_propagator(l), obj);
  }
  return h;
}

Var Model::forward_propnet(Tape& tape, Var o, Var r, const Topology& topo) const {
  const int Do = object_width_, Dr = relation_width_, E = spec_.effect_dim;
  Var co = nn::mlp_forward(tape, mlp("propnet.object_encoder"), o);
  Var ou = ad::gather_rows(o, topo.receivers);
  Var ov = ad::gather_rows(o, topo.senders);
  const InputBlock enc[] = {{ou, Do}, {ov, Do}, {r, Dr}};
  Var cr = nn::mlp_forward(tape, mlp("propnet.relation_encoder"), enc);
  Var h;  // h^0 = 0
  for (int l = 0; l < spec_.L; ++l) {
    Var hu, hv;
    if (h.valid()) {
      hu = ad::gather_rows(h, topo.receivers);
      hv = ad::gather_rows(h, topo.senders);
    }
    const InputBlock rel[] = {{cr, E}, {hu, E}, {hv, E}};
    Var e = nn::mlp_forward(tape, relation_propagator(l), rel);
    Var agg = ad::scatter_add_rows(e, topo.receivers, topo.num_objects);
    const InputBlock obj[] = {{co, E}, {agg, E}, {h, E}};
    Var update = nn::mlp_forward(tape, object_propagator(l), obj);
    h = h.valid() ? ad::add(update, h) : update;
  }
  return nn::mlp_forward(tape, mlp("propnet.output"), h);
}

Var Model::next_velocity(Tape& tape, const GraphInputs& in) const {
  if (spec_.latent()) throw std::invalid_argument("the latent model does not predict per-object velocities");
  Var out = forward_normalized(tape, in);
  return ad::affine_cols(out, norm_.target_std, norm_.target_mean);
}

Var Model::encode(Tape& tape, const GraphInputs& in) const {
  if (!spec_.latent()) throw std::invalid_argument("encode() requires a latent model");
  if (in.topology && in.topology->num_objects == 0) return tape.param(empty_scene_);
  Var codes = forward_normalized(tape, in);
  return ad::scale(ad::column_sums(codes), 1.0 / static_cast<double>(codes.rows()));
}

Var Model::latent_step(Tape& tape, Var z, Var action) const {
  if (!spec_.latent()) throw std::invalid_argument("latent_step() requires a latent model");
  require_norm();
  if (action.cols() != 4) throw std::invalid_argument("latent action must be 1 x 4");
  const RowVector scale = norm_.action_std.cwiseInverse();
  Var a = ad::affine_cols(action, scale, -norm_.action_mean.cwiseProduct(scale));
  const InputBlock blocks[] = {{z, spec_.latent_dim}, {a, 4}};
  Var next = nn::mlp_forward(tape, mlp("latent.transition"), blocks);
  return spec_.residual_transition ? ad::add(z, next) : next;
}

Var Model::decode(Tape& tape, Var z) const {
  if (!spec_.latent()) throw std::invalid_argument("decode() requires a latent model");
  Var flat = nn::mlp_forward(tape, mlp("latent.decoder"), z);
  std::vector<Var> rows;
  for (int k = 0; k < spec_.keypoints; ++k) rows.push_back(ad::slice_cols(flat, 2 * k, 2));
  return ad::concat_rows(rows);
}

Model vanilla_from_in(const Model& in) {
  if (in.spec().kind != ModelKind::IN) throw std::invalid_argument("vanilla_from_in expects an IN model");
  ModelSpec spec = in.spec();
  spec.kind = ModelKind::VanillaPropNet;
  spec.L = 1;
  spec.share_weights = false;
  Model v(spec, in.scenario(), in.object_width(), in.relation_width(), 0);
  v.norm() = in.norm();

  auto copy = [&](const Mlp& src, const Mlp& dst) {
    for (std::size_t l = 0; l < src.weights.size(); ++l) {
      auto ws = in.store().view(src.weights[l]);
      auto wd = v.store().view(dst.weights[l]);
      wd.setZero();
      wd.topRows(ws.rows()) = ws;
      v.store().view(dst.biases[l]) = in.store().view(src.biases[l]);
    }
  };
  copy(in.mlp("in.relation"), v.mlp("vanilla.relation0"));
  copy(in.mlp("in.object"), v.mlp("vanilla.output"));
  return v;
}

}  // namespace propnet
