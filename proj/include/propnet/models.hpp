#pragma once

#include "propnet/autodiff.hpp"
#include "propnet/graph.hpp"
#include "propnet/nn.hpp"

#include <json.hpp>

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace propnet {

using ad::ParamStore;
using ad::Tape;
using ad::Var;

inline constexpr double kDefaultDt = 0.02;

enum class ModelKind { IN, VanillaPropNet, PropNet, LatentPropNet };

std::string_view to_string(ModelKind k);
ModelKind model_kind_from_string(std::string_view s);

struct ModelSpec {
  ModelKind kind = ModelKind::PropNet;
  int L = 3;
  bool share_weights = true;
  int effect_dim = 100;
  // IN and Vanilla PropNet: relation / object propagators.
  std::vector<int> relation_hidden{150, 150, 150, 150};
  std::vector<int> object_hidden{100};
  // PropNet: shared encoders and light-weight propagators.
  std::vector<int> relation_encoder_hidden{150, 150, 150};
  std::vector<int> object_encoder_hidden{100};
  std::vector<int> propagator_hidden{100};
  // Latent model.
  int latent_dim = 100;
  int keypoints = 8;
  std::vector<int> transition_hidden{100};
  bool residual_transition = false;  // phi(z, a) = z + MLP(z, a)
  std::vector<int> decoder_hidden{100};
  double reconstruction_weight = 1.0;

  /// Layer sizes as configured for `kind`; IN is pinned to L = 1 and
  /// weight sharing defaults to on for PropNet, off for Vanilla PropNet.
  static ModelSpec defaults(ModelKind kind);
  /// Same architecture with every hidden width replaced by `width` and the
  /// effect/latent size set to `effect`.
  ModelSpec with_widths(int width, int effect) const;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
  bool latent() const { return kind == ModelKind::LatentPropNet; }
};

nlohmann::json to_json(const ModelSpec& s);
/// Missing keys keep the defaults of the named kind; unknown keys throw.
ModelSpec model_spec_from_json(const nlohmann::json& j);

/// Per-column normalisation statistics.
struct NormStats {
  RowVector object_mean, object_std;
  RowVector relation_mean, relation_std;
  RowVector target_mean, target_std;
  RowVector action_mean, action_std;  // latent model only

  bool empty() const { return object_mean.size() == 0; }
  /// Replaces standard deviations below 1e-8 by 1 (constant columns are
  /// centred but not scaled).
  void floor_std();
};

nlohmann::json to_json(const NormStats& n);
NormStats norm_stats_from_json(const nlohmann::json& j);

/// Connectivity of one (possibly batched) graph, independent of features.
struct Topology {
  int num_objects = 0;
  std::vector<int> receivers;
  std::vector<int> senders;
  std::vector<RelationType> types;
  std::vector<int> pinned;  // 1 for objects whose state is imposed

  int num_relations() const { return static_cast<int>(receivers.size()); }
};

Topology topology_of(const DynamicsGraph& g);
/// Disjoint union; object indices of later parts are offset.
Topology concat(const std::vector<const Topology*>& parts);

/// Raw (un-normalised) feature matrices recorded on a tape.
struct GraphInputs {
  Var objects;    // |O| x D_o
  Var relations;  // |R| x D_r
  const Topology* topology = nullptr;
};

GraphInputs record(Tape& tape, const FlatGraph& flat, const Topology& topology);

/// Anything that maps a graph to next-step velocities on a tape: learned
/// networks and the differentiable ground-truth simulators alike.
class DynamicsModel {
 public:
  virtual ~DynamicsModel() = default;
  virtual Scenario scenario() const = 0;
  virtual std::string name() const = 0;
  /// |O| x 2 predicted velocities at t+1 in physical units.
  virtual Var next_velocity(Tape& tape, const GraphInputs& in) const = 0;
  /// Whether tapes used with this model must reference its parameters.
  virtual const ParamStore* params() const { return nullptr; }
};

/// The learned models: IN, Vanilla PropNet, PropNet and the latent
/// PropNet (encoder tau, transition phi, decoder psi).
class Model : public DynamicsModel {
 public:
  Model(ModelSpec spec, Scenario scenario, int object_width, int relation_width, std::uint64_t seed);

  Scenario scenario() const override { return scenario_; }
  std::string name() const override { return std::string(to_string(spec_.kind)); }
  Var next_velocity(Tape& tape, const GraphInputs& in) const override;
  const ParamStore* params() const override { return &params_; }

  /// Network output in normalised units: |O| x 2 velocities, or |O| x
  /// latent_dim object codes for the latent model.
  Var forward_normalized(Tape& tape, const GraphInputs& in) const;

  /// Normalises raw object/relation features with the stored statistics.
  Var normalize_objects(Var raw) const;
  Var normalize_relations(Var raw) const;

  // Latent model ------------------------------------------------------------
  /// tau: mean of the per-object codes; the learned empty-scene vector when
  /// the graph has no objects. Returns 1 x latent_dim.
  Var encode(Tape& tape, const GraphInputs& in) const;
  /// phi: next code from the code and the raw 4-d action (1 x 4).
  Var latent_step(Tape& tape, Var z, Var action) const;
  /// psi: K x 2 keypoints in normalised position units.
  Var decode(Tape& tape, Var z) const;

  const ModelSpec& spec() const { return spec_; }
  ParamStore& store() { return params_; }
  const ParamStore& store() const { return params_; }
  NormStats& norm() { return norm_; }
  const NormStats& norm() const { return norm_; }
  int object_width() const { return object_width_; }
  int relation_width() const { return relation_width_; }

  const nn::Mlp& mlp(const std::string& name) const;
  std::vector<std::string> mlp_names() const;

 private:
  void require_norm() const;
  const nn::Mlp& relation_propagator(int l) const;
  const nn::Mlp& object_propagator(int l) const;
  Var forward_in(Tape& tape, Var o, Var r, const Topology& topo) const;
  Var forward_vanilla(Tape& tape, Var o, Var r, const Topology& topo) const;
  Var forward_propnet(Tape& tape, Var o, Var r, const Topology& topo) const;

  ModelSpec spec_;
  Scenario scenario_;
  int object_width_;
  int relation_width_;
  ParamStore params_;
  NormStats norm_;
  std::vector<std::pair<std::string, nn::Mlp>> mlps_;
  int empty_scene_ = -1;
};

/// A Vanilla PropNet with L = 1 whose weights reproduce `in` exactly: the
/// rows of the first relation layer that read h^0 are zeroed and every
/// other weight is copied.
Model vanilla_from_in(const Model& in);

/// Mean squared error between normalised predictions and targets over the
/// rows flagged in `mask` (n x 1 of 0/1).
Var masked_mse(Var prediction, Var target, const Eigen::VectorXd& mask);

}  // namespace propnet
