#pragma once

#include "propnet/models.hpp"

#include <array>
#include <span>
#include <vector>

namespace propnet {

/// One observed transition of a partially observable scene.
struct LatentSample {
  const DynamicsGraph* now = nullptr;
  const DynamicsGraph* next = nullptr;
  std::array<double, 4> action{};
};

struct LatentLoss {
  Var total;
  Var forward;         // mean ||tau(G_{t+1}) - phi(tau(G_t), a)||^2
  Var reconstruction;  // mean Chamfer(psi(tau(G_t)), observed positions)
};

/// tau for several graphs at once (B x latent_dim). Graphs are stacked into
/// one disjoint graph and each code is the mean over its own objects.
/// Objects are encoded in a canonical order, so relabelling a scene leaves
/// its code bitwise unchanged.
Var encode_batch(Tape& tape, const Model& model, std::span<const DynamicsGraph* const> graphs);
Var encode(Tape& tape, const Model& model, const DynamicsGraph& graph);

/// Observed positions of `graph` in the model's normalised units.
Var normalized_positions(Tape& tape, const Model& model, const DynamicsGraph& graph);

/// Forward loss plus reconstruction_weight times the reconstruction loss,
/// averaged over the samples. Scenes without observable objects contribute
/// no reconstruction term.
LatentLoss latent_loss(Tape& tape, const Model& model, std::span<const LatentSample> samples);

Var action_row(Tape& tape, const std::array<double, 4>& action);

}  // namespace propnet
