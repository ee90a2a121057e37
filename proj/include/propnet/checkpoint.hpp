#pragma once

#include "propnet/models.hpp"

#include <json.hpp>

#include <string>

namespace propnet {

/// Binary checkpoint: 8-byte magic, u64 little-endian header length, JSON
/// header (scenario, model spec, feature widths, normalisation statistics,
/// parameter layout, caller metadata), then every parameter as
/// little-endian f64 in store order. Loading reproduces the parameters
/// bit for bit.
void save_checkpoint(const Model& model, const std::string& path, const nlohmann::json& metadata = {});
Model load_checkpoint(const std::string& path, nlohmann::json* metadata = nullptr);

}  // namespace propnet
