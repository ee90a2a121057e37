#include "propnet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace propnet {

namespace {

constexpr char kMagic[8] = {'P', 'R', 'O', 'P', 'N', 'E', 'T', '1'};

void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t bits_of(double d) { return std::bit_cast<std::uint64_t>(d); }
double double_of(std::uint64_t u) { return std::bit_cast<double>(u); }

}  // namespace

void save_checkpoint(const Model& model, const std::string& path, const nlohmann::json& metadata) {
  nlohmann::json params = nlohmann::json::array();
  for (const auto& e : model.store().entries()) params.push_back({{"name", e.name}, {"rows", e.rows}, {"cols", e.cols}});
  const nlohmann::json header = {{"scenario", to_string(model.scenario())},
                                 {"model", to_json(model.spec())},
                                 {"object_width", model.object_width()},
                                 {"relation_width", model.relation_width()},
                                 {"norm", to_json(model.norm())},
                                 {"params", params},
                                 {"metadata", metadata.is_null() ? nlohmann::json::object() : metadata}};
  const std::string text = header.dump();

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write checkpoint '" + path + "'");
  os.write(kMagic, sizeof kMagic);
  put_u64(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (double d : model.store().flat()) put_u64(os, bits_of(d));
  if (!os) throw std::runtime_error("failed writing checkpoint '" + path + "'");
}

Model load_checkpoint(const std::string& path, nlohmann::json* metadata) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint '" + path + "'");
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0) throw std::runtime_error("'" + path + "' is not a checkpoint");
  const std::uint64_t len = get_u64(is);
  std::string text(len, '\0');
  is.read(text.data(), static_cast<std::streamsize>(len));
  if (!is) throw std::runtime_error("truncated checkpoint header in '" + path + "'");
  const auto header = nlohmann::json::parse(text);

  Model model(model_spec_from_json(header.at("model")), scenario_from_string(header.at("scenario").get<std::string>()),
              header.at("object_width").get<int>(), header.at("relation_width").get<int>(), 0);
  model.norm() = norm_stats_from_json(header.at("norm"));
  const auto& layout = header.at("params");
  const auto& entries = model.store().entries();
  if (layout.size() != entries.size()) throw std::runtime_error("checkpoint parameter layout does not match its model");
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (layout[i].at("name") != entries[i].name || layout[i].at("rows") != entries[i].rows ||
        layout[i].at("cols") != entries[i].cols) {
      throw std::runtime_error("checkpoint parameter '" + layout[i].at("name").get<std::string>() +
                               "' does not match the model layout");
    }
  }
  for (double& d : model.store().flat()) {
    d = double_of(get_u64(is));
    if (!is) throw std::runtime_error("truncated parameter blob in '" + path + "'");
  }
  if (metadata) *metadata = header.value("metadata", nlohmann::json::object());
  return model;
}

}  // namespace propnet
