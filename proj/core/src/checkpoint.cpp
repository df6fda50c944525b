#include "rml/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>
#include <stdexcept>

namespace rml {
namespace {

using nlohmann::json;

constexpr std::size_t kMagicLen = sizeof(kCheckpointMagic) - 1;

void write_u64_le(std::ostream& out, std::uint64_t x) {
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(x >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes), 8);
}

std::uint64_t read_u64_le(std::istream& in) {
  unsigned char bytes[8];
  in.read(reinterpret_cast<char*>(bytes), 8);
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  std::uint64_t x = 0;
  for (int i = 0; i < 8; ++i) x |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return x;
}

void write_doubles_le(std::ostream& out, std::span<const double> values) {
  for (double v : values) write_u64_le(out, std::bit_cast<std::uint64_t>(v));
}

void read_doubles_le(std::istream& in, std::span<double> values) {
  for (double& v : values) v = std::bit_cast<double>(read_u64_le(in));
}

json config_to_json(const FusionConfig& c) {
  return json{{"view_count", c.view_count}, {"view_dims", c.view_dims},
              {"token_dim", c.token_dim},   {"fused_dim", c.fused_dim},
              {"ffn_hidden", c.ffn_hidden}, {"dropout_rate", c.dropout_rate},
              {"use_attention", c.use_attention}};
}

FusionConfig config_from_json(const json& j) {
  FusionConfig c;
  c.view_count = j.at("view_count").get<std::size_t>();
  c.view_dims = j.at("view_dims").get<std::vector<std::size_t>>();
  c.token_dim = j.at("token_dim").get<std::size_t>();
  c.fused_dim = j.at("fused_dim").get<std::size_t>();
  c.ffn_hidden = j.at("ffn_hidden").get<std::size_t>();
  c.dropout_rate = j.at("dropout_rate").get<double>();
  c.use_attention = j.at("use_attention").get<bool>();
  c.validate();
  return c;
}

}  // namespace

void save_checkpoint(const FusionModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot open " + path.string() +
                                     " for writing");
  const auto params = model.named_parameters();
  json meta;
  meta["config"] = config_to_json(model.config);
  json dir = json::array();
  for (const auto& [name, t] : params) {
    dir.push_back(json{{"name", name}, {"shape", t.shape()}});
  }
  meta["tensors"] = dir;
  const std::string meta_text = meta.dump();

  out.write(kCheckpointMagic, static_cast<std::streamsize>(kMagicLen));
  write_u64_le(out, meta_text.size());
  out.write(meta_text.data(), static_cast<std::streamsize>(meta_text.size()));
  for (const auto& [name, t] : params) write_doubles_le(out, t.values());
  if (!out) throw std::runtime_error("checkpoint: write to " + path.string() + " failed");
}

FusionModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path.string());

  char magic[kMagicLen];
  in.read(magic, static_cast<std::streamsize>(kMagicLen));
  if (!in || std::memcmp(magic, kCheckpointMagic, kMagicLen) != 0) {
    std::string found(magic, in ? kMagicLen : static_cast<std::size_t>(in.gcount()));
    if (!found.empty() && found.back() == '\n') found.pop_back();
    throw std::runtime_error("checkpoint: unrecognized header '" + found + "' in " +
                             path.string());
  }

  const std::uint64_t meta_len = read_u64_le(in);
  std::string meta_text(meta_len, '\0');
  in.read(meta_text.data(), static_cast<std::streamsize>(meta_len));
  if (!in) throw std::runtime_error("checkpoint: truncated metadata in " + path.string());

  json meta;
  try {
    meta = json::parse(meta_text);
  } catch (const json::exception& e) {
    throw std::runtime_error("checkpoint: bad metadata in " + path.string() + ": " +
                             e.what());
  }

  FusionConfig config = config_from_json(meta.at("config"));
  RngStream unused(0);
  FusionModel model = init_fusion(config, unused);

  const auto params = model.named_parameters();
  const json& dir = meta.at("tensors");
  if (dir.size() != params.size()) {
    throw std::runtime_error("checkpoint: " + std::to_string(dir.size()) +
                             " tensors in file, configuration implies " +
                             std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string name = dir[i].at("name").get<std::string>();
    const auto shape = dir[i].at("shape").get<Shape>();
    if (name != params[i].first) {
      throw std::runtime_error("checkpoint: tensor " + std::to_string(i) + " is '" +
                               name + "', expected '" + params[i].first + "'");
    }
    if (shape != params[i].second.shape()) {
      throw std::runtime_error("checkpoint: tensor '" + name + "' has shape " +
                               shape_str(shape) + ", configuration implies " +
                               shape_str(params[i].second.shape()));
    }
    Tensor t = params[i].second;
    read_doubles_le(in, t.values());
  }
  if (!in) throw std::runtime_error("checkpoint: truncated payload in " + path.string());
  return model;
}

}  // namespace rml
