#include "lrc/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "lrc/error.hpp"

namespace lrc {

namespace fs = std::filesystem;
using nlohmann::json;

json to_json(const EncoderConfig& c) {
  return json{{"vocab_size", c.vocab_size}, {"max_len", c.max_len},       {"num_layers", c.num_layers},
              {"hidden_size", c.hidden_size}, {"num_heads", c.num_heads}, {"ffn_size", c.ffn_size},
              {"num_classes", c.num_classes}};
}

EncoderConfig encoder_config_from_json(const json& j) {
  EncoderConfig c;
  auto field = [&](const char* name, int& out) {
    if (!j.contains(name)) throw ConfigError(std::string("missing required field '") + name + "'");
    if (!j.at(name).is_number_integer()) throw ConfigError(std::string("field '") + name + "' must be an integer");
    out = j.at(name).get<int>();
  };
  field("vocab_size", c.vocab_size);
  field("max_len", c.max_len);
  field("num_layers", c.num_layers);
  field("hidden_size", c.hidden_size);
  field("num_heads", c.num_heads);
  field("ffn_size", c.ffn_size);
  field("num_classes", c.num_classes);
  c.validate();
  return c;
}

namespace {

void put_le(std::ostream& os, double v) {
  std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(bits >> (8 * i));
  os.write(reinterpret_cast<const char*>(buf), 8);
}

double get_le(const unsigned char* buf) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

fs::path manifest_path(const fs::path& p) {
  if (p.extension() == ".json") return p;
  fs::path m = p;
  m += ".json";
  return m;
}

}  // namespace

fs::path save_checkpoint(const EncoderModel& model, const fs::path& stem) {
  fs::path base = stem;
  if (base.extension() == ".json") base.replace_extension();
  fs::path manifest = base;
  manifest += ".json";
  fs::path blob = base;
  blob += ".bin";
  if (base.has_parent_path()) fs::create_directories(base.parent_path());

  json params = json::array();
  std::ofstream bin(blob, std::ios::binary | std::ios::trunc);
  if (!bin) throw InputError("cannot write " + blob.string());
  std::size_t offset = 0;
  for (const Parameter* p : model.parameters()) {
    params.push_back({{"name", p->name()}, {"shape", p->value().shape()}, {"offset", offset}});
    for (double v : p->value().data()) put_le(bin, v);
    offset += p->value().size() * sizeof(double);
  }
  bin.close();

  json j{{"format_version", kCheckpointFormatVersion},
         {"config", to_json(model.config())},
         {"dtype", "float64-le"},
         {"blob", blob.filename().string()},
         {"blob_bytes", offset},
         {"parameters", params}};
  std::ofstream out(manifest, std::ios::trunc);
  if (!out) throw InputError("cannot write " + manifest.string());
  out << j.dump(2) << '\n';
  return manifest;
}

EncoderModel load_checkpoint(const fs::path& path) {
  const fs::path manifest = manifest_path(path);
  std::ifstream in(manifest);
  if (!in) throw InputError("cannot open checkpoint manifest " + manifest.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw InputError("malformed checkpoint manifest " + manifest.string() + ": " + e.what());
  }
  if (j.value("format_version", -1) != kCheckpointFormatVersion) {
    throw InputError("unsupported checkpoint format_version in " + manifest.string());
  }
  EncoderModel model = EncoderModel::init(encoder_config_from_json(j.at("config")), 0);
  const fs::path blob = manifest.parent_path() / j.at("blob").get<std::string>();
  std::ifstream bin(blob, std::ios::binary);
  if (!bin) throw InputError("cannot open checkpoint blob " + blob.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());

  auto params = model.parameters();
  const json& desc = j.at("parameters");
  if (desc.size() != params.size()) throw InputError("checkpoint parameter count does not match its config");
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    const json& d = desc[i];
    if (d.at("name").get<std::string>() != p.name()) {
      throw InputError("checkpoint parameter " + std::to_string(i) + " is '" + d.at("name").get<std::string>() +
                       "', expected '" + p.name() + "'");
    }
    if (d.at("shape").get<Shape>() != p.value().shape()) throw DimensionError("checkpoint shape mismatch for " + p.name());
    const auto offset = d.at("offset").get<std::size_t>();
    if (offset + p.value().size() * sizeof(double) > bytes.size()) {
      throw InputError("checkpoint blob truncated at " + p.name());
    }
    for (std::size_t k = 0; k < p.value().size(); ++k) p.value()[k] = get_le(bytes.data() + offset + 8 * k);
  }
  return model;
}

}  // namespace lrc
