#include "umtpara/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <map>

#include "umtpara/error.hpp"
#include "umtpara/io.hpp"

namespace umtpara::nn {

static_assert(std::endian::native == std::endian::little, "checkpoints assume a little-endian host");

namespace {

constexpr char kMagic[8] = {'U', 'M', 'T', 'P', 'C', 'K', 'P', 'T'};

template <typename T>
constexpr const char* scalar_name() {
  return sizeof(T) == 4 ? "f32" : "f64";
}

template <typename U>
void put(std::string& out, U v) {
  char buf[sizeof(U)];
  std::memcpy(buf, &v, sizeof(U));
  out.append(buf, sizeof(U));
}

template <typename U>
U get(const std::string& in, std::size_t& pos, const std::string& what) {
  if (pos + sizeof(U) > in.size()) throw InputError(what + ": truncated checkpoint");
  U v;
  std::memcpy(&v, in.data() + pos, sizeof(U));
  pos += sizeof(U);
  return v;
}

struct Parsed {
  nlohmann::json header;
  std::size_t payload = 0;
};

Parsed parse(const std::string& bytes, const std::string& what) {
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw InputError(what + ": not a checkpoint file");
  }
  std::size_t pos = sizeof(kMagic);
  const auto version = get<std::uint32_t>(bytes, pos, what);
  if (version != kCheckpointVersion) {
    throw InputError(what + ": unsupported checkpoint version " + std::to_string(version));
  }
  const auto len = get<std::uint64_t>(bytes, pos, what);
  if (pos + len > bytes.size()) throw InputError(what + ": truncated checkpoint header");
  Parsed p;
  try {
    p.header = nlohmann::json::parse(bytes.substr(pos, len));
  } catch (const nlohmann::json::exception& e) {
    throw InputError(what + ": bad checkpoint header: " + e.what());
  }
  p.payload = pos + len;
  return p;
}

}  // namespace

template <typename T>
std::string serialize_checkpoint(const nlohmann::json& meta, const std::string& rng_state,
                                 std::span<Parameter<T>* const> params) {
  nlohmann::json header;
  header["format_version"] = kCheckpointVersion;
  header["scalar"] = scalar_name<T>();
  header["rng_state"] = rng_state;
  header["meta"] = meta;
  auto manifest = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto* p : params) {
    manifest.push_back({{"name", p->name}, {"shape", {p->value.rows, p->value.cols}}, {"offset", offset}});
    offset += p->value.size();
  }
  header["params"] = manifest;
  const std::string text = header.dump();

  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, text.size());
  out += text;
  out.reserve(out.size() + offset * sizeof(T));
  for (const auto* p : params) {
    out.append(reinterpret_cast<const char*>(p->value.data.data()), p->value.size() * sizeof(T));
  }
  return out;
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const nlohmann::json& meta,
                     const std::string& rng_state, std::span<Parameter<T>* const> params) {
  write_file_atomic(path, serialize_checkpoint<T>(meta, rng_state, params));
}

nlohmann::json read_checkpoint_header(const std::filesystem::path& path) {
  return parse(read_file(path), path.string()).header;
}

template <typename T>
void load_checkpoint_params(const std::filesystem::path& path, std::span<Parameter<T>* const> params) {
  const std::string bytes = read_file(path);
  const std::string what = path.string();
  const auto parsed = parse(bytes, what);
  const std::string scalar = parsed.header.at("scalar");
  const std::size_t width = scalar == "f32" ? 4 : scalar == "f64" ? 8 : 0;
  if (width == 0) throw InputError(what + ": unknown scalar type " + scalar);

  std::map<std::string, nlohmann::json> entries;
  for (const auto& e : parsed.header.at("params")) entries[e.at("name").template get<std::string>()] = e;
  for (auto* p : params) {
    auto it = entries.find(p->name);
    if (it == entries.end()) throw InputError(what + ": missing parameter " + p->name);
    const auto shape = it->second.at("shape").template get<std::vector<std::size_t>>();
    if (shape.size() != 2 || shape[0] != p->value.rows || shape[1] != p->value.cols) {
      throw ShapeError(what + ": parameter " + p->name + " stored as " + it->second.at("shape").dump() +
                       ", model expects " + shape_string(p->value.rows, p->value.cols));
    }
    const std::size_t offset = it->second.at("offset");
    const std::size_t begin = parsed.payload + offset * width;
    if (begin + p->value.size() * width > bytes.size()) throw InputError(what + ": truncated payload");
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      if (width == 4) {
        float v;
        std::memcpy(&v, bytes.data() + begin + i * 4, 4);
        p->value.data[i] = static_cast<T>(v);
      } else {
        double v;
        std::memcpy(&v, bytes.data() + begin + i * 8, 8);
        p->value.data[i] = static_cast<T>(v);
      }
    }
  }
}

template std::string serialize_checkpoint<float>(const nlohmann::json&, const std::string&,
                                                 std::span<Parameter<float>* const>);
template std::string serialize_checkpoint<double>(const nlohmann::json&, const std::string&,
                                                  std::span<Parameter<double>* const>);
template void save_checkpoint<float>(const std::filesystem::path&, const nlohmann::json&,
                                     const std::string&, std::span<Parameter<float>* const>);
template void save_checkpoint<double>(const std::filesystem::path&, const nlohmann::json&,
                                      const std::string&, std::span<Parameter<double>* const>);
template void load_checkpoint_params<float>(const std::filesystem::path&, std::span<Parameter<float>* const>);
template void load_checkpoint_params<double>(const std::filesystem::path&, std::span<Parameter<double>* const>);

}  // namespace umtpara::nn

namespace umtpara::nn {

nlohmann::json to_json(const TransformerConfig& c) {
  return {{"vocab_size", c.vocab_size},         {"d_model", c.d_model},
          {"d_ff", c.d_ff},                     {"heads", c.heads},
          {"encoder_layers", c.encoder_layers}, {"decoder_layers", c.decoder_layers},
          {"languages", c.languages},           {"max_positions", c.max_positions}};
}

TransformerConfig transformer_config_from_json(const nlohmann::json& j) {
  TransformerConfig c;
  try {
    c.vocab_size = j.at("vocab_size");
    c.d_model = j.at("d_model");
    c.d_ff = j.at("d_ff");
    c.heads = j.at("heads");
    c.encoder_layers = j.at("encoder_layers");
    c.decoder_layers = j.at("decoder_layers");
    c.languages = j.at("languages");
    c.max_positions = j.at("max_positions");
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("bad model configuration in checkpoint: ") + e.what());
  }
  c.validate();
  return c;
}

}  // namespace umtpara::nn
