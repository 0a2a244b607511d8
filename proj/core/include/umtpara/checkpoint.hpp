#pragma once

// Parameter checkpoints shared by UMT and surrogate models.
//
// Layout: the 8 bytes "UMTPCKPT", a little-endian u32 format version, a u64
// header length, the JSON header, then every parameter's values as raw
// little-endian floats of the declared scalar type, in manifest order.
// The header carries {"format_version", "scalar", "params": [{"name",
// "shape", "offset"}], "rng_state", "meta"}.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "umtpara/autodiff.hpp"

namespace umtpara::nn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
std::string serialize_checkpoint(const nlohmann::json& meta, const std::string& rng_state,
                                 std::span<Parameter<T>* const> params);

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const nlohmann::json& meta,
                     const std::string& rng_state, std::span<Parameter<T>* const> params);

// Header only; `meta` tells the caller how to rebuild the model.
nlohmann::json read_checkpoint_header(const std::filesystem::path& path);

// Fills parameters by name. Every parameter must be present with the same
// shape; the stored scalar type is converted to T.
template <typename T>
void load_checkpoint_params(const std::filesystem::path& path, std::span<Parameter<T>* const> params);

}  // namespace umtpara::nn

#include "umtpara/seq2seq.hpp"

namespace umtpara::nn {

nlohmann::json to_json(const TransformerConfig& config);
TransformerConfig transformer_config_from_json(const nlohmann::json& j);

}  // namespace umtpara::nn
