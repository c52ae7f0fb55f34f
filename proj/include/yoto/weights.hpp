#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "yoto/model.hpp"

YOTO_BEGIN_NAMESPACE

/// Named tensors in file order. Values are always stored as 32-bit floats.
///
/// File layout (all integers little-endian):
///   "YOTO" | u32 version = 1 | u32 entry count
///   per entry: u16 name length | UTF-8 name | u8 rank | u32 dims[rank] | u64 data offset
///   concatenated float32 data; each offset is absolute from the start of the file.
struct WeightStore {
  struct Entry {
    std::string name;
    std::vector<std::uint32_t> shape;
    std::vector<float> data;

    bool operator==(const Entry&) const = default;
  };
  std::vector<Entry> entries;

  std::size_t value_count() const;
  bool operator==(const WeightStore&) const = default;
};

inline constexpr std::uint32_t kWeightsVersion = 1;

std::vector<std::uint8_t> encode_weights(const WeightStore& store);
/// Parses the whole buffer before returning; any defect throws FormatError.
WeightStore decode_weights(const std::vector<std::uint8_t>& bytes);

void save_weights(const WeightStore& store, const std::filesystem::path& path);
WeightStore load_weights(const std::filesystem::path& path);

WeightStore to_weight_store(const Model& model);
/// Copies values into the model; names and shapes must match exactly.
void apply_weight_store(Model& model, const WeightStore& store);

void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path, const ModelConfig& config = {});

YOTO_END_NAMESPACE
