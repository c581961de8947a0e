#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "ppn/tensor.hpp"

namespace ppn {

/// Writes to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

nlohmann::json read_json_file(const std::filesystem::path& path);

/// Checkpoint document: {"<name>": {"shape": [...], "data": [...]}, ...}.
nlohmann::json tensors_to_json(const TensorMap& tensors);
TensorMap tensors_from_json(const nlohmann::json& doc);

void save_checkpoint(const TensorMap& tensors, const std::filesystem::path& path);
TensorMap load_checkpoint(const std::filesystem::path& path);

}  // namespace ppn
