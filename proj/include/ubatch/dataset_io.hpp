#pragma once

#include "ubatch/types.hpp"

#include <json.hpp>

#include <filesystem>

namespace ubatch {

// {"n", "k", "batches": [[counts]], "ground_truth": {"mu", "nu", "corrupted_indices"}}
nlohmann::json dataset_to_json(const BatchDataset& data);
BatchDataset dataset_from_json(const nlohmann::json& doc);

BatchDataset read_dataset(const std::filesystem::path& path);
void write_dataset(const BatchDataset& data, const std::filesystem::path& path);

nlohmann::json vector_to_json(const Vector& v);
Vector vector_from_json(const nlohmann::json& arr);

}  // namespace ubatch
