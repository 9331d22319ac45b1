#include "ubatch/dataset_io.hpp"

#include "ubatch/errors.hpp"

#include <fstream>

namespace ubatch {

using nlohmann::json;

json vector_to_json(const Vector& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

Vector vector_from_json(const json& arr) {
  if (!arr.is_array()) throw InvalidInput("expected a JSON array of numbers");
  Vector v(static_cast<Eigen::Index>(arr.size()));
  for (std::size_t i = 0; i < arr.size(); ++i) {
    if (!arr[i].is_number()) throw InvalidInput("expected a JSON array of numbers");
    v(static_cast<Eigen::Index>(i)) = arr[i].get<double>();
  }
  return v;
}

json dataset_to_json(const BatchDataset& data) {
  json doc;
  doc["n"] = data.domain_size();
  doc["k"] = data.k();
  json batches = json::array();
  for (const auto& b : data.batches()) batches.push_back(b.counts());
  doc["batches"] = std::move(batches);
  if (const auto& gt = data.ground_truth()) {
    doc["ground_truth"] = {{"mu", vector_to_json(gt->mu.probs())},
                           {"nu", vector_to_json(gt->nu.probs())},
                           {"corrupted_indices", gt->corrupted_indices}};
  }
  return doc;
}

BatchDataset dataset_from_json(const json& doc) {
  try {
    const auto n = doc.at("n").get<std::size_t>();
    const int k = doc.at("k").get<int>();
    const auto& rows = doc.at("batches");
    if (!rows.is_array() || rows.empty()) throw InvalidInput("dataset: 'batches' must be a nonempty array");
    std::vector<FrequencyVector> batches;
    batches.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto counts = rows[i].get<std::vector<long>>();
      if (counts.size() != n) {
        throw InvalidInput("dataset: batch " + std::to_string(i) + " has " +
                           std::to_string(counts.size()) + " counts, expected n = " +
                           std::to_string(n));
      }
      batches.push_back(frequency_from_counts(counts, k));
    }
    std::optional<GroundTruth> gt;
    if (doc.contains("ground_truth") && !doc["ground_truth"].is_null()) {
      const auto& g = doc["ground_truth"];
      gt = GroundTruth{Histogram(vector_from_json(g.at("mu"))),
                       Histogram(vector_from_json(g.at("nu"))),
                       g.value("corrupted_indices", std::vector<std::size_t>{})};
    }
    return BatchDataset(std::move(batches), k, std::move(gt));
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("dataset: malformed JSON: ") + e.what());
  }
}

BatchDataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset file " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw IoError("dataset " + path.string() + " is not valid JSON: " + e.what());
  }
  return dataset_from_json(doc);
}

void write_dataset(const BatchDataset& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write dataset file " + path.string());
  out << dataset_to_json(data).dump() << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace ubatch
