#include "ppn/dataset.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "ppn/io.hpp"

namespace ppn {

void Dataset::add(Record record) {
  if (records_.empty()) {
    input_dim_ = record.features.size();
  } else if (record.features.size() != input_dim_) {
    throw std::invalid_argument("record has " + std::to_string(record.features.size()) +
                                " features, dataset has " + std::to_string(input_dim_));
  }
  by_class_[record.label].push_back(records_.size());
  records_.push_back(std::move(record));
}

std::span<const std::size_t> Dataset::indices_of(ClassId id) const {
  auto it = by_class_.find(id);
  if (it == by_class_.end()) return {};
  return it->second;
}

Tensor Dataset::stack(std::span<const std::size_t> indices) const {
  Tensor out(Shape{indices.size(), input_dim_});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto& f = records_.at(indices[i]).features;
    std::copy(f.begin(), f.end(), out.row(i).begin());
  }
  return out;
}

void Dataset::check_against(const CategoryGraph& graph) const {
  for (const auto& [id, idx] : by_class_) {
    if (id >= graph.size()) {
      throw std::invalid_argument("record " + std::to_string(idx.front()) + " references class " +
                                  std::to_string(id) + " absent from the graph");
    }
  }
}

void save_dataset(const Dataset& data, const std::filesystem::path& path) {
  std::string out;
  for (const auto& r : data.records()) {
    nlohmann::json line = {{"features", r.features}, {"class", r.label}};
    out += line.dump();
    out += '\n';
  }
  write_file_atomic(path, out);
}

Dataset load_dataset(const std::filesystem::path& path, const CategoryGraph& graph) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  Dataset data;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto where = [&] { return path.string() + ":" + std::to_string(line_no) + ": "; };
    Record r;
    try {
      const auto doc = nlohmann::json::parse(line);
      r.features = doc.at("features").get<std::vector<double>>();
      r.label = doc.at("class").get<ClassId>();
    } catch (const nlohmann::json::exception& e) {
      throw std::invalid_argument(where() + "malformed record: " + e.what());
    }
    if (r.label >= graph.size()) {
      throw std::invalid_argument(where() + "class " + std::to_string(r.label) + " is not in the graph");
    }
    try {
      data.add(std::move(r));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(where() + e.what());
    }
  }
  return data;
}

}  // namespace ppn
