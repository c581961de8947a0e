#include "ppn/io.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ppn {

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out << contents;
    if (!out.flush()) throw std::runtime_error("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
}

nlohmann::json tensors_to_json(const TensorMap& tensors) {
  nlohmann::json doc = nlohmann::json::object();
  for (const auto& [name, t] : tensors) {
    doc[name] = {{"shape", t.shape()}, {"data", t.values()}};
  }
  return doc;
}

TensorMap tensors_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw std::invalid_argument("checkpoint must be a JSON object");
  TensorMap out;
  for (const auto& [name, entry] : doc.items()) {
    try {
      auto shape = entry.at("shape").get<Shape>();
      auto data = entry.at("data").get<std::vector<double>>();
      out.emplace(name, Tensor(std::move(shape), std::move(data)));
    } catch (const nlohmann::json::exception& e) {
      throw std::invalid_argument("checkpoint entry '" + name + "': " + e.what());
    }
  }
  return out;
}

void save_checkpoint(const TensorMap& tensors, const std::filesystem::path& path) {
  write_file_atomic(path, tensors_to_json(tensors).dump() + "\n");
}

TensorMap load_checkpoint(const std::filesystem::path& path) {
  return tensors_from_json(read_json_file(path));
}

}  // namespace ppn
