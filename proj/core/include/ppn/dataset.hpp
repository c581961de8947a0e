#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <vector>

#include "ppn/taxonomy.hpp"
#include "ppn/tensor.hpp"

namespace ppn {

struct Record {
  std::vector<double> features;
  ClassId label = 0;

  friend bool operator==(const Record&, const Record&) = default;
};

/// Labeled feature vectors indexed by class. Leaf-class records are
/// few-shot data; internal-class records are weakly-labeled data.
class Dataset {
 public:
  Dataset() = default;

  void add(Record record);

  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  /// Feature length shared by all records; 0 for an empty dataset.
  std::size_t input_dim() const { return input_dim_; }
  const std::vector<Record>& records() const { return records_; }
  const Record& record(std::size_t i) const { return records_.at(i); }

  /// Indices of the records labeled `id`, in insertion order.
  std::span<const std::size_t> indices_of(ClassId id) const;
  std::size_t count(ClassId id) const { return indices_of(id).size(); }

  /// Stacks the selected records' features into an (n x input_dim) matrix.
  Tensor stack(std::span<const std::size_t> indices) const;
  Tensor features_of(ClassId id) const { return stack(indices_of(id)); }

  /// Throws std::invalid_argument if a record references a class absent
  /// from `graph`.
  void check_against(const CategoryGraph& graph) const;

  friend bool operator==(const Dataset& a, const Dataset& b) { return a.records_ == b.records_; }

 private:
  std::vector<Record> records_;
  std::map<ClassId, std::vector<std::size_t>> by_class_;
  std::size_t input_dim_ = 0;
};

/// JSON-lines, one {"features": [...], "class": id} per line.
void save_dataset(const Dataset& data, const std::filesystem::path& path);
/// Errors name the offending line number.
Dataset load_dataset(const std::filesystem::path& path, const CategoryGraph& graph);

}  // namespace ppn
