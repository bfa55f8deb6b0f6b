#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "qsf/matrix.hpp"

namespace qsf {

// Named parameter registry with stable insertion order.
class ParamStore {
 public:
  int add(const std::string& name, Matrix m) {
    if (index_.count(name)) throw ShapeError("duplicate parameter: " + name);
    index_[name] = static_cast<int>(names_.size());
    names_.push_back(name);
    values_.push_back(std::move(m));
    return static_cast<int>(names_.size()) - 1;
  }
  int index_of(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? -1 : it->second;
  }
  const std::string& name(int i) const { return names_[i]; }
  Matrix& value(int i) { return values_[i]; }
  const Matrix& value(int i) const { return values_[i]; }
  Matrix& operator[](const std::string& name) {
    int i = index_of(name);
    if (i < 0) throw ShapeError("unknown parameter: " + name);
    return values_[i];
  }
  int count() const { return static_cast<int>(names_.size()); }
  size_t total_entries() const {
    size_t n = 0;
    for (const auto& v : values_) n += v.size();
    return n;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Matrix> values_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace qsf
