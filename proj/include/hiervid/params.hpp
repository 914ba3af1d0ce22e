#pragma once

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "hiervid/tensor.hpp"

namespace hiervid {

// Named parameter table. Registration order is fixed by model construction
// and defines the checkpoint layout. Names follow `module.layer.kind`.
template <class T>
class ParamStore {
 public:
  Tensor<T> create(const std::string& name, Shape shape) {
    HV_REQUIRE(!index_.count(name), "ParamStore: duplicate parameter name '",
               name, "'");
    Tensor<T> t = Tensor<T>::zeros(std::move(shape));
    t.set_requires_grad(true);
    index_[name] = items_.size();
    items_.emplace_back(name, t);
    return t;
  }

  bool has(const std::string& name) const { return index_.count(name) != 0; }

  Tensor<T> get(const std::string& name) const {
    auto it = index_.find(name);
    HV_REQUIRE(it != index_.end(), "ParamStore: unknown parameter '", name, "'");
    return items_[it->second].second;
  }

  size_t size() const { return items_.size(); }

  const std::vector<std::pair<std::string, Tensor<T>>>& items() const {
    return items_;
  }

  void zero_all_grads() {
    for (auto& [name, t] : items_) t.zero_grad();
  }

  int64_t total_elements() const {
    int64_t n = 0;
    for (const auto& [name, t] : items_) n += t.numel();
    return n;
  }

 private:
  std::vector<std::pair<std::string, Tensor<T>>> items_;
  std::unordered_map<std::string, size_t> index_;
};

}  // namespace hiervid
