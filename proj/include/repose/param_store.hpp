#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "repose/tensor.hpp"

namespace repose {

template <typename T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool trainable = true;
};

// Named parameter tensors with per-parameter gradient accumulators. Names
// are unique and creation order is stable, which fixes checkpoint layout and
// optimizer iteration order. Non-trainable entries hold state like batchnorm
// running statistics.
template <typename T>
class ParamStore {
 public:
  Param<T>& create(const std::string& name, std::vector<int> dims, bool trainable = true) {
    if (index_.count(name)) throw std::invalid_argument("param '" + name + "' registered twice");
    auto p = std::make_unique<Param<T>>();
    p->name = name;
    p->value = Tensor<T>(dims);
    p->grad = Tensor<T>(std::move(dims));
    p->trainable = trainable;
    index_[name] = params_.size();
    params_.push_back(std::move(p));
    return *params_.back();
  }

  Param<T>* find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : params_[it->second].get();
  }
  const Param<T>* find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : params_[it->second].get();
  }

  Param<T>& at(const std::string& name) {
    if (auto* p = find(name)) return *p;
    throw std::out_of_range("no such param: " + name);
  }
  const Param<T>& at(const std::string& name) const {
    if (auto* p = find(name)) return *p;
    throw std::out_of_range("no such param: " + name);
  }

  void zero_grad() {
    for (auto& p : params_) p->grad.fill(T(0));
  }

  std::int64_t trainable_count() const {
    std::int64_t total = 0;
    for (const auto& p : params_)
      if (p->trainable) total += p->value.size();
    return total;
  }

  std::size_t entry_count() const { return params_.size(); }

  std::vector<Param<T>*> entries() {
    std::vector<Param<T>*> out;
    out.reserve(params_.size());
    for (auto& p : params_) out.push_back(p.get());
    return out;
  }
  std::vector<const Param<T>*> entries() const {
    std::vector<const Param<T>*> out;
    out.reserve(params_.size());
    for (const auto& p : params_) out.push_back(p.get());
    return out;
  }

 private:
  std::vector<std::unique_ptr<Param<T>>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace repose
