#pragma once

#include <map>
#include <string>
#include <vector>

#include "graviton/core/tape.hpp"
#include "graviton/core/tensor.hpp"

namespace graviton {

/// Named parameter set. Ordered by name so every traversal (optimizer steps,
/// checkpoint serialization, grad sampling) is deterministic. Frozen entries
/// (trainable == false) are never touched by the optimizer.
template <typename T>
class ParamStore {
 public:
  struct Entry {
    Tensor<T> value;
    bool trainable = true;
  };

  Tensor<T>& add(const std::string& name, Tensor<T> value, bool trainable = true) {
    GRAVITON_REQUIRE(entries_.find(name) == entries_.end(), "duplicate parameter: ", name);
    auto& e = entries_[name];
    e.value = std::move(value);
    e.trainable = trainable;
    return e.value;
  }

  bool contains(const std::string& name) const { return entries_.count(name) > 0; }

  Tensor<T>& value(const std::string& name) {
    auto it = entries_.find(name);
    GRAVITON_REQUIRE(it != entries_.end(), "missing parameter: ", name);
    return it->second.value;
  }
  const Tensor<T>& value(const std::string& name) const {
    auto it = entries_.find(name);
    GRAVITON_REQUIRE(it != entries_.end(), "missing parameter: ", name);
    return it->second.value;
  }

  bool trainable(const std::string& name) const {
    auto it = entries_.find(name);
    GRAVITON_REQUIRE(it != entries_.end(), "missing parameter: ", name);
    return it->second.trainable;
  }

  void set_trainable(const std::string& name, bool flag) {
    auto it = entries_.find(name);
    GRAVITON_REQUIRE(it != entries_.end(), "missing parameter: ", name);
    it->second.trainable = flag;
  }

  void set_trainable_prefix(const std::string& prefix, bool flag) {
    for (auto& [name, e] : entries_) {
      if (name.rfind(prefix, 0) == 0) e.trainable = flag;
    }
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [name, e] : entries_) out.push_back(name);
    return out;
  }

  size_t size() const { return entries_.size(); }

  const std::map<std::string, Entry>& entries() const { return entries_; }

  template <typename U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto& [name, e] : entries_) out.add(name, e.value.template cast<U>(), e.trainable);
    return out;
  }

 private:
  std::map<std::string, Entry> entries_;
};

/// Bridges a ParamStore onto a tape: each parameter becomes exactly one leaf
/// per recording, so gradients accumulate in a single place.
template <typename T>
class TapeBinding {
 public:
  TapeBinding(Tape<T>& tape, ParamStore<T>& store) : tape_(&tape), store_(&store) {}

  Var<T> operator()(const std::string& name) {
    auto it = bound_.find(name);
    if (it != bound_.end()) return Var<T>{tape_, it->second};
    Var<T> leaf = ops::leaf(*tape_, store_->value(name));
    bound_[name] = leaf.id;
    return leaf;
  }

  /// gradient of the last backward() for a bound parameter, or nullptr
  const Tensor<T>* grad_of(const std::string& name) const {
    auto it = bound_.find(name);
    if (it == bound_.end()) return nullptr;
    if (!tape_->has_grad(it->second)) return nullptr;
    return &const_cast<Tape<T>*>(tape_)->grad(it->second);
  }

  const std::map<std::string, int>& bound() const { return bound_; }
  ParamStore<T>& store() { return *store_; }
  Tape<T>& tape() { return *tape_; }

 private:
  Tape<T>* tape_;
  ParamStore<T>* store_;
  std::map<std::string, int> bound_;
};

}  // namespace graviton
