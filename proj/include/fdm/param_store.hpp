// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "fdm/tensor.hpp"

namespace fdm {

/// Named trainable arrays for one network, kept in insertion order, each
/// with a gradient buffer of identical shape.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor value;
    Tensor grad;
  };

  void add(std::string name, Tensor init) {
    if (find(name)) throw ConfigError("duplicate parameter '" + name + "'");
    Tensor grad(init.shape(), 0.0);
    entries_.push_back({std::move(name), std::move(init), std::move(grad)});
  }

  bool has(const std::string& name) const { return find(name) != nullptr; }

  Tensor& value(const std::string& name) { return at(name).value; }
  const Tensor& value(const std::string& name) const { return at(name).value; }
  Tensor& grad(const std::string& name) { return at(name).grad; }
  const Tensor& grad(const std::string& name) const { return at(name).grad; }

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  std::size_t num_scalars() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
  }

  void zero_grad() {
    for (auto& e : entries_) e.grad.fill(0.0);
  }

  bool grads_all_zero() const {
    for (const auto& e : entries_)
      for (double g : e.grad.values())
        if (g != 0.0) return false;
    return true;
  }

  /// Copies values only; gradient buffers of `other` are left untouched.
  void copy_values_from(const ParamStore& other) {
    require_same_layout(other);
    for (std::size_t i = 0; i < entries_.size(); ++i) entries_[i].value = other.entries_[i].value;
  }

  void require_same_layout(const ParamStore& other) const {
    if (other.entries_.size() != entries_.size())
      throw ConfigError("parameter stores differ in entry count");
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      if (entries_[i].name != other.entries_[i].name ||
          entries_[i].value.shape() != other.entries_[i].value.shape())
        throw ConfigError("parameter layout mismatch at '" + entries_[i].name + "'");
    }
  }

  friend bool operator==(const ParamStore& a, const ParamStore& b) {
    if (a.entries_.size() != b.entries_.size()) return false;
    for (std::size_t i = 0; i < a.entries_.size(); ++i) {
      if (a.entries_[i].name != b.entries_[i].name || !(a.entries_[i].value == b.entries_[i].value))
        return false;
    }
    return true;
  }

 private:
  const Entry* find(const std::string& name) const {
    for (const auto& e : entries_)
      if (e.name == name) return &e;
    return nullptr;
  }
  Entry& at(const std::string& name) { return const_cast<Entry&>(std::as_const(*this).at(name)); }
  const Entry& at(const std::string& name) const {
    if (const Entry* e = find(name)) return *e;
    throw ConfigError("unknown parameter '" + name + "'");
  }

  std::vector<Entry> entries_;
};

}  // namespace fdm
