#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "tckin/tensor.hpp"

namespace tckin {

struct ParamEntry {
  Tensor value;
  Tensor grad;  // same shape as value
};

/// Named trainable parameters with same-shaped gradient slots. Iteration is
/// in lexicographic name order, which fixes checkpoint layout and optimizer
/// update order.
class ParamStore {
 public:
  using Map = std::map<std::string, ParamEntry, std::less<>>;

  /// Registers a new parameter. Throws if the name is taken.
  Tensor& add(std::string name, Tensor init);

  bool contains(std::string_view name) const { return params_.find(name) != params_.end(); }
  Tensor& value(std::string_view name);
  const Tensor& value(std::string_view name) const;
  Tensor& grad(std::string_view name);
  const Tensor& grad(std::string_view name) const;

  void zero_grad();
  std::vector<std::string> names() const;
  std::size_t size() const { return params_.size(); }
  /// Total scalar count across all parameters.
  std::size_t num_scalars() const;
  std::size_t num_scalars_with_prefix(std::string_view prefix) const;

  Map::iterator begin() { return params_.begin(); }
  Map::iterator end() { return params_.end(); }
  Map::const_iterator begin() const { return params_.begin(); }
  Map::const_iterator end() const { return params_.end(); }

 private:
  const ParamEntry& entry(std::string_view name) const;
  Map params_;
};

}  // namespace tckin
