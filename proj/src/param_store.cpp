#include "tckin/param_store.hpp"

#include "tckin/error.hpp"

namespace tckin {

Tensor& ParamStore::add(std::string name, Tensor init) {
  if (contains(name)) throw Error("duplicate parameter name '" + name + "'");
  Tensor grad = Tensor::zeros_like(init);
  auto [it, ok] = params_.emplace(std::move(name), ParamEntry{std::move(init), std::move(grad)});
  return it->second.value;
}

const ParamEntry& ParamStore::entry(std::string_view name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw Error("unknown parameter '" + std::string(name) + "'");
  return it->second;
}

Tensor& ParamStore::value(std::string_view name) { return const_cast<ParamEntry&>(entry(name)).value; }
const Tensor& ParamStore::value(std::string_view name) const { return entry(name).value; }
Tensor& ParamStore::grad(std::string_view name) { return const_cast<ParamEntry&>(entry(name)).grad; }
const Tensor& ParamStore::grad(std::string_view name) const { return entry(name).grad; }

void ParamStore::zero_grad() {
  for (auto& [_, p] : params_) p.grad.fill(0.0);
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& [name, _] : params_) out.push_back(name);
  return out;
}

std::size_t ParamStore::num_scalars() const {
  std::size_t n = 0;
  for (const auto& [_, p] : params_) n += p.value.size();
  return n;
}

std::size_t ParamStore::num_scalars_with_prefix(std::string_view prefix) const {
  std::size_t n = 0;
  for (const auto& [name, p] : params_) {
    if (std::string_view(name).starts_with(prefix)) n += p.value.size();
  }
  return n;
}

}  // namespace tckin
