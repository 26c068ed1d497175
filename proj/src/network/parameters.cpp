#include "tbnet/network/parameters.hpp"

#include "tbnet/core/error.hpp"

namespace tbnet {

Var ParameterSet::add(const std::string& name, Tensor init, bool trainable) {
  if (index_.count(name)) throw Error("duplicate parameter name " + name);
  Var v(std::move(init), trainable);
  index_[name] = entries_.size();
  entries_.push_back({name, v, trainable});
  return v;
}

Var ParameterSet::add_parameter(const std::string& name, Tensor init) { return add(name, std::move(init), true); }

Var ParameterSet::add_buffer(const std::string& name, Tensor init) { return add(name, std::move(init), false); }

std::vector<Var> ParameterSet::trainable() const {
  std::vector<Var> out;
  for (const auto& e : entries_)
    if (e.trainable) out.push_back(e.var);
  return out;
}

const ParameterSet::Entry* ParameterSet::find(const std::string& name) const {
  const auto it = index_.find(name);
  return it == index_.end() ? nullptr : &entries_[it->second];
}

std::size_t ParameterSet::parameter_count() const {
  std::size_t total = 0;
  for (const auto& e : entries_)
    if (e.trainable) total += e.var.value().numel();
  return total;
}

void ParameterSet::zero_grad() {
  for (auto& e : entries_) e.var.zero_grad();
}

std::size_t ParameterSet::load(const std::map<std::string, Tensor>& tensors, const std::string& prefix) {
  std::size_t loaded = 0;
  for (auto& e : entries_) {
    if (e.name.compare(0, prefix.size(), prefix) != 0) continue;
    const auto it = tensors.find(e.name);
    if (it == tensors.end()) continue;
    if (it->second.shape() != e.var.shape())
      throw ShapeError("tensor " + e.name + ": stored shape " + it->second.shape().str() +
                       " does not match network shape " + e.var.shape().str());
    e.var.mutable_value() = it->second;
    ++loaded;
  }
  return loaded;
}

std::map<std::string, Tensor> ParameterSet::snapshot() const {
  std::map<std::string, Tensor> out;
  for (const auto& e : entries_) out.emplace(e.name, e.var.value());
  return out;
}

}  // namespace tbnet
