#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "tbnet/network/autograd.hpp"

namespace tbnet {

/// Ordered registry of every named tensor in a network. Names follow
/// `stream/block/layer/tensor`. Trainable entries are optimizer parameters;
/// the rest are buffers such as batch-norm running statistics.
class ParameterSet {
 public:
  struct Entry {
    std::string name;
    Var var;
    bool trainable;
  };

  Var add_parameter(const std::string& name, Tensor init);
  Var add_buffer(const std::string& name, Tensor init);

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Var> trainable() const;
  /// nullptr when absent.
  const Entry* find(const std::string& name) const;
  bool contains(const std::string& name) const { return find(name) != nullptr; }

  /// Total scalar count of trainable tensors.
  std::size_t parameter_count() const;
  void zero_grad();

  /// Copies every tensor whose name is present in `tensors` (shapes must
  /// match; ShapeError otherwise). Returns the number of tensors copied.
  std::size_t load(const std::map<std::string, Tensor>& tensors, const std::string& prefix = {});
  std::map<std::string, Tensor> snapshot() const;

 private:
  Var add(const std::string& name, Tensor init, bool trainable);

  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace tbnet
