#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "latentdialog/autodiff/tape.hpp"

namespace ld {

/// The single random engine used across the library. Every stochastic
/// function takes one by reference; all randomness derives from a seed.
using Rng = std::mt19937_64;

namespace ad {

/// Ordered collection of named tensors. Non-trainable entries hold state such
/// as batch-norm running statistics.
class ParamSet {
 public:
  struct Entry {
    std::string name;
    Tensor value;
    bool trainable = true;
  };

  Tensor& add(std::string name, Tensor value, bool trainable = true);
  Tensor& at(std::string_view name);
  const Tensor& at(std::string_view name) const;
  bool contains(std::string_view name) const;

  std::vector<Entry>& entries() noexcept { return entries_; }
  const std::vector<Entry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t trainable_count() const;
  /// Total number of scalar values over all entries.
  std::size_t scalar_count() const;

  friend bool operator==(const ParamSet& a, const ParamSet& b);

 private:
  std::size_t index_of(std::string_view name) const;

  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Xavier-uniform [rows×cols] matrix.
Tensor xavier_uniform(std::size_t rows, std::size_t cols, Rng& rng);

/// Places every entry of a ParamSet on a tape.
class Binding {
 public:
  /// Trainable entries become differentiable only when `trainable` is set;
  /// non-trainable entries are always constants.
  Binding(Tape& tape, const ParamSet& params, bool trainable = true);

  Var operator[](std::string_view name) const;
  const Tensor& tensor(std::string_view name) const;
  Tape& tape() const noexcept { return *tape_; }

  /// Gradients for the trainable entries, in ParamSet order. Call after
  /// Tape::backward.
  std::vector<Tensor> gradients() const;

 private:
  Tape* tape_;
  const ParamSet* params_;
  std::vector<Var> vars_;
  std::unordered_map<std::string_view, std::size_t> index_;
};

}  // namespace ad
}  // namespace ld
