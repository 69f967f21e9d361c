#include "latentdialog/autodiff/params.hpp"

#include <cmath>

namespace ld::ad {

Tensor& ParamSet::add(std::string name, Tensor value, bool trainable) {
  if (index_.contains(name)) throw std::invalid_argument("duplicate parameter name '" + name + "'");
  index_.emplace(name, entries_.size());
  entries_.push_back({std::move(name), std::move(value), trainable});
  return entries_.back().value;
}

std::size_t ParamSet::index_of(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw std::out_of_range("unknown parameter '" + std::string(name) + "'");
  return it->second;
}

Tensor& ParamSet::at(std::string_view name) { return entries_[index_of(name)].value; }
const Tensor& ParamSet::at(std::string_view name) const { return entries_[index_of(name)].value; }
bool ParamSet::contains(std::string_view name) const { return index_.contains(std::string(name)); }

std::size_t ParamSet::trainable_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.trainable ? 1 : 0;
  return n;
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

bool operator==(const ParamSet& a, const ParamSet& b) {
  if (a.entries_.size() != b.entries_.size()) return false;
  for (std::size_t i = 0; i < a.entries_.size(); ++i) {
    const auto& x = a.entries_[i];
    const auto& y = b.entries_[i];
    if (x.name != y.name || x.trainable != y.trainable || !(x.value == y.value)) return false;
  }
  return true;
}

Tensor xavier_uniform(std::size_t rows, std::size_t cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Tensor t(rows, cols);
  for (double& v : t.data()) v = dist(rng);
  return t;
}

Binding::Binding(Tape& tape, const ParamSet& params, bool trainable) : tape_(&tape), params_(&params) {
  vars_.reserve(params.size());
  for (std::size_t i = 0; i < params.entries().size(); ++i) {
    const auto& e = params.entries()[i];
    vars_.push_back(tape.parameter(e.value, trainable && e.trainable));
    index_.emplace(e.name, i);
  }
}

Var Binding::operator[](std::string_view name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter '" + std::string(name) + "'");
  return vars_[it->second];
}

const Tensor& Binding::tensor(std::string_view name) const { return (*this)[name].value(); }

std::vector<Tensor> Binding::gradients() const {
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < vars_.size(); ++i) {
    if (params_->entries()[i].trainable) out.push_back(tape_->grad(vars_[i]));
  }
  return out;
}

}  // namespace ld::ad
