#include "pudm/params.h"

#include "pudm/errors.h"

namespace pudm {

ParamTensor& ParameterStore::create(const std::string& name, int rows, int cols) {
  if (index_.count(name)) throw ValidationError("parameter already registered: " + name);
  if (rows <= 0 || cols <= 0) throw ValidationError("parameter shape must be positive: " + name);
  index_[name] = tensors_.size();
  tensors_.push_back(ParamTensor{name, Mat(rows, cols), Mat(rows, cols)});
  return tensors_.back();
}

ParamTensor& ParameterStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ValidationError("unknown parameter: " + name);
  return tensors_[it->second];
}

const ParamTensor& ParameterStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ValidationError("unknown parameter: " + name);
  return tensors_[it->second];
}

bool ParameterStore::has(const std::string& name) const { return index_.count(name) != 0; }

void ParameterStore::zero_grads() {
  for (auto& t : tensors_) t.grad.fill(0.0);
}

size_t ParameterStore::total_parameters() const {
  size_t n = 0;
  for (const auto& t : tensors_) n += t.value.size();
  return n;
}

}  // namespace pudm
