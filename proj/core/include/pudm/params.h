#pragma once

#include <deque>
#include <string>
#include <unordered_map>

#include "pudm/mat.h"

namespace pudm {

struct ParamTensor {
  std::string name;
  Mat value;
  Mat grad;  // same shape as value, accumulated by Graph::backward
};

// Named parameter tensors in stable registration order. The theta/psi
// partition is by name prefix: "cnet." tensors form psi, everything else
// theta. Tensor references stay valid as the store grows (deque storage).
class ParameterStore {
 public:
  ParamTensor& create(const std::string& name, int rows, int cols);
  ParamTensor& get(const std::string& name);
  const ParamTensor& get(const std::string& name) const;
  bool has(const std::string& name) const;

  std::deque<ParamTensor>& tensors() { return tensors_; }
  const std::deque<ParamTensor>& tensors() const { return tensors_; }

  void zero_grads();
  size_t count() const { return tensors_.size(); }
  size_t total_parameters() const;

  static bool is_psi(const std::string& name) { return name.rfind("cnet.", 0) == 0; }

 private:
  std::deque<ParamTensor> tensors_;
  std::unordered_map<std::string, size_t> index_;
};

}  // namespace pudm
