#pragma once

#include <map>
#include <string>
#include <vector>

#include "fmridec/autodiff.hpp"

namespace fmridec {

// Binary artifact holding named tensors plus text metadata (config echo,
// stage, hashes) and the vocabulary the tensors were trained against.
// Deterministic bytes for identical contents.
struct Checkpoint {
  std::map<std::string, std::string> meta;
  std::vector<std::string> vocab;
  std::vector<std::pair<std::string, ad::Mat>> tensors;

  void add_parameters(const std::vector<ad::Parameter*>& params);
  // Copies stored tensors into matching parameters; every parameter must be
  // present with the exact shape.
  void load_into(const std::vector<ad::Parameter*>& params) const;
  bool has_tensor_prefix(const std::string& prefix) const;

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);
};

}  // namespace fmridec
