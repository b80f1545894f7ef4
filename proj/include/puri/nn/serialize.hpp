#pragma once

#include <string>

#include "puri/nn/layers.hpp"

namespace puri::nn {

// Flat binary container for named parameter tensors. Byte-stable, so saved
// models digest identically across runs.
void save_parameters(const ParameterList& params, const std::string& path);

// Loads values into an already constructed parameter set; names and shapes
// must match exactly.
void load_parameters(const ParameterList& params, const std::string& path);

}  // namespace puri::nn
