#pragma once

#include <string>
#include <vector>

#include "texr/types.hpp"

namespace texr {

// Feature-hashed word embedding: lowercased word tokens hashed into `dim`
// signed buckets, then L2-normalized. Empty text gives the zero vector.
std::vector<double> embed_text(const std::string& text, int dim);

// Min-max normalize by the declared range, then `fourier` sin/cos pairs at
// geometric frequencies. Output has 2 * fourier values.
std::vector<double> fourier_encode(double value, double lo, double hi, int fourier);

} // namespace texr
