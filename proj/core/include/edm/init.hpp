#pragma once

#include <cstddef>

#include "edm/rng.hpp"
#include "edm/types.hpp"

namespace edm {

/// Random matrix with orthonormal rows (rows <= cols) or orthonormal columns
/// (rows > cols), scaled by gain. Gaussian entries are drawn from rng and
/// orthogonalized with Householder QR; the sign of R's diagonal is folded
/// back in so the result is uniformly distributed.
Mat orthogonal_matrix(std::size_t rows, std::size_t cols, CounterRng& rng, double gain = 1.0);

}  // namespace edm
