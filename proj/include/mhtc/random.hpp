// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "mhtc/tensor.hpp"

namespace mhtc {

/// Standard normal draw from a fixed Box-Muller transform, so sequences
/// depend only on the engine state and not on the standard library's
/// distribution implementation.
double next_gaussian(std::mt19937_64& rng);

/// Tensor of i.i.d. standard normal entries, fully determined by `seed`.
DenseTensor gaussian_tensor(std::vector<std::size_t> shape, std::uint64_t seed);

}  // namespace mhtc
