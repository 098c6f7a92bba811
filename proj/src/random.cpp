// SPDX-License-Identifier: Apache-2.0
#include "mhtc/random.hpp"

#include <cmath>
#include <numbers>

namespace mhtc {

double next_gaussian(std::mt19937_64& rng) {
    // Box-Muller with explicit uniforms in (0, 1); independent of the
    // standard library's normal_distribution implementation.
    const double u1 = (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
    const double u2 = (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

DenseTensor gaussian_tensor(std::vector<std::size_t> shape, std::uint64_t seed) {
    DenseTensor out = DenseTensor::zeros(std::move(shape));
    std::mt19937_64 rng(seed);
    for (double& x : out.data()) x = next_gaussian(rng);
    return out;
}

}  // namespace mhtc
