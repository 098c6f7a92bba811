// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <string_view>
#include <vector>

#include "mhtc/mha.hpp"
#include "mhtc/tucker.hpp"

namespace mhtc {

inline constexpr std::string_view kArtifactFormat = "mhtc.shared-tucker.v1";

/// One compressed layer plus the solver provenance recorded alongside it.
struct LayerArtifact {
    std::size_t layer_index = 0;
    CompressedLayer layer;
    double relative_error = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
    SolverOptions options;
};

/// Self-describing compressed checkpoint: per layer, the three shared
/// factors and the stacked cores as F64 tensors, plus a JSON metadata
/// record of dims, ranks, and solver settings.
struct ArtifactFile {
    std::vector<LayerArtifact> layers;  // ascending layer index
};

void write_artifact(const ArtifactFile& a, const std::filesystem::path& path);
ArtifactFile read_artifact(const std::filesystem::path& path);

}  // namespace mhtc
