// SPDX-License-Identifier: Apache-2.0
//
// Procedural test videos: one colored disc or square moving over a textured
// background, optionally crossed by an occluding bar. Ground truth and
// forward flow are exact by construction.

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "masktrack/dataset.hpp"

namespace masktrack {

struct SyntheticOptions {
    int sequences = 6;
    int frames = 24;
    int width = 96;
    int height = 72;
    double min_speed = 6.0;  // pixels per frame
    double max_speed = 7.0;
    std::uint64_t seed = 7;

    void validate() const;
};

/// Sequence `index` of the set described by `options`. Odd indices carry an
/// occluder, every third sequence changes scale, shapes alternate.
VideoSequence synthetic_sequence(int index, const SyntheticOptions& options);

/// Writes frames, masks, flow and manifest.json under `root`; returns the manifest.
DatasetManifest write_synthetic_dataset(const std::filesystem::path& root, const SyntheticOptions& options);

/// Mean per-frame displacement of the ground-truth centroid.
double mean_object_motion(const VideoSequence& sequence);

}  // namespace masktrack
