// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "masktrack/types.hpp"

namespace masktrack {

/// Dilation by a Euclidean disc: (x, y) is foreground iff some input
/// foreground pixel lies within distance `radius`. Radius 0 is the identity.
BinaryMask dilate(const BinaryMask& mask, int radius);

/// Exact Euclidean distance from each pixel to the nearest foreground pixel
/// (0 on foreground). All entries are +inf for an empty mask.
std::vector<double> distance_to_foreground(const BinaryMask& mask);

/// Largest integer h with h * h <= value (value >= 0).
int isqrt(long long value);

}  // namespace masktrack
