// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>

namespace masktrack {

/// Calls `fn(i)` for i in [0, count) on up to `jobs` threads; rethrows the
/// exception of the lowest failing index.
void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& fn);

}  // namespace masktrack
