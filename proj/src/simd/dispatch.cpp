// SPDX-License-Identifier: Apache-2.0

#include "masktrack/simd/kernels.hpp"

#include <cstdlib>
#include <string_view>

namespace masktrack::simd {

#if defined(MASKTRACK_HAVE_AVX2)
namespace detail {
const KernelTable& avx2_table() noexcept;
}
#endif

const KernelTable* avx2_kernels() noexcept {
#if defined(MASKTRACK_HAVE_AVX2)
    static const bool supported = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
    return supported ? &detail::avx2_table() : nullptr;
#else
    return nullptr;
#endif
}

const KernelTable& active() noexcept {
    static const KernelTable& table = [] () -> const KernelTable& {
        const char* forced = std::getenv("MASKTRACK_SIMD");
        if (forced != nullptr && std::string_view(forced) == "scalar") return scalar_kernels();
        if (const KernelTable* avx2 = avx2_kernels()) return *avx2;
        return scalar_kernels();
    }();
    return table;
}

}  // namespace masktrack::simd
