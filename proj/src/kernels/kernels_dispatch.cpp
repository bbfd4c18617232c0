#include <atomic>
#include <cstdlib>
#include <string>

#include "kernels_internal.hpp"
#include "siedd/errors.hpp"
#include "siedd/kernels.hpp"

namespace siedd::kernels {
namespace {

bool cpu_has_avx2_fma() {
#ifdef SIEDD_HAVE_AVX2
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

const Ops* resolve_default() {
    const Ops* avx2 = avx2_ops();
    if (const char* env = std::getenv("SIEDD_KERNELS")) {
        const std::string v(env);
        if (v == "scalar") return &scalar_ops();
        if (v == "avx2") {
            if (!avx2)
                throw ConfigError("SIEDD_KERNELS=avx2 but this CPU/build has no AVX2 kernels");
            return avx2;
        }
        if (v != "auto" && !v.empty())
            throw ConfigError("SIEDD_KERNELS must be auto, scalar or avx2 (got '" + v + "')");
    }
    return avx2 ? avx2 : &scalar_ops();
}

std::atomic<const Ops*> g_forced{nullptr};

}  // namespace

const Ops* avx2_ops() {
#ifdef SIEDD_HAVE_AVX2
    if (cpu_has_avx2_fma())
        return &detail::avx2_table();
#endif
    return nullptr;
}

const Ops& active() {
    if (const Ops* forced = g_forced.load(std::memory_order_acquire))
        return *forced;
    static const Ops* resolved = resolve_default();
    return *resolved;
}

void force_variant(const Ops* ops) {
    g_forced.store(ops, std::memory_order_release);
}

}  // namespace siedd::kernels
