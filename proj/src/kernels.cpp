#include "sagc/kernels.hpp"

#include <cstdlib>

#include "sagc/errors.hpp"

namespace sagc::kernels {

const Ops* avx2_ops_impl(); // defined in kernels_avx2.cpp

const Ops* avx2_ops() {
#if defined(__x86_64__) || defined(_M_X64)
    if (!__builtin_cpu_supports("avx2")) return nullptr;
#endif
    return avx2_ops_impl();
}

namespace {

const Ops* pick_initial() {
    if (const char* env = std::getenv("SAGC_KERNELS")) {
        const std::string want = env;
        if (want == "scalar") return &scalar_ops();
        if (want == "avx2" && avx2_ops()) return avx2_ops();
        // Unknown or unavailable request falls through to auto-detection.
    }
    if (const Ops* v = avx2_ops()) return v;
    return &scalar_ops();
}

const Ops*& active_slot() {
    static const Ops* slot = pick_initial();
    return slot;
}

} // namespace

const Ops& active() { return *active_slot(); }

void force(const std::string& name) {
    if (name == "scalar") {
        active_slot() = &scalar_ops();
        return;
    }
    if (name == "avx2") {
        if (const Ops* v = avx2_ops()) {
            active_slot() = v;
            return;
        }
        throw ConfigError("kernels: avx2 not available on this CPU/build");
    }
    throw ConfigError("kernels: unknown implementation '" + name + "'");
}

} // namespace sagc::kernels
