#include "lcsynth/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

#include "lcsynth/errors.hpp"

namespace lcsynth::kernels {

namespace detail {
#if !defined(LCSYNTH_HAVE_X86_KERNELS)
const KernelTable* avx2_table() { return nullptr; }
const KernelTable* avx512_table() { return nullptr; }
#endif
#if !defined(LCSYNTH_HAVE_NEON_KERNELS)
const KernelTable* neon_table() { return nullptr; }
#endif
}  // namespace detail

namespace {

const KernelTable* compiled(Isa isa) {
    switch (isa) {
        case Isa::scalar: return &scalar_table();
        case Isa::avx2: return detail::avx2_table();
        case Isa::avx512: return detail::avx512_table();
        case Isa::neon: return detail::neon_table();
    }
    return nullptr;
}

bool cpu_has(Isa isa) {
    switch (isa) {
        case Isa::scalar: return true;
#if defined(__x86_64__) || defined(_M_X64)
        case Isa::avx2: return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
        case Isa::avx512: return __builtin_cpu_supports("avx512f");
#else
        case Isa::avx2:
        case Isa::avx512: return false;
#endif
#if defined(__aarch64__)
        case Isa::neon: return true;
#else
        case Isa::neon: return false;
#endif
    }
    return false;
}

const KernelTable* pick_default() {
    if (const char* env = std::getenv("LCSYNTH_KERNELS")) {
        const std::string want(env);
        for (Isa isa : {Isa::scalar, Isa::avx2, Isa::avx512, Isa::neon}) {
            if (want == isa_name(isa) && supported(isa)) return compiled(isa);
        }
    }
    for (Isa isa : {Isa::avx512, Isa::avx2, Isa::neon}) {
        if (supported(isa)) return compiled(isa);
    }
    return &scalar_table();
}

std::atomic<const KernelTable*>& slot() {
    static std::atomic<const KernelTable*> current{pick_default()};
    return current;
}

}  // namespace

std::string_view isa_name(Isa isa) {
    switch (isa) {
        case Isa::scalar: return "scalar";
        case Isa::avx2: return "avx2";
        case Isa::avx512: return "avx512";
        case Isa::neon: return "neon";
    }
    return "unknown";
}

bool supported(Isa isa) { return compiled(isa) != nullptr && cpu_has(isa); }

std::vector<Isa> available() {
    std::vector<Isa> out;
    for (Isa isa : {Isa::scalar, Isa::avx2, Isa::avx512, Isa::neon}) {
        if (supported(isa)) out.push_back(isa);
    }
    return out;
}

const KernelTable& table(Isa isa) {
    if (!supported(isa)) {
        throw ParameterError("kernel variant not available: " + std::string(isa_name(isa)));
    }
    return *compiled(isa);
}

const KernelTable& active() { return *slot().load(std::memory_order_acquire); }

void set_active(Isa isa) { slot().store(&table(isa), std::memory_order_release); }

}  // namespace lcsynth::kernels
