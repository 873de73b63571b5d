#pragma once

// Similarity-scoring kernels for the exact retrieval index.
//
// Every variant computes the same canonical reduction so that scores are
// bit-identical whichever ISA is selected at runtime:
//
//   * inputs are float32, widened to double before multiplying (the product of
//     two floats is exact in double, so fused and unfused multiply-add agree);
//   * lane l (0..7) accumulates dimensions d with d % 8 == l, in increasing d;
//   * lanes are folded as ((l0+l4) + (l2+l6)) + ((l1+l5) + (l3+l7)).
//
// Dimensions must be a multiple of kLanes.

#include <cstddef>
#include <string_view>
#include <vector>

namespace lcsynth::kernels {

inline constexpr std::size_t kLanes = 8;

enum class Isa { scalar, avx2, avx512, neon };

std::string_view isa_name(Isa isa);

struct KernelTable {
    Isa isa;

    double (*dot)(const float* a, const float* b, std::size_t dim);

    /// out[r] = dot(rows + r*dim, query) for r in [0, n_rows).
    void (*score_rows)(const float* rows, std::size_t n_rows, std::size_t dim,
                       const float* query, double* out);

    /// out[q*n_rows + r] = dot(rows + r*dim, queries + q*dim).
    void (*score_block)(const float* rows, std::size_t n_rows, std::size_t dim,
                        const float* queries, std::size_t n_queries, double* out);
};

const KernelTable& scalar_table();

/// Variants compiled into this binary and supported by the running CPU,
/// scalar first.
std::vector<Isa> available();

bool supported(Isa isa);

const KernelTable& table(Isa isa);

/// Best supported variant. The LCSYNTH_KERNELS environment variable
/// (scalar|avx2|avx512|neon) pins a specific one when supported.
const KernelTable& active();

/// Overrides the active table for the rest of the process; tests use this to
/// run the same workload under each ISA.
void set_active(Isa isa);

namespace detail {
// Per-ISA tables; null when the variant is not compiled for this target.
const KernelTable* avx2_table();
const KernelTable* avx512_table();
const KernelTable* neon_table();
}  // namespace detail

}  // namespace lcsynth::kernels
