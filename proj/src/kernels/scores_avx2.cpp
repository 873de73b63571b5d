#include "lcsynth/kernels.hpp"

#include <immintrin.h>

#include <vector>

namespace lcsynth::kernels {
namespace {

// Lanes 0..3 live in `lo`, lanes 4..7 in `hi`.
inline double fold(__m256d lo, __m256d hi) {
    const __m256d t = _mm256_add_pd(lo, hi);  // t0 t1 t2 t3
    const __m128d s = _mm_add_pd(_mm256_castpd256_pd128(t), _mm256_extractf128_pd(t, 1));
    return _mm_cvtsd_f64(s) + _mm_cvtsd_f64(_mm_unpackhi_pd(s, s));
}

double dot_avx2(const float* a, const float* b, std::size_t dim) {
    __m256d lo = _mm256_setzero_pd();
    __m256d hi = _mm256_setzero_pd();
    for (std::size_t d = 0; d < dim; d += kLanes) {
        const __m256 av = _mm256_loadu_ps(a + d);
        const __m256 bv = _mm256_loadu_ps(b + d);
        lo = _mm256_fmadd_pd(_mm256_cvtps_pd(_mm256_castps256_ps128(av)),
                             _mm256_cvtps_pd(_mm256_castps256_ps128(bv)), lo);
        hi = _mm256_fmadd_pd(_mm256_cvtps_pd(_mm256_extractf128_ps(av, 1)),
                             _mm256_cvtps_pd(_mm256_extractf128_ps(bv, 1)), hi);
    }
    return fold(lo, hi);
}

void widen_into(const float* src, std::size_t n, double* dst) {
    for (std::size_t i = 0; i < n; i += 4) _mm256_storeu_pd(dst + i, _mm256_cvtps_pd(_mm_loadu_ps(src + i)));
}

// G rows against one widened query, one accumulator pair per row.
template <std::size_t G>
void rows_group(const float* rows, std::size_t dim, const double* wide, double* out) {
    __m256d lo[G], hi[G];
    for (std::size_t g = 0; g < G; ++g) lo[g] = hi[g] = _mm256_setzero_pd();
    for (std::size_t d = 0; d < dim; d += kLanes) {
        const __m256d qlo = _mm256_loadu_pd(wide + d);
        const __m256d qhi = _mm256_loadu_pd(wide + d + 4);
        for (std::size_t g = 0; g < G; ++g) {
            const float* row = rows + g * dim + d;
            lo[g] = _mm256_fmadd_pd(_mm256_cvtps_pd(_mm_loadu_ps(row)), qlo, lo[g]);
            hi[g] = _mm256_fmadd_pd(_mm256_cvtps_pd(_mm_loadu_ps(row + 4)), qhi, hi[g]);
        }
    }
    for (std::size_t g = 0; g < G; ++g) out[g] = fold(lo[g], hi[g]);
}

void rows_widened(const float* rows, std::size_t n_rows, std::size_t dim, const double* wide, double* out) {
    std::size_t r = 0;
    for (; r + 4 <= n_rows; r += 4) rows_group<4>(rows + r * dim, dim, wide, out + r);
    for (; r < n_rows; ++r) rows_group<1>(rows + r * dim, dim, wide, out + r);
}

void score_rows_avx2(const float* rows, std::size_t n_rows, std::size_t dim,
                     const float* query, double* out) {
    std::vector<double> wide(dim);
    widen_into(query, dim, wide.data());
    rows_widened(rows, n_rows, dim, wide.data(), out);
}

// Four widened queries share each widened row load.
void queries_group4(const float* rows, std::size_t n_rows, std::size_t dim, const double* wide, double* out) {
    for (std::size_t r = 0; r < n_rows; ++r) {
        const float* row = rows + r * dim;
        __m256d lo[4], hi[4];
        for (std::size_t g = 0; g < 4; ++g) lo[g] = hi[g] = _mm256_setzero_pd();
        for (std::size_t d = 0; d < dim; d += kLanes) {
            const __m256d rlo = _mm256_cvtps_pd(_mm_loadu_ps(row + d));
            const __m256d rhi = _mm256_cvtps_pd(_mm_loadu_ps(row + d + 4));
            for (std::size_t g = 0; g < 4; ++g) {
                lo[g] = _mm256_fmadd_pd(rlo, _mm256_loadu_pd(wide + g * dim + d), lo[g]);
                hi[g] = _mm256_fmadd_pd(rhi, _mm256_loadu_pd(wide + g * dim + d + 4), hi[g]);
            }
        }
        for (std::size_t g = 0; g < 4; ++g) out[g * n_rows + r] = fold(lo[g], hi[g]);
    }
}

void score_block_avx2(const float* rows, std::size_t n_rows, std::size_t dim,
                      const float* queries, std::size_t n_queries, double* out) {
    std::vector<double> wide(4 * dim);
    std::size_t q = 0;
    while (q < n_queries) {
        const std::size_t g = n_queries - q >= 4 ? 4 : 1;
        widen_into(queries + q * dim, g * dim, wide.data());
        if (g == 4) {
            queries_group4(rows, n_rows, dim, wide.data(), out + q * n_rows);
        } else {
            rows_widened(rows, n_rows, dim, wide.data(), out + q * n_rows);
        }
        q += g;
    }
}

}  // namespace

namespace detail {
const KernelTable* avx2_table() {
    static const KernelTable table{Isa::avx2, dot_avx2, score_rows_avx2, score_block_avx2};
    return &table;
}
}  // namespace detail

}  // namespace lcsynth::kernels
