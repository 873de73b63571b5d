#include "lcsynth/kernels.hpp"

#include <immintrin.h>

#include <algorithm>
#include <vector>

namespace lcsynth::kernels {
namespace {

// One zmm holds all eight canonical lanes.
inline double fold(__m512d acc) {
    const __m256d t = _mm256_add_pd(_mm512_castpd512_pd256(acc), _mm512_extractf64x4_pd(acc, 1));
    const __m128d s = _mm_add_pd(_mm256_castpd256_pd128(t), _mm256_extractf128_pd(t, 1));
    return _mm_cvtsd_f64(s) + _mm_cvtsd_f64(_mm_unpackhi_pd(s, s));
}

inline __m512d widen(const float* p) { return _mm512_cvtps_pd(_mm256_loadu_ps(p)); }

double dot_avx512(const float* a, const float* b, std::size_t dim) {
    __m512d acc = _mm512_setzero_pd();
    for (std::size_t d = 0; d < dim; d += kLanes) acc = _mm512_fmadd_pd(widen(a + d), widen(b + d), acc);
    return fold(acc);
}

void widen_into(const float* src, std::size_t n, double* dst) {
    for (std::size_t i = 0; i < n; i += kLanes) _mm512_storeu_pd(dst + i, widen(src + i));
}

// R rows by G widened queries, one accumulator per pair; every accumulator
// runs the canonical lane order. Query g writes out[g * stride + row].
template <std::size_t R, std::size_t G>
void tile(const float* rows, std::size_t n_rows, std::size_t dim, const double* wide, double* out,
          std::size_t stride) {
    std::size_t r = 0;
    for (; r + R <= n_rows; r += R) {
        __m512d acc[R * G];
#pragma GCC unroll 16
        for (std::size_t k = 0; k < R * G; ++k) acc[k] = _mm512_setzero_pd();
        for (std::size_t d = 0; d < dim; d += kLanes) {
            __m512d rv[R];
#pragma GCC unroll 8
            for (std::size_t i = 0; i < R; ++i) rv[i] = widen(rows + (r + i) * dim + d);
#pragma GCC unroll 8
            for (std::size_t g = 0; g < G; ++g) {
                const __m512d qv = _mm512_loadu_pd(wide + g * dim + d);
#pragma GCC unroll 8
                for (std::size_t i = 0; i < R; ++i) acc[i * G + g] = _mm512_fmadd_pd(rv[i], qv, acc[i * G + g]);
            }
        }
#pragma GCC unroll 16
        for (std::size_t k = 0; k < R * G; ++k) out[(k % G) * stride + r + k / G] = fold(acc[k]);
    }
    if constexpr (R > 1) {
        if (r < n_rows) tile<1, G>(rows + r * dim, n_rows - r, dim, wide, out + r, stride);
    }
}

// Scores up to four widened queries in one pass over the rows.
void score_widened(const float* rows, std::size_t n_rows, std::size_t dim, const double* wide, std::size_t g,
                   double* out) {
    switch (g) {
        case 1: tile<8, 1>(rows, n_rows, dim, wide, out, n_rows); break;
        case 2: tile<8, 2>(rows, n_rows, dim, wide, out, n_rows); break;
        case 3: tile<4, 3>(rows, n_rows, dim, wide, out, n_rows); break;
        default: tile<4, 4>(rows, n_rows, dim, wide, out, n_rows); break;
    }
}

void score_rows_avx512(const float* rows, std::size_t n_rows, std::size_t dim,
                       const float* query, double* out) {
    std::vector<double> wide(dim);
    widen_into(query, dim, wide.data());
    score_widened(rows, n_rows, dim, wide.data(), 1, out);
}

void score_block_avx512(const float* rows, std::size_t n_rows, std::size_t dim,
                        const float* queries, std::size_t n_queries, double* out) {
    constexpr std::size_t kGroup = 4;
    std::vector<double> wide(kGroup * dim);
    for (std::size_t q = 0; q < n_queries; q += kGroup) {
        const std::size_t g = std::min(kGroup, n_queries - q);
        widen_into(queries + q * dim, g * dim, wide.data());
        score_widened(rows, n_rows, dim, wide.data(), g, out + q * n_rows);
    }
}

}  // namespace

namespace detail {
const KernelTable* avx512_table() {
    static const KernelTable table{Isa::avx512, dot_avx512, score_rows_avx512, score_block_avx512};
    return &table;
}
}  // namespace detail

}  // namespace lcsynth::kernels
