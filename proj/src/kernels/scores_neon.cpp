#include "lcsynth/kernels.hpp"

#include <arm_neon.h>

namespace lcsynth::kernels {
namespace {

// Canonical lanes in four float64x2 registers: a01, a23, a45, a67.
inline double fold(float64x2_t a01, float64x2_t a23, float64x2_t a45, float64x2_t a67) {
    const float64x2_t t01 = vaddq_f64(a01, a45);
    const float64x2_t t23 = vaddq_f64(a23, a67);
    const float64x2_t s = vaddq_f64(t01, t23);  // t0+t2, t1+t3
    return vgetq_lane_f64(s, 0) + vgetq_lane_f64(s, 1);
}

double dot_neon(const float* a, const float* b, std::size_t dim) {
    float64x2_t a01 = vdupq_n_f64(0.0), a23 = vdupq_n_f64(0.0);
    float64x2_t a45 = vdupq_n_f64(0.0), a67 = vdupq_n_f64(0.0);
    for (std::size_t d = 0; d < dim; d += kLanes) {
        const float32x4_t x0 = vld1q_f32(a + d);
        const float32x4_t x1 = vld1q_f32(a + d + 4);
        const float32x4_t y0 = vld1q_f32(b + d);
        const float32x4_t y1 = vld1q_f32(b + d + 4);
        a01 = vfmaq_f64(a01, vcvt_f64_f32(vget_low_f32(x0)), vcvt_f64_f32(vget_low_f32(y0)));
        a23 = vfmaq_f64(a23, vcvt_high_f64_f32(x0), vcvt_high_f64_f32(y0));
        a45 = vfmaq_f64(a45, vcvt_f64_f32(vget_low_f32(x1)), vcvt_f64_f32(vget_low_f32(y1)));
        a67 = vfmaq_f64(a67, vcvt_high_f64_f32(x1), vcvt_high_f64_f32(y1));
    }
    return fold(a01, a23, a45, a67);
}

void score_rows_neon(const float* rows, std::size_t n_rows, std::size_t dim,
                     const float* query, double* out) {
    for (std::size_t r = 0; r < n_rows; ++r) {
        out[r] = dot_neon(rows + r * dim, query, dim);
    }
}

void score_block_neon(const float* rows, std::size_t n_rows, std::size_t dim,
                      const float* queries, std::size_t n_queries, double* out) {
    for (std::size_t q = 0; q < n_queries; ++q) {
        score_rows_neon(rows, n_rows, dim, queries + q * dim, out + q * n_rows);
    }
}

}  // namespace

namespace detail {
const KernelTable* neon_table() {
    static const KernelTable table{Isa::neon, dot_neon, score_rows_neon, score_block_neon};
    return &table;
}
}  // namespace detail

}  // namespace lcsynth::kernels
