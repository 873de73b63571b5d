#include "lcsynth/kernels.hpp"

namespace lcsynth::kernels {
namespace {

double dot_scalar(const float* a, const float* b, std::size_t dim) {
    double acc[kLanes] = {};
    for (std::size_t d = 0; d < dim; d += kLanes) {
        for (std::size_t l = 0; l < kLanes; ++l) {
            acc[l] += static_cast<double>(a[d + l]) * static_cast<double>(b[d + l]);
        }
    }
    const double t0 = acc[0] + acc[4];
    const double t1 = acc[1] + acc[5];
    const double t2 = acc[2] + acc[6];
    const double t3 = acc[3] + acc[7];
    return (t0 + t2) + (t1 + t3);
}

void score_rows_scalar(const float* rows, std::size_t n_rows, std::size_t dim,
                       const float* query, double* out) {
    for (std::size_t r = 0; r < n_rows; ++r) {
        out[r] = dot_scalar(rows + r * dim, query, dim);
    }
}

void score_block_scalar(const float* rows, std::size_t n_rows, std::size_t dim,
                        const float* queries, std::size_t n_queries, double* out) {
    for (std::size_t q = 0; q < n_queries; ++q) {
        score_rows_scalar(rows, n_rows, dim, queries + q * dim, out + q * n_rows);
    }
}

}  // namespace

const KernelTable& scalar_table() {
    static const KernelTable table{Isa::scalar, dot_scalar, score_rows_scalar, score_block_scalar};
    return table;
}

}  // namespace lcsynth::kernels
