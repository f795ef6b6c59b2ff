#include "labelgraph/csr.hpp"

#include <algorithm>

#include "labelgraph/parallel.hpp"

namespace lg {

double CsrMatrix::at(std::size_t i, std::size_t j) const {
    auto c = row_cols(i);
    auto it = std::lower_bound(c.begin(), c.end(), std::uint32_t(j));
    if (it == c.end() || *it != j) return 0.0;
    return values[row_ptr[i] + std::size_t(it - c.begin())];
}

void CsrMatrix::multiply(std::span<const double> in, std::size_t width, std::span<double> out) const {
    parallel_for(n, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            double* dst = out.data() + i * width;
            std::fill(dst, dst + width, 0.0);
            for (std::size_t e = row_ptr[i]; e < row_ptr[i + 1]; ++e) {
                const double w = values[e];
                const double* src = in.data() + std::size_t(cols[e]) * width;
                for (std::size_t m = 0; m < width; ++m) dst[m] += w * src[m];
            }
        }
    });
}

}  // namespace lg
