#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace lg {

// Square compressed-sparse-row matrix with double values. Column indices are
// strictly increasing within a row.
struct CsrMatrix {
    std::size_t n = 0;
    std::vector<std::size_t> row_ptr;  // n + 1
    std::vector<std::uint32_t> cols;
    std::vector<double> values;

    std::size_t nnz() const { return cols.size(); }

    std::span<const std::uint32_t> row_cols(std::size_t i) const {
        return {cols.data() + row_ptr[i], row_ptr[i + 1] - row_ptr[i]};
    }
    std::span<const double> row_values(std::size_t i) const {
        return {values.data() + row_ptr[i], row_ptr[i + 1] - row_ptr[i]};
    }

    // Stored value at (i, j), or 0 when (i, j) is not stored.
    double at(std::size_t i, std::size_t j) const;

    // out = this * in, where in and out are n x width row-major. Parallel over
    // rows; each row sums its entries in column order.
    void multiply(std::span<const double> in, std::size_t width, std::span<double> out) const;

    bool operator==(const CsrMatrix&) const = default;
};

}  // namespace lg
