#ifndef RRL_MATRIX_HPP
#define RRL_MATRIX_HPP

#include <cstddef>
#include <vector>

#include "rrl/errors.hpp"

namespace rrl {

// Row-major dense matrix of doubles. Rows are samples in a batch.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
    Matrix(std::size_t r, std::size_t c, double fill) : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    double* row(std::size_t r) { return data.data() + r * cols; }
    const double* row(std::size_t r) const { return data.data() + r * cols; }

    static Matrix from_row(const std::vector<double>& v) {
        Matrix m(1, v.size());
        m.data = v;
        return m;
    }

    std::vector<double> row_vec(std::size_t r) const {
        return std::vector<double>(row(r), row(r) + cols);
    }
};

} // namespace rrl

#endif
