#include "sagc/tensor.hpp"

#include <cmath>
#include <cstring>

#include "sagc/errors.hpp"
#include "sagc/kernels.hpp"

namespace sagc {

Tensor2::Tensor2(int r, int c) : rows(r), cols(c) {
    if (r < 1 || c < 1) {
        throw ShapeError("tensor: dimensions must be positive, got " + std::to_string(r) +
                         "x" + std::to_string(c));
    }
    data.assign(static_cast<std::size_t>(r) * c, 0.0);
}

Tensor2::Tensor2(int r, int c, std::vector<double> values) : rows(r), cols(c), data(std::move(values)) {
    if (r < 1 || c < 1) {
        throw ShapeError("tensor: dimensions must be positive, got " + std::to_string(r) +
                         "x" + std::to_string(c));
    }
    if (data.size() != static_cast<std::size_t>(r) * c) {
        throw ShapeError("tensor: " + std::to_string(data.size()) + " values for shape " +
                         std::to_string(r) + "x" + std::to_string(c));
    }
}

Tensor2 Tensor2::filled(int r, int c, double v) {
    Tensor2 t(r, c);
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
}

Tensor2 Tensor2::from_rows(std::initializer_list<std::initializer_list<double>> rows_init) {
    const int r = static_cast<int>(rows_init.size());
    const int c = r > 0 ? static_cast<int>(rows_init.begin()->size()) : 0;
    Tensor2 t(r, c);
    int i = 0;
    for (const auto& row : rows_init) {
        if (static_cast<int>(row.size()) != c) {
            throw ShapeError("tensor: ragged initializer rows");
        }
        int j = 0;
        for (double v : row) t.at(i, j++) = v;
        ++i;
    }
    return t;
}

Tensor2 Tensor2::identity(int n) {
    Tensor2 t(n, n);
    for (int i = 0; i < n; ++i) t.at(i, i) = 1.0;
    return t;
}

std::string Tensor2::shape_str() const {
    return std::to_string(rows) + "x" + std::to_string(cols);
}

bool Tensor2::all_finite() const {
    for (double v : data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

bool operator==(const Tensor2& a, const Tensor2& b) {
    return a.rows == b.rows && a.cols == b.cols && a.data == b.data;
}

Tensor2 matmul(const Tensor2& a, const Tensor2& b) {
    if (a.cols != b.rows) {
        throw ShapeError("matmul: inner dimensions differ, " + a.shape_str() + " vs " +
                         b.shape_str());
    }
    Tensor2 c(a.rows, b.cols);
    kernels::active().matmul(a.data.data(), b.data.data(), c.data.data(),
                             static_cast<std::size_t>(a.rows),
                             static_cast<std::size_t>(a.cols),
                             static_cast<std::size_t>(b.cols));
    return c;
}

Tensor2 softmax_rows(const Tensor2& x) {
    Tensor2 y(x.rows, x.cols);
    for (int i = 0; i < x.rows; ++i) {
        double mx = x.at(i, 0);
        for (int j = 1; j < x.cols; ++j) mx = std::max(mx, x.at(i, j));
        double sum = 0.0;
        for (int j = 0; j < x.cols; ++j) {
            const double e = std::exp(x.at(i, j) - mx);
            y.at(i, j) = e;
            sum += e;
        }
        for (int j = 0; j < x.cols; ++j) y.at(i, j) /= sum;
    }
    return y;
}

Tensor2 tanh_elem(const Tensor2& x) {
    Tensor2 y(x.rows, x.cols);
    for (std::size_t i = 0; i < x.size(); ++i) y.data[i] = std::tanh(x.data[i]);
    return y;
}

Tensor2 sigmoid_elem(const Tensor2& x) {
    Tensor2 y(x.rows, x.cols);
    for (std::size_t i = 0; i < x.size(); ++i) {
        // Split on sign so exp never overflows.
        const double v = x.data[i];
        if (v >= 0.0) {
            y.data[i] = 1.0 / (1.0 + std::exp(-v));
        } else {
            const double e = std::exp(v);
            y.data[i] = e / (1.0 + e);
        }
    }
    return y;
}

Tensor2 add(const Tensor2& a, const Tensor2& b) {
    if (!a.same_shape(b)) {
        throw ShapeError("add: shapes differ, " + a.shape_str() + " vs " + b.shape_str());
    }
    Tensor2 c(a.rows, a.cols);
    kernels::active().add(a.data.data(), b.data.data(), c.data.data(), a.size());
    return c;
}

Tensor2 hadamard(const Tensor2& a, const Tensor2& b) {
    if (!a.same_shape(b)) {
        throw ShapeError("hadamard: shapes differ, " + a.shape_str() + " vs " + b.shape_str());
    }
    Tensor2 c(a.rows, a.cols);
    kernels::active().mul(a.data.data(), b.data.data(), c.data.data(), a.size());
    return c;
}

Tensor2 transpose(const Tensor2& x) {
    Tensor2 y(x.cols, x.rows);
    for (int i = 0; i < x.rows; ++i) {
        for (int j = 0; j < x.cols; ++j) y.at(j, i) = x.at(i, j);
    }
    return y;
}

Tensor2 flatten_row_major(const Tensor2& x) {
    Tensor2 y = x;
    y.rows = 1;
    y.cols = static_cast<int>(x.size());
    return y;
}

Tensor2 reshape(const Tensor2& x, int r, int c) {
    if (static_cast<std::size_t>(r) * c != x.size()) {
        throw ShapeError("reshape: " + x.shape_str() + " has " + std::to_string(x.size()) +
                         " entries, cannot view as " + std::to_string(r) + "x" +
                         std::to_string(c));
    }
    Tensor2 y = x;
    y.rows = r;
    y.cols = c;
    return y;
}

Tensor2 concat_cols(const Tensor2& a, const Tensor2& b) {
    if (a.rows != b.rows) {
        throw ShapeError("concat_cols: row counts differ, " + a.shape_str() + " vs " +
                         b.shape_str());
    }
    Tensor2 c(a.rows, a.cols + b.cols);
    for (int i = 0; i < a.rows; ++i) {
        double* crow = c.data.data() + static_cast<std::size_t>(i) * c.cols;
        std::memcpy(crow, a.data.data() + static_cast<std::size_t>(i) * a.cols,
                    sizeof(double) * a.cols);
        std::memcpy(crow + a.cols, b.data.data() + static_cast<std::size_t>(i) * b.cols,
                    sizeof(double) * b.cols);
    }
    return c;
}

} // namespace sagc
