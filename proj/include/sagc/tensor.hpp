#pragma once

#include <initializer_list>
#include <string>
#include <vector>

namespace sagc {

// Dense 2-D matrix of doubles, row-major. The one value type every part
// of the model works in: embeddings, weights, H, A, M, logits.
struct Tensor2 {
    int rows = 0;
    int cols = 0;
    std::vector<double> data; // rows * cols, row-major

    Tensor2() = default;
    Tensor2(int r, int c); // zero-filled; throws ShapeError unless r,c >= 1
    Tensor2(int r, int c, std::vector<double> values);

    static Tensor2 zeros(int r, int c) { return Tensor2(r, c); }
    static Tensor2 filled(int r, int c, double v);
    static Tensor2 from_rows(std::initializer_list<std::initializer_list<double>> rows);
    static Tensor2 identity(int n);

    double& at(int i, int j) { return data[static_cast<std::size_t>(i) * cols + j]; }
    double at(int i, int j) const { return data[static_cast<std::size_t>(i) * cols + j]; }

    std::size_t size() const { return data.size(); }
    bool same_shape(const Tensor2& o) const { return rows == o.rows && cols == o.cols; }
    std::string shape_str() const; // "3x4"
    bool all_finite() const;
};

bool operator==(const Tensor2& a, const Tensor2& b);

// entry (i,j) = sum_k a(i,k) * b(k,j); ShapeError names both shapes.
Tensor2 matmul(const Tensor2& a, const Tensor2& b);

// Row-wise softmax with max subtraction; each output row sums to 1.
Tensor2 softmax_rows(const Tensor2& x);

Tensor2 tanh_elem(const Tensor2& x);
Tensor2 sigmoid_elem(const Tensor2& x);
Tensor2 add(const Tensor2& a, const Tensor2& b);
Tensor2 hadamard(const Tensor2& a, const Tensor2& b);
Tensor2 transpose(const Tensor2& x);

// 1 x (rows*cols), preserving row-major order.
Tensor2 flatten_row_major(const Tensor2& x);

// Reinterpret the same row-major data as r x c.
Tensor2 reshape(const Tensor2& x, int r, int c);

// [a | b] side by side; row counts must match.
Tensor2 concat_cols(const Tensor2& a, const Tensor2& b);

} // namespace sagc
