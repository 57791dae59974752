#pragma once

#include <cassert>
#include <cstddef>
#include <vector>

namespace factost {

// Dense row-major matrix of doubles. Vectors are 1xN or Nx1 matrices.
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> v;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), v(static_cast<size_t>(r) * static_cast<size_t>(c), 0.0) {}
    Mat(int r, int c, double fill)
        : rows(r), cols(c), v(static_cast<size_t>(r) * static_cast<size_t>(c), fill) {}

    double& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }

    double* row_ptr(int r) { return v.data() + static_cast<size_t>(r) * cols; }
    const double* row_ptr(int r) const { return v.data() + static_cast<size_t>(r) * cols; }

    size_t size() const { return v.size(); }
    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }

    void fill(double x) { std::fill(v.begin(), v.end(), x); }

    static Mat row_vec(const std::vector<double>& xs) {
        Mat m(1, static_cast<int>(xs.size()));
        m.v = xs;
        return m;
    }
    static Mat col_vec(const std::vector<double>& xs) {
        Mat m(static_cast<int>(xs.size()), 1);
        m.v = xs;
        return m;
    }
};

// C += A * B
void mm_acc(const Mat& a, const Mat& b, Mat& c);
// C += A * B^T
void mm_nt_acc(const Mat& a, const Mat& b, Mat& c);
// C += A^T * B
void mm_tn_acc(const Mat& a, const Mat& b, Mat& c);

bool all_finite(const Mat& m);

}  // namespace factost
