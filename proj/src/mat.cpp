#include "factost/mat.hpp"

#include <cmath>

namespace factost {

void mm_acc(const Mat& a, const Mat& b, Mat& c) {
    assert(a.cols == b.rows && c.rows == a.rows && c.cols == b.cols);
    const int m = a.rows, k = a.cols, n = b.cols;
    for (int i = 0; i < m; ++i) {
        const double* ai = a.row_ptr(i);
        double* ci = c.row_ptr(i);
        for (int kk = 0; kk < k; ++kk) {
            const double aik = ai[kk];
            if (aik == 0.0) continue;
            const double* bk = b.row_ptr(kk);
            for (int j = 0; j < n; ++j) ci[j] += aik * bk[j];
        }
    }
}

void mm_nt_acc(const Mat& a, const Mat& b, Mat& c) {
    assert(a.cols == b.cols && c.rows == a.rows && c.cols == b.rows);
    const int m = a.rows, k = a.cols, n = b.rows;
    for (int i = 0; i < m; ++i) {
        const double* ai = a.row_ptr(i);
        double* ci = c.row_ptr(i);
        for (int j = 0; j < n; ++j) {
            const double* bj = b.row_ptr(j);
            double s = 0.0;
            for (int kk = 0; kk < k; ++kk) s += ai[kk] * bj[kk];
            ci[j] += s;
        }
    }
}

void mm_tn_acc(const Mat& a, const Mat& b, Mat& c) {
    assert(a.rows == b.rows && c.rows == a.cols && c.cols == b.cols);
    const int k = a.rows, m = a.cols, n = b.cols;
    for (int kk = 0; kk < k; ++kk) {
        const double* ak = a.row_ptr(kk);
        const double* bk = b.row_ptr(kk);
        for (int i = 0; i < m; ++i) {
            const double aki = ak[i];
            if (aki == 0.0) continue;
            double* ci = c.row_ptr(i);
            for (int j = 0; j < n; ++j) ci[j] += aki * bk[j];
        }
    }
}

bool all_finite(const Mat& m) {
    for (double x : m.v) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

}  // namespace factost
