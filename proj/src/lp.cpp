#include "qcurv/lp.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace qcurv {

LpResult simplex_max(const Eigen::VectorXd& c, const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                     int max_iter, double tol) {
    const int n = static_cast<int>(c.size());
    const int m = static_cast<int>(b.size());
    if (A.rows() != m || A.cols() != n) throw std::invalid_argument("simplex_max: shape mismatch");
    if ((b.array() < -tol).any()) throw std::invalid_argument("simplex_max: b must be nonnegative");

    // tableau: rows 0..m-1 constraints, row m objective (reduced costs of -c)
    Eigen::MatrixXd T(m + 1, n + m + 1);
    T.setZero();
    T.block(0, 0, m, n) = A;
    T.block(0, n, m, m) = Eigen::MatrixXd::Identity(m, m);
    T.block(0, n + m, m, 1) = b;
    T.block(m, 0, 1, n) = -c.transpose();

    std::vector<int> basis(m);
    for (int i = 0; i < m; ++i) basis[i] = n + i;

    LpResult res;
    int stall = 0;
    for (res.iterations = 0; res.iterations < max_iter; ++res.iterations) {
        // pricing: Dantzig; Bland once degeneracy stalls
        int piv_col = -1;
        if (stall < 50) {
            double best = -tol;
            for (int j = 0; j < n + m; ++j)
                if (T(m, j) < best) {
                    best = T(m, j);
                    piv_col = j;
                }
        } else {
            for (int j = 0; j < n + m; ++j)
                if (T(m, j) < -tol) {
                    piv_col = j;
                    break;
                }
        }
        if (piv_col < 0) break;  // optimal

        int piv_row = -1;
        double best_ratio = 0.0;
        for (int i = 0; i < m; ++i) {
            if (T(i, piv_col) > tol) {
                double ratio = T(i, n + m) / T(i, piv_col);
                if (piv_row < 0 || ratio < best_ratio - 1e-15 ||
                    (std::abs(ratio - best_ratio) <= 1e-15 && basis[i] < basis[piv_row])) {
                    piv_row = i;
                    best_ratio = ratio;
                }
            }
        }
        if (piv_row < 0) throw std::runtime_error("simplex_max: unbounded program");
        if (best_ratio < 1e-13) ++stall; else stall = 0;

        double p = T(piv_row, piv_col);
        T.row(piv_row) /= p;
        for (int i = 0; i <= m; ++i) {
            if (i == piv_row) continue;
            double f = T(i, piv_col);
            if (f != 0.0) T.row(i) -= f * T.row(piv_row);
        }
        basis[piv_row] = piv_col;
    }
    if (res.iterations >= max_iter) throw std::runtime_error("simplex_max: iteration limit");

    res.x = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < m; ++i)
        if (basis[i] < n) res.x[basis[i]] = T(i, n + m);
    res.value = c.dot(res.x);
    return res;
}

} // namespace qcurv
