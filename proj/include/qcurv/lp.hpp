#pragma once

#include <Eigen/Dense>

namespace qcurv {

struct LpResult {
    double value = 0.0;
    Eigen::VectorXd x;
    int iterations = 0;
};

/// Dense primal simplex for  max c^T x  s.t.  A x <= b,  x >= 0,  b >= 0.
/// The all-slack basis is feasible, so a single phase suffices. Dantzig
/// pricing with a Bland fallback against cycling. Sized for the small
/// metric programs of this project (tens of variables).
LpResult simplex_max(const Eigen::VectorXd& c, const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                     int max_iter = 10000, double tol = 1e-11);

} // namespace qcurv
