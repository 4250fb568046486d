#pragma once

#include <string>
#include <vector>

#include "qcurv/bubbles.hpp"

namespace qcurv {

/// One sample of the cone over A_{k,k_bar}: a parameter point z = (sigma, s),
/// the cone coordinate t, and the attached test field (nodes at t = 1 carry
/// exactly the boundary map).
struct PathNode {
    Barycenter sigma;
    Eigen::VectorXd s;
    double t = 0.0;
    TestField field;
};

struct PathSimplex {
    std::vector<PathNode> nodes;
    TestMapConfig map_cfg;
};

PathSimplex initial_path(const OperatorModel& op, const TestMapConfig& cfg,
                         const std::vector<Barycenter>& sigma_samples,
                         const std::vector<Eigen::VectorXd>& s_samples,
                         const std::vector<double>& t_grid);

struct MinmaxEstimate {
    double upper = 0.0;         // refined sup estimate of the min-max value
    double initial_sup = 0.0;   // sup over the unrefined cone path
    double boundary_max = 0.0;  // max of II over the t = 1 boundary
    double interior_max = 0.0;  // max over t < 1 nodes
    int budget_used = 0;
};

/// Sup of II_rho over the sampled cone, then downhill over admissible
/// interior deformations (the interior bubble scale relaxes toward 1 while
/// the boundary slice stays pinned). Non-increasing in the budget.
MinmaxEstimate minmax_value_estimate(const OperatorModel& op, const CurvatureData& q,
                                     const PathSimplex& path, double rho, int refine_budget);

struct MonotonicityReport {
    double fitted_c = 0.0;      // smallest C >= 0 making est/rho - C rho non-increasing
    double worst_violation = 0.0;  // beyond the noise band, after the fit
    bool ok = false;
};

MonotonicityReport monotonicity_monitor(const std::vector<double>& rho_grid,
                                        const std::vector<double>& estimates,
                                        double noise_tolerance = 1e-6);

struct SolveConfig {
    double flow_step = 0.5;
    int flow_iters = 300;
    double flow_switch_tol = 1e-4;  // residual sup-norm that hands over to Newton
    int newton_iters = 30;
    double newton_tol = 1e-9;      // residual sup-norm target
    int minres_iters = 400;
    double alpha = 0.5;            // Holder monitor exponent
    double divergence_norm = 50.0;  // declare ps-unbounded beyond this (e^{4u} overflow guard)
    unsigned seed = 777;
};

struct SolveReport {
    double rho = 1.0;
    ScalarField u;
    std::vector<double> residual_history;
    std::vector<double> energy_history;
    std::vector<double> vnorm_history;
    double final_residual = 0.0;    // sup of the band-limited residual
    double offband_residual = 0.0;  // aliasing remainder (discretization error)
    double holder_norm = 0.0;
    double volume_defect = 0.0;      // |int e^{4u} - 1| at the final iterate
    double max_volume_defect = 0.0;  // worst over all accepted iterates
    double max_energy_increase = 0.0;  // over flow steps
    std::string status;  // converged | ps-unbounded | max-iter
};

/// Volume-normalized gradient flow with a spectral preconditioner and Armijo
/// line search, followed by a Newton polish (matrix-free MINRES on the
/// zero-mean complement).
SolveReport flow_solve(const OperatorModel& op, const CurvatureData& q, const ScalarField& u0,
                       double rho, const SolveConfig& cfg);

/// Scale-invariant Holder-quotient proxy: sup|u - ubar| plus the maximum of
/// |u(p)-u(q)| / d(p,q)^alpha over sampled node pairs.
double holder_norm(const ModelManifold& M, const ScalarField& u, double alpha, unsigned seed);

/// Sequential warm-started solves over the rho grid. Grids touching the
/// forbidden values rho k_P in 8 pi^2 Z are rejected.
std::vector<SolveReport> continuation(const OperatorModel& op, const CurvatureData& q,
                                      const std::vector<double>& rho_grid, const SolveConfig& cfg,
                                      double forbidden_guard = 1.579);

/// Q := Qbar e^{4 w*} - (1/2) P w*, with Qbar set so that the total curvature
/// hits the target; w* is then an exact solution of the discrete equation.
CurvatureData manufacture(const OperatorModel& op, const ScalarField& w_star, double k_p_target);

struct PsBoundReport {
    bool applicable = false;  // requires k_P < 8 pi^2
    std::vector<double> v_test;      // the tested V-component relation per element
    std::vector<double> v_norm;      // ||u_hat|| per element
    std::vector<double> full_norm;   // ||u - ubar|| (spectral H^2 surrogate)
    double adams_margin = 0.0;       // 8 pi^2 - k_P
    bool v_bound_ok = false;
    bool norms_bounded = false;
};

PsBoundReport direct_ps_bound_check(const OperatorModel& op, const CurvatureData& q,
                                    const std::vector<ScalarField>& seq);

struct WeakLimitReport {
    std::vector<double> drift;   // max_v |int e^{4u_l} v - int e^{4u_0} v| per element
    double residual = 0.0;       // Euler residual of the candidate
    bool converged = false;
};

WeakLimitReport weak_limit_check(const OperatorModel& op, const CurvatureData& q,
                                 const std::vector<ScalarField>& seq, const ScalarField& u0,
                                 double rho, double tol = 1e-6);

} // namespace qcurv
