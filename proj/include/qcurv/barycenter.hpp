#pragma once

#include <optional>
#include <random>
#include <string>
#include <vector>

#include "qcurv/functional.hpp"
#include "qcurv/paneitz.hpp"

namespace qcurv {

/// Finite weighted atomic measure sum t_i delta_{x_i}, the element type of
/// the order-k barycenter space. Canonical form: no zero weights, coincident
/// atoms merged, weights summing to exactly 1.
struct Barycenter {
    std::vector<PointOnM> atoms;
    std::vector<double> weights;
    int order = 0;  // ambient order bound k (>= atom count)

    ManifoldPtr manifold() const { return atoms.empty() ? nullptr : atoms[0].M; }
    int size() const { return static_cast<int>(atoms.size()); }
};

Barycenter make_barycenter(std::vector<PointOnM> atoms, std::vector<double> weights, int order = 0);
Barycenter canonical_form(const Barycenter& b, double merge_tol = 1e-9);
/// Rescale weights so they sum to exactly 1 (the largest weight absorbs the
/// final rounding correction).
void renormalize_exact(std::vector<double>& w);

struct MetricConfig {
    bool sum_convention = false;  // max(sup,Lip) <= 1 by default; sup+Lip <= 1 optional
    double merge_tol = 1e-9;
    int lp_max_iter = 20000;
};

/// Exact bounded-Lipschitz dual distance between two atomic measures,
/// computed by a linear program on the union support.
double bary_distance(const Barycenter& a, const Barycenter& b, const MetricConfig& cfg = {});

/// Feasible-point lower bound: maximum of the pairing over `samples` random
/// Lipschitz interpolants on the union support. Always <= bary_distance.
double dictionary_lower_bound(const Barycenter& a, const Barycenter& b, int samples,
                              std::mt19937_64& rng);

/// Distance from sigma to the best collapse in M_j (exhaustive over merge
/// partitions for <= 5 atoms, greedy otherwise, plus local weight descent).
double stratum_margin(const Barycenter& sigma, int j, const MetricConfig& cfg = {});

/// The collapse realizing stratum_margin.
Barycenter project_atomic(const Barycenter& sigma, int j, const MetricConfig& cfg = {});

struct StratumBoundsVerdict {
    bool applicable = false;  // margin(sigma, j-1) > eps
    double margin = 0.0;
    double min_weight = 0.0;
    double min_separation = 0.0;
    bool bounds_hold = false;  // min_weight >= eps/2 and min_separation >= eps/2
};
StratumBoundsVerdict check_stratum_bounds(const Barycenter& sigma, double eps,
                                          const MetricConfig& cfg = {});

struct HomotopyConfig {
    double eps = 0.2;
    double eps_hat = 0.0;     // default eps^2/100
    double eta = 0.0;         // default sqrt(eps_hat)
    double proj_slack = 0.0;  // refuse when dist(sigma, P_j sigma) exceeds this; default 10*eps_hat
    bool enforce = true;      // cascade use relaxes the precondition checks
    double resolved() const { return eps_hat > 0 ? eps_hat : eps * eps / 100.0; }
    double eta_resolved() const { return eta > 0 ? eta : std::sqrt(resolved()); }
    double slack_resolved() const { return proj_slack > 0 ? proj_slack : 10.0 * resolved(); }
};

/// The stratum-collapse homotopy T^t_j: cutoff rho_eta, cluster masses and
/// intrinsic cluster centers, annulus interpolation, exact renormalization.
Barycenter homotopy_T(const Barycenter& sigma, int j, double t, const HomotopyConfig& cfg = {});

/// T-hat: T^{2t}_j for t <= 1/2, then a within-stratum interpolation from
/// T^1_j(sigma) to the atomic projection P_j(sigma) for t >= 1/2.
Barycenter hat_homotopy(const Barycenter& sigma, int j, double t, const HomotopyConfig& cfg = {});

struct ProjectionConfig {
    int lloyd_iters = 12;
    double peak_suppression = 0.0;  // initialization ball; default from separation scale
    unsigned seed = 12345;
    int dict_mcshane = 64;
    int dict_spectral = 32;
};

/// Project a discrete density onto a j-atom barycenter (greedy peaks followed
/// by Lloyd alternation with intrinsic cell centers).
Barycenter project_density(ManifoldPtr M, const DiscreteMeasure& mu, int j,
                           const ProjectionConfig& cfg = {});

/// Dictionary estimate of the dual-norm distance between a density and an
/// atomic measure (lower-bound maximization over C^1-feasible functions).
/// `spectral_values`, when given, holds precomputed values of the rescaled
/// low-frequency dictionary functions at the measure points (one column per
/// function); otherwise that dictionary block is evaluated pointwise only
/// for small measures.
struct SpectralDictionary {
    Eigen::MatrixXd values;  // one column per dictionary function, at the measure points
    Eigen::VectorXd scales;  // rescale factor per function (C^1-ball normalization)
};

double density_distance_estimate(ManifoldPtr M, const DiscreteMeasure& mu, const Barycenter& sigma,
                                 const ProjectionConfig& cfg = {},
                                 const SpectralDictionary* dict = nullptr);

/// The first `count` spectral dictionary functions evaluated on a fine grid.
SpectralDictionary spectral_dictionary_on(ManifoldPtr M, const FineGrid& g, int count);

struct PsiConfig {
    int k = 1;            // order of the target barycenter space
    double eps1 = 0.2;    // cascade scales: eps_{j+1} = eps_j^2 / scale_shrink
    double scale_shrink = 50.0;
    double l_hat = 0.0;   // sublevel threshold; 0 disables the energy check
    ProjectionConfig proj;
    MetricConfig metric;
};

struct PsiTrace {
    int chosen_j = 0;
    std::vector<double> distances;  // density-to-M_j estimates, j = 1..k
    std::vector<double> cutoffs;    // f_j values
    std::string to_json() const;
};

/// The sublevel-to-barycenter map: scale cascade, first saturated cutoff,
/// stratum projection, then the partial collapse homotopies.
Barycenter psi_hat_measure(ManifoldPtr M, const DiscreteMeasure& mu, const PsiConfig& cfg,
                           PsiTrace* trace = nullptr, const SpectralDictionary* dict = nullptr);
Barycenter psi_hat(const OperatorModel& op, const CurvatureData& q, const ScalarField& u,
                   const PsiConfig& cfg, PsiTrace* trace = nullptr);

Eigen::VectorXd s_vector(const OperatorModel& op, const ScalarField& u);

struct AkkPoint {
    Barycenter sigma;
    Eigen::VectorXd s;
    bool unit_sphere_mode = false;  // the k_P < 8 pi^2 regime carries only s/|s|
};

/// Distance respecting the collapse of the barycenter factor at |s| = 1.
double akk_distance(const AkkPoint& a, const AkkPoint& b, const MetricConfig& cfg = {});

/// Distinguished collapsed representative (single atom at the chart base point).
Barycenter collapsed_representative(ManifoldPtr M, int k);

AkkPoint psi(const OperatorModel& op, const CurvatureData& q, const ScalarField& u,
             const PsiConfig& cfg, PsiTrace* trace = nullptr);

} // namespace qcurv
