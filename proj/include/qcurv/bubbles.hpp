#pragma once

#include "qcurv/barycenter.hpp"
#include "qcurv/functional.hpp"

namespace qcurv {

/// Parameters of the standard concentrating test function: atoms and weights
/// from sigma, concentration scale lambda, cutoff length delta.
struct BubbleConfig {
    Barycenter sigma;
    double lambda = 100.0;
    double delta = 0.1;
};

struct TestMapConfig {
    double s_bar = 10.0;       // amplitude on the negative eigenspace
    double lambda_bar = 200.0; // concentration scale at the |s| <= 1/4 branch
    double delta = 0.1;
    Eigen::VectorXd s;         // |s| <= 1
};

/// Smooth monotone cutoff: identity on [0, delta], constant 2 delta from
/// 2 delta on, C^2 quintic in between.
double chi_delta(double t, double delta);
double chi_delta_d1(double t, double delta);
double chi_delta_d2(double t, double delta);

/// Exact pointwise value of the bubble (log-sum of atom profiles).
double bubble_value(const ModelManifold& M, const BubbleConfig& cfg, const Chart& y);
Eigen::VectorXd bubble_on(const ModelManifold& M, const BubbleConfig& cfg,
                          const std::vector<Chart>& pts);
/// Value outside every 2-delta ball: log(2 lambda / (1 + 4 lambda^2 delta^2)).
double bubble_far_value(const BubbleConfig& cfg);

/// Node evaluation plus spectral projection.
ScalarField bubble(ManifoldPtr M, const BubbleConfig& cfg);

/// Faithful quantization of the measure e^{4 phi} dV (normalized): grid
/// masses away from the atom cores, exact radial core masses placed at the
/// atoms. Pointwise sampling would misstate sub-grid cores by large factors.
DiscreteMeasure bubble_measure(const ModelManifold& M, const FineGrid& g, const BubbleConfig& cfg,
                               double core_radius = 0.0);

// --- exact functionals via the radial/ball decomposition ---------------------
//
// Away from the atom balls the bubble is constant, and inside each ball the
// other atoms contribute exactly their far-field constant, so every integral
// below reduces to 1D radial quadratures (plus smooth-factor ball rules).
// Requires the atom clusters to be separated by at least 4 delta.

/// int e^{4 a phi} dV for a scalar exponent a (a = t for cone fields t phi).
double bubble_mass(const ModelManifold& M, const BubbleConfig& cfg, double exponent = 1.0);

/// <P phi, phi> assembled from the radial Laplacian and gradient profiles.
double bubble_pairing(const OperatorModel& op, const BubbleConfig& cfg);

/// int phi dV.
double bubble_integral(const ModelManifold& M, const BubbleConfig& cfg);

/// int Q phi dV for a band-limited curvature field.
double bubble_q_integral(const ModelManifold& M, const CurvatureData& q, const BubbleConfig& cfg);

/// int vhat_i phi dV, i = 1..k_bar.
Eigen::VectorXd bubble_eigen_pairings(const OperatorModel& op, const BubbleConfig& cfg);

/// log int e^{4(u-ubar)} - <P+ u, u>/8 pi^2 along the bubble family.
double bubble_adams_gap(const OperatorModel& op, const BubbleConfig& cfg);

// --- composite test functions -------------------------------------------------

/// phi_s + bubble_coef * phi_{lambda,sigma} + constant, with phi_s a linear
/// combination of the negative eigenfields.
struct TestField {
    BubbleConfig bubble;
    double bubble_coef = 1.0;
    Eigen::VectorXd s_amplitudes;  // coefficients against vhat_i (S-bar * s_i)
    double constant = 0.0;
};

ScalarField phi_s(const OperatorModel& op, const Eigen::VectorXd& s, double s_bar);

/// The three-branch map in |s| gluing the bubble scale to the eigenspace
/// profile; continuous across |s| = 1/4 and 1/2, sigma-independent at |s| = 1.
TestField big_phi(const OperatorModel& op, const TestMapConfig& cfg, const Barycenter& sigma);

/// Materialize a test field on the spectral grid.
ScalarField materialize(const OperatorModel& op, const TestField& f, double t_scale = 1.0);

/// Energy of t_scale * (phi_s + c phi + const) through the exact analytics.
EnergyBreakdown test_field_energy(const OperatorModel& op, const CurvatureData& q,
                                  const TestField& f, double t_scale = 1.0, double rho = 1.0);

// --- quantitative sweeps --------------------------------------------------------

struct EstimateSuiteRow {
    double lambda = 0.0;
    double q_term = 0.0;     // int Q (phi_s + phi_lambda)
    double log_mass = 0.0;   // log int e^{4(phi_s + phi_lambda)}
    double pairing = 0.0;    // <P(phi_s+phi), (phi_s+phi)>
};

struct EstimateSuiteReport {
    std::vector<EstimateSuiteRow> rows;
    double q_slope = 0.0;        // least squares vs log lambda; expected -k_P
    double log_mass_drift = 0.0; // max - min over the grid
    double pairing_slope = 0.0;  // expected <= 32 k pi^2 (1 + o_delta)
};

EstimateSuiteReport estimate_suite(const OperatorModel& op, const CurvatureData& q,
                                   const TestMapConfig& cfg, const Barycenter& sigma,
                                   const std::vector<double>& lambda_grid);

/// Least-squares slope of <P phi_lambda, phi_lambda> against log lambda.
double energy_slope(const OperatorModel& op, const Barycenter& sigma, double delta,
                    const std::vector<double>& lambda_grid);

/// max_i |int vhat_i phi| at the given scales.
double eigen_pairing_decay(const OperatorModel& op, const Barycenter& sigma, double lambda,
                           double delta);

} // namespace qcurv
