#pragma once

#include <optional>
#include <vector>

#include "qcurv/paneitz.hpp"

namespace qcurv {

struct EnergyBreakdown {
    double quadratic = 0.0;  // <P u, u>
    double linear = 0.0;     // 4 rho int Q u
    double logterm = 0.0;    // -rho k_P log int e^{4u}
    double total = 0.0;      // sum of the three, by construction
};

/// Outcome of the constructive concentration dichotomy.
struct ConcentrationVerdict {
    bool concentrated = false;       // true: mass 1-eps inside l balls of radius r
    std::vector<PointOnM> points;    // l points (concentrated) or l+1 points (separated)
    double eps_bar = 0.0;            // per-ball mass certificate, separated branch
    double r_bar = 0.0;              // r/8
    double outside_mass = 0.0;       // audited mass outside the r-balls (concentrated branch)
};

struct Region {
    PointOnM center;
    double radius = 0.0;
};

struct ImprovedAdamsReport {
    bool applicable = false;         // hypotheses verified
    std::string reason;              // populated when not applicable
    std::vector<double> region_mass; // int_Omega_i e^{4u} / int_M e^{4u}
    double log_mass = 0.0;           // log int e^{4(u-ubar)}
    double improved_bound = 0.0;     // <P u,u> / (8 (l+1) pi^2 - eps_tilde) (+ measured gap below)
    double gap = 0.0;                // log_mass - improved_bound
};

double log_integral_exp4(const ModelManifold& M, const Eigen::VectorXd& u_nodal);

EnergyBreakdown energy(const OperatorModel& op, const CurvatureData& q, const ScalarField& u);
EnergyBreakdown energy_rho(const OperatorModel& op, const CurvatureData& q, const ScalarField& u,
                           double rho);

/// P u + 2 rho Q - 2 rho k_P e^{4u} / int e^{4u}, as a node field.
ScalarField euler_residual(const OperatorModel& op, const CurvatureData& q, const ScalarField& u,
                           double rho);

/// u - (1/4) log int e^{4u}; afterwards int e^{4u'} = 1.
ScalarField normalize_volume(const ScalarField& u);

/// log int e^{4(u - ubar)} - <P+ u, u>/(8 pi^2). Bounded above uniformly.
double adams_gap(const OperatorModel& op, const ScalarField& u);

ImprovedAdamsReport improved_adams_check(const OperatorModel& op, const ScalarField& u,
                                         const std::vector<Region>& regions, double delta0,
                                         double gamma0, double S, double eps_tilde = 0.5);

/// A nonnegative atomic measure on sample points (node or fine-grid masses).
struct DiscreteMeasure {
    std::vector<Chart> points;
    Eigen::VectorXd mass;
};

/// Constructive covering dichotomy for a normalized node density f >= 0:
/// either l points whose r-balls hold mass >= 1-eps, or l+1 points each
/// holding mass >= eps_bar in pairwise disjoint 2 r_bar balls.
ConcentrationVerdict concentration_detect(const ModelManifold& M, const Eigen::VectorXd& f_nodal,
                                          int l, double eps, double r);
ConcentrationVerdict concentration_detect(const ModelManifold& M, const DiscreteMeasure& mu, int l,
                                          double eps, double r);

struct SublevelResult {
    bool in_sublevel = false;
    std::vector<PointOnM> points;
};

/// If II(u) <= -L and the V-component is admissible, locate concentration
/// points of e^{4u} in the k_P band k.
SublevelResult sublevel_concentration(const OperatorModel& op, const CurvatureData& q,
                                      const ScalarField& u, double S, double eps, double r,
                                      double L);

} // namespace qcurv
