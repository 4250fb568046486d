#pragma once

#include <Eigen/Dense>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "qcurv/spectral.hpp"

namespace qcurv {

enum class ManifoldKind { Torus, Sphere, Conformal };

class ModelManifold;
using ManifoldPtr = std::shared_ptr<const ModelManifold>;

/// Tangent vectors live in the chart for the torus and in the embedding
/// R^5 for the sphere; the torus uses the first four components.
using Tangent = Eigen::Matrix<double, 5, 1>;
using Vec5 = Eigen::Matrix<double, 5, 1>;

struct PointOnM {
    Chart x{};
    ManifoldPtr M;
};

/// Auxiliary product grid at higher angular resolution than the spectral
/// grid. Used wherever a field is treated as a measure (projections onto
/// barycenters, concentration detection).
struct FineGrid {
    std::vector<Chart> chart;
    Eigen::VectorXd weights;
    std::vector<Vec5> embed;                       // sphere only
    std::array<std::vector<double>, 4> axis_nodes; // product structure per axis
};

struct ManifoldSpec {
    std::string kind = "torus";  // "torus" | "sphere"
    int resolution = 8;          // nodes per axis (torus) or max harmonic degree (sphere)
    double radius = 1.0;         // sphere only
};

class ModelManifold : public std::enable_shared_from_this<ModelManifold> {
public:
    ManifoldKind kind;
    int resolution;
    double radius = 1.0;
    std::shared_ptr<const Basis> basis;

    std::vector<Chart> node_chart;
    std::vector<Vec5> node_embed;  // sphere (and conformal-of-sphere)
    Eigen::VectorXd weights;       // quadrature weights, conformal factor included
    double volume = 0.0;
    int euler_char = 0;

    // Background curvature; our geometric backgrounds are flat or round.
    double scalar_curv = 0.0;   // R_g
    double ricci_factor = 0.0;  // Ric_g = ricci_factor * g
    // |W_g|^2 vanishes identically on all supported models.

    // Conformal data (kind == Conformal)
    ManifoldPtr base;
    Eigen::VectorXd conf_w_nodal, conf_w_coeff, conf_e4w;

    int node_count() const { return static_cast<int>(weights.size()); }
    double injectivity_radius() const;

    double distance(const Chart& p, const Chart& q) const;
    Tangent log_map(const Chart& base_pt, const Chart& q) const;
    Chart exp_map(const Chart& base_pt, const Tangent& v) const;
    Chart canonical(const Chart& p) const;
    Vec5 embed(const Chart& p) const;  // sphere only

    /// Product grid with `factor`-times the angular resolution of the node grid.
    FineGrid fine_grid(int factor = 2) const;

    /// Evaluate a band-limited field (given by coefficients) on a fine grid.
    Eigen::VectorXd synthesize_on(const FineGrid& g, const Eigen::VectorXd& coeff) const;

    /// The manifold whose metric supplies distances and the spectral basis
    /// (itself for torus/sphere, the base for conformal manifolds).
    const ModelManifold& metric_model() const { return base ? *base : *this; }
};

class ScalarField {
public:
    ScalarField() = default;
    static ScalarField from_nodal(ManifoldPtr M, Eigen::VectorXd nodal);
    static ScalarField from_coeff(ManifoldPtr M, Eigen::VectorXd coeff);
    static ScalarField constant(ManifoldPtr M, double c);

    const Eigen::VectorXd& nodal() const { return nodal_; }
    const Eigen::VectorXd& coeff() const { return coeff_; }
    const ManifoldPtr& manifold() const { return M_; }
    bool empty() const { return !M_; }

    double mean() const;  // integral / volume on the field's manifold

    ScalarField operator+(const ScalarField& o) const;
    ScalarField operator-(const ScalarField& o) const;
    ScalarField operator*(double a) const;
    ScalarField operator+(double c) const;
    ScalarField operator-(double c) const { return *this + (-c); }

private:
    ManifoldPtr M_;
    Eigen::VectorXd nodal_, coeff_;
};

// --- module operations ------------------------------------------------------

ManifoldPtr build_manifold(const ManifoldSpec& spec);

double integrate(const ScalarField& u);
double integrate_nodal(const ModelManifold& M, const Eigen::VectorXd& nodal);

double geodesic_distance(const PointOnM& p, const PointOnM& q);

/// Intrinsic weighted center of mass (Karcher mean, fixed-point iteration on
/// the exponential chart). Weights must be nonnegative and sum to 1.
/// With enforce_spread the call refuses clusters wider than a quarter of the
/// injectivity radius.
PointOnM riemannian_center(std::span<const PointOnM> pts, std::span<const double> weights,
                           bool enforce_spread = true);

PointOnM geodesic_point(const PointOnM& a, const PointOnM& b, double t);

ManifoldPtr conformal_rescale(ManifoldPtr M, const ScalarField& w);

} // namespace qcurv
