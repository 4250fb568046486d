#pragma once

#include <Eigen/Dense>
#include <array>
#include <memory>
#include <vector>

#include "qcurv/quadrature.hpp"

namespace qcurv {

/// Chart coordinates of a point: periodic coordinates in [0,2pi)^4 on the
/// torus, hyperspherical angles (theta1,theta2,theta3,phi) on the sphere.
using Chart = std::array<double, 4>;

/// A real orthonormal spectral basis attached to a product quadrature grid.
///
/// Orthonormality holds in the discrete inner product sum_q w_q f(q) g(q);
/// the quadrature is exact on products of two basis functions, so analyze
/// and synthesize are mutual inverses on the band-limited subspace.
class Basis {
public:
    virtual ~Basis() = default;

    virtual int node_count() const = 0;
    virtual int size() const = 0;

    /// Eigenvalue of -Delta (geometer's convention, Delta <= 0) on function i.
    virtual double minus_laplace(int i) const = 0;

    /// Shell label: |k|^2 on the torus, harmonic degree l on the sphere.
    virtual int degree(int i) const = 0;

    virtual Eigen::VectorXd analyze(const Eigen::VectorXd& nodal) const = 0;
    virtual Eigen::VectorXd synthesize(const Eigen::VectorXd& coeff) const = 0;

    /// Gradient in an orthonormal coordinate frame, one vector per component,
    /// evaluated at the grid nodes.
    virtual std::array<Eigen::VectorXd, 4> gradient_frame(const Eigen::VectorXd& coeff) const = 0;

    /// Pointwise evaluation of the band-limited field sum_i coeff_i B_i.
    virtual double eval_field(const Eigen::VectorXd& coeff, const Chart& p) const = 0;

    /// Pointwise evaluation of a single basis function.
    virtual double eval_basis(int i, const Chart& p) const = 0;

    Eigen::VectorXd minus_laplace_vector() const {
        Eigen::VectorXd v(size());
        for (int i = 0; i < size(); ++i) v[i] = minus_laplace(i);
        return v;
    }
};

/// Tensor trigonometric basis on the flat torus [0,2pi)^4 with n uniform
/// nodes per axis. Per-axis band limit K: even n keeps K = n/2 - 1 (the
/// Nyquist mode is dropped), odd n keeps K = (n-1)/2.
class TorusBasis final : public Basis {
public:
    explicit TorusBasis(int nodes_per_axis);

    int node_count() const override { return n_ * n_ * n_ * n_; }
    int size() const override { return nb_ * nb_ * nb_ * nb_; }
    double minus_laplace(int i) const override;
    int degree(int i) const override;
    Eigen::VectorXd analyze(const Eigen::VectorXd& nodal) const override;
    Eigen::VectorXd synthesize(const Eigen::VectorXd& coeff) const override;
    std::array<Eigen::VectorXd, 4> gradient_frame(const Eigen::VectorXd& coeff) const override;
    double eval_field(const Eigen::VectorXd& coeff, const Chart& p) const override;
    double eval_basis(int i, const Chart& p) const override;

    int nodes_per_axis() const { return n_; }
    int band() const { return K_; }

    /// Evaluate a coefficient field on the uniform product grid with the
    /// given per-axis nodes (same list on every axis), separably.
    Eigen::VectorXd synthesize_product(const Eigen::VectorXd& coeff,
                                       const std::vector<double>& axis_nodes) const;
    /// Integer frequency vector of basis function i (signs: +k cosine, -k sine
    /// encoded by the per-axis function index; |k| is what matters here).
    std::array<int, 4> mode(int i) const;

private:
    int n_, K_, nb_;
    Eigen::MatrixXd tab_;   // (nb_, n_) per-axis function values
    Eigen::MatrixXd dtab_;  // derivatives
    double w1d_;            // per-axis quadrature weight 2pi/n

    std::array<int, 4> split(int i) const;
    Eigen::VectorXd contract_all(const Eigen::VectorXd& in, bool forward,
                                 const std::array<const Eigen::MatrixXd*, 4>& tabs) const;
};

/// Hyperspherical harmonic basis on the round S^4 (radius configurable) up
/// to harmonic degree L. Built level by level: associated Gegenbauer-type
/// functions are generated numerically by weighted QR of monomial ladders,
/// which yields discrete orthonormality to machine precision.
class SphereBasis final : public Basis {
public:
    explicit SphereBasis(int max_degree, double radius = 1.0);

    int node_count() const override { return nnodes_; }
    int size() const override { return nbasis_; }
    double minus_laplace(int i) const override;
    int degree(int i) const override { return meta_[i].l; }
    Eigen::VectorXd analyze(const Eigen::VectorXd& nodal) const override;
    Eigen::VectorXd synthesize(const Eigen::VectorXd& coeff) const override;
    std::array<Eigen::VectorXd, 4> gradient_frame(const Eigen::VectorXd& coeff) const override;
    double eval_field(const Eigen::VectorXd& coeff, const Chart& p) const override;
    double eval_basis(int i, const Chart& p) const override;

    int max_degree() const { return L_; }
    double radius() const { return radius_; }

    /// Evaluate a coefficient field on an arbitrary product angle grid,
    /// separably (same staged contraction as synthesize).
    Eigen::VectorXd synthesize_product(const Eigen::VectorXd& coeff, const std::vector<double>& th1,
                                       const std::vector<double>& th2, const std::vector<double>& th3,
                                       const std::vector<double>& phi) const;

    struct Meta {
        int l, m1, m2, m3;
        bool sine;  // phi factor is sin(m3 phi) instead of cos(m3 phi)
    };
    const Meta& meta(int i) const { return meta_[i]; }

    const std::vector<double>& grid_theta1() const { return th1_; }
    const std::vector<double>& grid_theta2() const { return th2_; }
    const std::vector<double>& grid_theta3() const { return th3_; }
    const std::vector<double>& grid_phi() const { return phi_; }

private:
    // One ladder of 1D level functions: for each class m, the functions
    // sin^m(theta) p_d(cos theta), d = 0..L-m, orthonormal in the level weight.
    struct Ladder {
        std::vector<Eigen::MatrixXd> val;   // [m](q, d)
        std::vector<Eigen::MatrixXd> dval;  // theta-derivatives at nodes
        std::vector<Eigen::MatrixXd> coef;  // [m](j, d) monomial coefficients of p_d
    };

    int L_;
    double radius_;
    int n1_, n2_, n3_, nphi_;
    int nnodes_, nbasis_;
    std::vector<double> th1_, th2_, th3_, phi_;
    Eigen::VectorXd w1_, w2_, w3_;  // level weights (measure folded in)
    double wphi_;
    Ladder lad1_, lad2_, lad3_;
    Eigen::MatrixXd tphi_, dtphi_;  // (2L+1, nphi) azimuthal tables

    std::vector<Meta> meta_;
    // Stage offset tables for the ragged separable transforms.
    std::vector<int> m_of_a_;                 // phi index a -> m3
    std::vector<int> off3_;                   // per a: offset into stage-2 blocks
    std::vector<std::vector<int>> off2_;      // per (a, j3): offset into stage-3 blocks
    std::vector<std::vector<std::vector<int>>> off1_;  // per (a, j3, j2): coeff offset
    int s3_count_, s2_count_;

    static Ladder build_ladder(const std::vector<double>& theta, const Eigen::VectorXd& w, int L);
    Eigen::VectorXd transform(const Eigen::VectorXd& in, bool forward, int deriv_level) const;
    void eval_tables(const Chart& p, std::vector<Eigen::VectorXd>& e1, std::vector<Eigen::VectorXd>& e2,
                     std::vector<Eigen::VectorXd>& e3, Eigen::VectorXd& ephi) const;
};

/// Closed-form count of degree-l spherical harmonics on S^4.
inline int sphere_harmonic_count(int l) { return (2 * l + 3) * (l + 2) * (l + 1) / 6; }

} // namespace qcurv
