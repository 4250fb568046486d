#include "qcurv/paneitz.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace qcurv {

namespace {
constexpr double kPi = 3.14159265358979323846;

Eigen::VectorXd geometric_symbol(const ModelManifold& M) {
    const ModelManifold& m = M.metric_model();
    const Basis& B = *m.basis;
    Eigen::VectorXd s(B.size());
    if (m.kind == ManifoldKind::Torus) {
        for (int i = 0; i < B.size(); ++i) {
            double mu = B.minus_laplace(i);
            s[i] = mu * mu;
        }
    } else {
        const double c = 2.0 / (m.radius * m.radius);
        for (int i = 0; i < B.size(); ++i) {
            double mu = B.minus_laplace(i);
            s[i] = mu * mu - c * mu;
        }
    }
    return s;
}
} // namespace

OperatorModel OperatorModel::geometric(ManifoldPtr M) {
    OperatorModel op;
    op.M_ = std::move(M);
    op.symbol_ = geometric_symbol(*op.M_);
    return op;
}

OperatorModel OperatorModel::synthetic(ManifoldPtr M,
                                       const std::vector<std::pair<int, double>>& overrides) {
    if (M->kind == ManifoldKind::Conformal)
        throw std::invalid_argument("synthetic_operator: conformal manifolds not supported");
    OperatorModel op;
    op.M_ = std::move(M);
    op.synthetic_ = true;
    op.symbol_ = geometric_symbol(*op.M_);
    for (const auto& [idx, val] : overrides) {
        if (idx < 0 || idx >= op.symbol_.size())
            throw std::invalid_argument("synthetic_operator: mode index out of range");
        if (idx == 0 && val != 0.0)
            throw std::invalid_argument("synthetic_operator: constant mode must keep eigenvalue 0");
        if (idx != 0 && val == 0.0)
            throw std::invalid_argument("synthetic_operator: zero eigenvalue on a non-constant mode");
        op.symbol_[idx] = val;
    }
    return op;
}

ScalarField OperatorModel::apply(const ScalarField& u) const {
    if (u.manifold() != M_) throw std::invalid_argument("apply_paneitz: manifold mismatch");
    Eigen::VectorXd c = symbol_.cwiseProduct(u.coeff());
    if (M_->kind == ManifoldKind::Conformal) {
        const Basis& B = *M_->metric_model().basis;
        Eigen::VectorXd nodal = B.synthesize(c).cwiseQuotient(M_->conf_e4w);
        return ScalarField::from_nodal(M_, std::move(nodal));
    }
    return ScalarField::from_coeff(M_, std::move(c));
}

double OperatorModel::pairing(const ScalarField& u, const ScalarField& v) const {
    if (u.manifold() != M_ || v.manifold() != M_)
        throw std::invalid_argument("pairing: manifold mismatch");
    return symbol_.cwiseProduct(u.coeff()).dot(v.coeff());
}

double OperatorModel::spectral_gap() const {
    double gap = std::numeric_limits<double>::infinity();
    for (int i = 1; i < symbol_.size(); ++i) gap = std::min(gap, std::abs(symbol_[i]));
    return gap;
}

int OperatorModel::k_bar() const {
    int k = 0;
    for (int i = 0; i < symbol_.size(); ++i)
        if (symbol_[i] < 0) ++k;
    return k;
}

void OperatorModel::build_negative_part() const {
    auto dec = std::make_shared<SpectrumDecomposition>();
    std::vector<int> neg;
    for (int i = 0; i < symbol_.size(); ++i)
        if (symbol_[i] < 0) neg.push_back(i);
    std::sort(neg.begin(), neg.end(),
              [&](int a, int b) { return symbol_[a] < symbol_[b]; });
    dec->k_bar = static_cast<int>(neg.size());
    dec->eigenvalues.resize(dec->k_bar);
    for (int j = 0; j < dec->k_bar; ++j) {
        dec->eigenvalues[j] = symbol_[neg[j]];
        Eigen::VectorXd c = Eigen::VectorXd::Zero(symbol_.size());
        c[neg[j]] = 1.0;
        dec->eigenfields.push_back(ScalarField::from_coeff(M_, std::move(c)));
    }
    negative_ = dec;
}

const SpectrumDecomposition& OperatorModel::negative_part() const {
    if (!negative_) build_negative_part();
    return *negative_;
}

Eigen::VectorXd OperatorModel::v_components(const ScalarField& u) const {
    const auto& np = negative_part();
    Eigen::VectorXd a(np.k_bar);
    for (int i = 0; i < np.k_bar; ++i) a[i] = integrate_nodal(*M_, u.nodal().cwiseProduct(np.eigenfields[i].nodal()));
    return a;
}

ScalarField OperatorModel::v_projection(const ScalarField& u) const {
    const auto& np = negative_part();
    ScalarField s = ScalarField::constant(M_, 0.0);
    Eigen::VectorXd a = v_components(u);
    for (int i = 0; i < np.k_bar; ++i) s = s + np.eigenfields[i] * a[i];
    return s;
}

ScalarField OperatorModel::apply_plus(const ScalarField& u) const {
    ScalarField pu = apply(u);
    const auto& np = negative_part();
    if (np.k_bar == 0) return pu;
    Eigen::VectorXd a = v_components(u);
    for (int i = 0; i < np.k_bar; ++i)
        pu = pu + np.eigenfields[i] * (-2.0 * np.eigenvalues[i] * a[i]);
    return pu;
}

double OperatorModel::pairing_plus(const ScalarField& u, const ScalarField& v) const {
    double p = pairing(u, v);
    const auto& np = negative_part();
    if (np.k_bar == 0) return p;
    Eigen::VectorXd au = v_components(u), av = v_components(v);
    for (int i = 0; i < np.k_bar; ++i) p += -2.0 * np.eigenvalues[i] * au[i] * av[i];
    return p;
}

// --- free functions -----------------------------------------------------------

ScalarField apply_paneitz(const OperatorModel& op, const ScalarField& u) { return op.apply(u); }

double pairing(const OperatorModel& op, const ScalarField& u, const ScalarField& v) {
    return op.pairing(u, v);
}

double pairing_nodal(const OperatorModel& op, const ScalarField& u, const ScalarField& v) {
    const ManifoldPtr& M = op.manifold();
    if (M->kind == ManifoldKind::Conformal)
        throw std::invalid_argument("pairing_nodal: geometric torus/sphere only");
    if (op.synthetic_mode())
        throw std::invalid_argument("pairing_nodal: geometric operators only");
    const Basis& B = *M->basis;
    Eigen::VectorXd lap_u = B.synthesize(-(B.minus_laplace_vector().cwiseProduct(u.coeff())));
    Eigen::VectorXd lap_v = B.synthesize(-(B.minus_laplace_vector().cwiseProduct(v.coeff())));
    Eigen::VectorXd integrand = lap_u.cwiseProduct(lap_v);
    // int div(A du) v = -int (A grad u, grad v) with A = (2R/3) g - 2 Ric
    const double grad_coef = 2.0 * M->ricci_factor - (2.0 / 3.0) * M->scalar_curv;
    if (grad_coef != 0.0) {
        auto gu = B.gradient_frame(u.coeff());
        auto gv = B.gradient_frame(v.coeff());
        for (int c = 0; c < 4; ++c) integrand += grad_coef * gu[c].cwiseProduct(gv[c]);
    }
    return integrate_nodal(*M, integrand);
}

CurvatureData q_curvature(const ModelManifold& M) {
    CurvatureData cd;
    const int n = M.node_count();
    if (M.kind == ManifoldKind::Torus) {
        cd.q_nodal = Eigen::VectorXd::Zero(n);
        cd.k_p = 0.0;
    } else if (M.kind == ManifoldKind::Sphere) {
        // Q = -(1/12)(Delta R - R^2 + 3 |Ric|^2) with R = 12/r^2, |Ric|^2 = 36/r^4
        const double r2 = M.radius * M.radius;
        const double q = -(1.0 / 12.0) * (0.0 - 144.0 / (r2 * r2) + 108.0 / (r2 * r2));
        cd.q_nodal = Eigen::VectorXd::Constant(n, q);
        cd.k_p = q * M.volume;
    } else {
        // conformal law: 2 Q_gt e^{4w} = P_g w + 2 Q_g
        const ModelManifold& base = *M.base;
        CurvatureData qb = q_curvature(base);
        OperatorModel op = OperatorModel::geometric(M.base);
        ScalarField w = ScalarField::from_coeff(M.base, M.conf_w_coeff);
        Eigen::VectorXd pw = op.apply(w).nodal();
        cd.q_nodal = (pw + 2.0 * qb.q_nodal).cwiseQuotient(2.0 * M.conf_e4w);
        cd.k_p = M.weights.dot(cd.q_nodal);
    }
    cd.weyl2_integral = 0.0;
    return cd;
}

GaussBonnetReport gauss_bonnet_audit(const ModelManifold& M) {
    CurvatureData cd = q_curvature(M);
    GaussBonnetReport r;
    r.lhs = M.weights.dot(cd.q_nodal) + cd.weyl2_integral / 8.0;
    r.rhs = 4.0 * kPi * kPi * M.euler_char;
    r.defect = std::abs(r.lhs - r.rhs);
    return r;
}

SpectrumDecomposition spectrum(const OperatorModel& op, int n) {
    const ManifoldPtr& M = op.manifold();
    const Basis& B = *M->metric_model().basis;
    if (n < 1 || n > B.size()) throw std::invalid_argument("spectrum: count out of range");
    SpectrumDecomposition dec;
    dec.k_bar = op.k_bar();
    if (M->kind != ManifoldKind::Conformal) {
        std::vector<int> idx(B.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
            return op.symbol()[a] < op.symbol()[b];
        });
        dec.eigenvalues.resize(n);
        for (int j = 0; j < n; ++j) {
            dec.eigenvalues[j] = op.symbol()[idx[j]];
            Eigen::VectorXd c = Eigen::VectorXd::Zero(B.size());
            c[idx[j]] = 1.0;
            dec.eigenfields.push_back(ScalarField::from_coeff(M, std::move(c)));
        }
        dec.max_residual = 0.0;  // eigenfunctions by construction
        return dec;
    }
    // conformal: generalized problem  diag(symbol) c = lambda Gram(e^{4w}) c
    Eigen::MatrixXd A = op.symbol().asDiagonal();
    Eigen::MatrixXd G(B.size(), B.size());
    for (int j = 0; j < B.size(); ++j) {
        Eigen::VectorXd e = Eigen::VectorXd::Zero(B.size());
        e[j] = 1.0;
        Eigen::VectorXd fn = B.synthesize(e).cwiseProduct(M->conf_e4w);
        G.col(j) = B.analyze(fn);
    }
    G = 0.5 * (G + G.transpose());
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(A, G);
    if (es.info() != Eigen::Success)
        throw std::runtime_error("spectrum: generalized eigensolver failed");
    dec.eigenvalues = es.eigenvalues().head(n);
    double resid = 0.0;
    for (int j = 0; j < n; ++j) {
        Eigen::VectorXd c = es.eigenvectors().col(j);
        resid = std::max(resid,
                         (A * c - es.eigenvalues()[j] * (G * c)).norm() / std::max(1.0, std::abs(es.eigenvalues()[j])));
        dec.eigenfields.push_back(ScalarField::from_coeff(M, std::move(c)));
    }
    dec.max_residual = resid;
    if (resid > 1e-8)
        throw std::runtime_error("spectrum: eigensolver residual " + std::to_string(resid));
    return dec;
}

ScalarField plus_operator(const OperatorModel& op, const ScalarField& u) {
    return op.apply_plus(u);
}

OperatorModel synthetic_operator(ManifoldPtr M,
                                 const std::vector<std::pair<int, double>>& overrides) {
    return OperatorModel::synthetic(std::move(M), overrides);
}

std::vector<int> torus_axis_pair(const ModelManifold& M, int axis, int freq) {
    const auto* B = dynamic_cast<const TorusBasis*>(M.metric_model().basis.get());
    if (!B) throw std::invalid_argument("torus_axis_pair: torus manifolds only");
    if (axis < 0 || axis > 3 || freq < 1 || freq > B->band())
        throw std::invalid_argument("torus_axis_pair: axis/frequency out of range");
    const int nb = 2 * B->band() + 1;
    auto flat = [&](const std::array<int, 4>& a) {
        return ((a[0] * nb + a[1]) * nb + a[2]) * nb + a[3];
    };
    std::array<int, 4> ac{0, 0, 0, 0}, as{0, 0, 0, 0};
    ac[axis] = 2 * freq - 1;
    as[axis] = 2 * freq;
    return {flat(ac), flat(as)};
}

std::optional<int> kp_band(double k_p, double tol) {
    const double unit = 8.0 * kPi * kPi;
    if (k_p < tol && k_p > -tol) return 0;  // k_P == 0: coercive-side degenerate band
    double ratio = k_p / unit;
    double nearest = std::round(ratio);
    if (nearest >= 1.0 && std::abs(ratio - nearest) * unit <= tol) return std::nullopt;
    if (k_p < 0) return 0;
    return static_cast<int>(std::floor(ratio));
}

} // namespace qcurv
