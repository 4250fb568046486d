#include "qcurv/geometry.hpp"

#include <cmath>
#include <stdexcept>

namespace qcurv {

namespace {

constexpr double kPi = 3.14159265358979323846;

double wrap_2pi(double x) {
    x = std::fmod(x, 2.0 * kPi);
    if (x < 0) x += 2.0 * kPi;
    return x;
}

// signed shortest representative of x in (-pi, pi]
double wrap_pm(double x) {
    x = std::fmod(x, 2.0 * kPi);
    if (x <= -kPi) x += 2.0 * kPi;
    if (x > kPi) x -= 2.0 * kPi;
    return x;
}

Vec5 sphere_embed(const Chart& p, double radius) {
    const double s1 = std::sin(p[0]), c1 = std::cos(p[0]);
    const double s2 = std::sin(p[1]), c2 = std::cos(p[1]);
    const double s3 = std::sin(p[2]), c3 = std::cos(p[2]);
    Vec5 v;
    v[4] = c1;
    v[3] = s1 * c2;
    v[2] = s1 * s2 * c3;
    v[0] = s1 * s2 * s3 * std::cos(p[3]);
    v[1] = s1 * s2 * s3 * std::sin(p[3]);
    return v * radius;
}

Chart sphere_chart(const Vec5& u) {
    // u must be a unit vector
    Chart p;
    auto clamp1 = [](double t) { return std::max(-1.0, std::min(1.0, t)); };
    p[0] = std::acos(clamp1(u[4]));
    double r1 = std::sqrt(std::max(0.0, 1.0 - u[4] * u[4]));
    p[1] = (r1 > 1e-15) ? std::acos(clamp1(u[3] / r1)) : 0.0;
    double r2 = r1 * std::sin(p[1]);
    p[2] = (r2 > 1e-15) ? std::acos(clamp1(u[2] / r2)) : 0.0;
    double r3 = r2 * std::sin(p[2]);
    p[3] = (r3 > 1e-15) ? std::atan2(u[1], u[0]) : 0.0;
    if (p[3] < 0) p[3] += 2.0 * kPi;
    return p;
}

} // namespace

double ModelManifold::injectivity_radius() const {
    const ModelManifold& m = metric_model();
    return (m.kind == ManifoldKind::Sphere) ? kPi * m.radius : kPi;
}

double ModelManifold::distance(const Chart& p, const Chart& q) const {
    const ModelManifold& m = metric_model();
    if (kind == ManifoldKind::Conformal)
        throw std::runtime_error("distance: not supported on conformally rescaled metrics");
    if (m.kind == ManifoldKind::Torus) {
        double s = 0.0;
        for (int t = 0; t < 4; ++t) {
            double d = wrap_pm(p[t] - q[t]);
            s += d * d;
        }
        return std::sqrt(s);
    }
    Vec5 a = sphere_embed(p, 1.0), b = sphere_embed(q, 1.0);
    // chordal formulas stay well conditioned at both tiny and antipodal angles
    double chord = (b - a).norm();
    double th;
    if (chord <= std::sqrt(2.0)) {
        th = 2.0 * std::asin(std::min(1.0, 0.5 * chord));
    } else {
        th = kPi - 2.0 * std::asin(std::min(1.0, 0.5 * (b + a).norm()));
    }
    return m.radius * th;
}

Tangent ModelManifold::log_map(const Chart& base_pt, const Chart& q) const {
    const ModelManifold& m = metric_model();
    Tangent v = Tangent::Zero();
    if (m.kind == ManifoldKind::Torus) {
        for (int t = 0; t < 4; ++t) v[t] = wrap_pm(q[t] - base_pt[t]);
        return v;
    }
    Vec5 a = sphere_embed(base_pt, 1.0), b = sphere_embed(q, 1.0);
    double c = std::max(-1.0, std::min(1.0, a.dot(b)));
    Vec5 dir = (b - c * a);
    double n = dir.norm();
    double th = std::atan2(n, c);
    if (n < 1e-14) {
        if (c < 0) throw std::runtime_error("log_map: antipodal points");
        return Tangent::Zero();
    }
    return (m.radius * th / n) * dir;
}

Chart ModelManifold::exp_map(const Chart& base_pt, const Tangent& v) const {
    const ModelManifold& m = metric_model();
    if (m.kind == ManifoldKind::Torus) {
        Chart q;
        for (int t = 0; t < 4; ++t) q[t] = wrap_2pi(base_pt[t] + v[t]);
        return q;
    }
    Vec5 a = sphere_embed(base_pt, 1.0);
    double n = v.norm() / m.radius;  // angle
    if (n < 1e-15) return base_pt;
    Vec5 dir = v / v.norm();
    dir -= dir.dot(a) * a;  // project to the tangent space for safety
    double dn = dir.norm();
    if (dn < 1e-15) return base_pt;
    dir /= dn;
    Vec5 u = std::cos(n) * a + std::sin(n) * dir;
    u.normalize();
    return sphere_chart(u);
}

Chart ModelManifold::canonical(const Chart& p) const {
    const ModelManifold& m = metric_model();
    if (m.kind == ManifoldKind::Torus) {
        Chart q;
        for (int t = 0; t < 4; ++t) q[t] = wrap_2pi(p[t]);
        return q;
    }
    return sphere_chart(sphere_embed(p, 1.0));
}

Vec5 ModelManifold::embed(const Chart& p) const { return sphere_embed(p, 1.0); }

FineGrid ModelManifold::fine_grid(int factor) const {
    const ModelManifold& m = metric_model();
    FineGrid g;
    if (m.kind == ManifoldKind::Torus) {
        const int n = factor * m.resolution;
        const double w1 = 2.0 * kPi / n;
        const double w = w1 * w1 * w1 * w1;
        g.chart.reserve(static_cast<std::size_t>(n) * n * n * n);
        for (int i1 = 0; i1 < n; ++i1)
            for (int i2 = 0; i2 < n; ++i2)
                for (int i3 = 0; i3 < n; ++i3)
                    for (int i4 = 0; i4 < n; ++i4)
                        g.chart.push_back({2.0 * kPi * i1 / n, 2.0 * kPi * i2 / n,
                                           2.0 * kPi * i3 / n, 2.0 * kPi * i4 / n});
        g.weights = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(g.chart.size()), w);
        std::vector<double> ax(n);
        for (int i = 0; i < n; ++i) ax[i] = 2.0 * kPi * i / n;
        for (int t = 0; t < 4; ++t) g.axis_nodes[t] = ax;
        return g;
    }
    const int L = m.resolution;
    const int n1 = factor * (L + 2), n2 = factor * (L + 1), n3 = factor * (L + 1),
              nphi = factor * (2 * L + 1);
    const double r4 = std::pow(m.radius, 4);
    Rule1D g1 = gauss_legendre(n1);
    Rule1D g2 = gauss_chebyshev2(n2);
    Rule1D g3 = gauss_legendre(n3);
    g.chart.reserve(static_cast<std::size_t>(n1) * n2 * n3 * nphi);
    std::vector<double> wv;
    wv.reserve(g.chart.capacity());
    for (int a = 0; a < n1; ++a) {
        double th1 = std::acos(g1.nodes[a]);
        double w1 = g1.weights[a] * (1.0 - g1.nodes[a] * g1.nodes[a]) * r4;
        for (int b = 0; b < n2; ++b) {
            double th2 = std::acos(g2.nodes[b]);
            for (int c = 0; c < n3; ++c) {
                double th3 = std::acos(g3.nodes[c]);
                for (int r = 0; r < nphi; ++r) {
                    double phi = 2.0 * kPi * r / nphi;
                    g.chart.push_back({th1, th2, th3, phi});
                    wv.push_back(w1 * g2.weights[b] * g3.weights[c] * (2.0 * kPi / nphi));
                }
            }
        }
    }
    g.weights = Eigen::Map<Eigen::VectorXd>(wv.data(), static_cast<Eigen::Index>(wv.size()));
    for (int a = 0; a < n1; ++a) g.axis_nodes[0].push_back(std::acos(g1.nodes[a]));
    for (int b = 0; b < n2; ++b) g.axis_nodes[1].push_back(std::acos(g2.nodes[b]));
    for (int c = 0; c < n3; ++c) g.axis_nodes[2].push_back(std::acos(g3.nodes[c]));
    for (int r = 0; r < nphi; ++r) g.axis_nodes[3].push_back(2.0 * kPi * r / nphi);
    g.embed.reserve(g.chart.size());
    for (const auto& p : g.chart) g.embed.push_back(sphere_embed(p, 1.0));
    return g;
}

Eigen::VectorXd ModelManifold::synthesize_on(const FineGrid& g, const Eigen::VectorXd& coeff) const {
    const ModelManifold& m = metric_model();
    if (m.kind == ManifoldKind::Torus) {
        const auto* tb = dynamic_cast<const TorusBasis*>(m.basis.get());
        return tb->synthesize_product(coeff, g.axis_nodes[0]);
    }
    const auto* sb = dynamic_cast<const SphereBasis*>(m.basis.get());
    return sb->synthesize_product(coeff, g.axis_nodes[0], g.axis_nodes[1], g.axis_nodes[2],
                                  g.axis_nodes[3]);
}

// --- ScalarField -------------------------------------------------------------

ScalarField ScalarField::from_nodal(ManifoldPtr M, Eigen::VectorXd nodal) {
    ScalarField f;
    f.M_ = std::move(M);
    f.coeff_ = f.M_->metric_model().basis->analyze(nodal);
    f.nodal_ = std::move(nodal);
    return f;
}

ScalarField ScalarField::from_coeff(ManifoldPtr M, Eigen::VectorXd coeff) {
    ScalarField f;
    f.M_ = std::move(M);
    f.nodal_ = f.M_->metric_model().basis->synthesize(coeff);
    f.coeff_ = std::move(coeff);
    return f;
}

ScalarField ScalarField::constant(ManifoldPtr M, double c) {
    Eigen::VectorXd n = Eigen::VectorXd::Constant(M->node_count(), c);
    return from_nodal(std::move(M), std::move(n));
}

double ScalarField::mean() const { return integrate(*this) / M_->volume; }

ScalarField ScalarField::operator+(const ScalarField& o) const {
    if (M_ != o.M_) throw std::invalid_argument("field arithmetic: manifold mismatch");
    ScalarField f;
    f.M_ = M_;
    f.nodal_ = nodal_ + o.nodal_;
    f.coeff_ = coeff_ + o.coeff_;
    return f;
}

ScalarField ScalarField::operator-(const ScalarField& o) const { return *this + (o * -1.0); }

ScalarField ScalarField::operator*(double a) const {
    ScalarField f;
    f.M_ = M_;
    f.nodal_ = nodal_ * a;
    f.coeff_ = coeff_ * a;
    return f;
}

ScalarField ScalarField::operator+(double c) const {
    ScalarField f;
    f.M_ = M_;
    f.nodal_ = nodal_.array() + c;
    // adding a constant only moves the constant-mode coefficient
    f.coeff_ = coeff_;
    const ModelManifold& m = M_->metric_model();
    Eigen::VectorXd cn = Eigen::VectorXd::Constant(m.node_count(), c);
    f.coeff_ += m.basis->analyze(cn);
    return f;
}

// --- factories and operations -------------------------------------------------

ManifoldPtr build_manifold(const ManifoldSpec& spec) {
    if (spec.resolution < 4)
        throw std::invalid_argument("build_manifold: resolution must be at least 4");
    auto M = std::make_shared<ModelManifold>();
    M->resolution = spec.resolution;
    if (spec.kind == "torus") {
        M->kind = ManifoldKind::Torus;
        auto basis = std::make_shared<TorusBasis>(spec.resolution);
        M->basis = basis;
        const int n = spec.resolution;
        const double w1 = 2.0 * kPi / n;
        const double w = w1 * w1 * w1 * w1;
        M->node_chart.reserve(static_cast<std::size_t>(n) * n * n * n);
        for (int i1 = 0; i1 < n; ++i1)
            for (int i2 = 0; i2 < n; ++i2)
                for (int i3 = 0; i3 < n; ++i3)
                    for (int i4 = 0; i4 < n; ++i4)
                        M->node_chart.push_back({2.0 * kPi * i1 / n, 2.0 * kPi * i2 / n,
                                                 2.0 * kPi * i3 / n, 2.0 * kPi * i4 / n});
        M->weights = Eigen::VectorXd::Constant(basis->node_count(), w);
        M->euler_char = 0;
        M->scalar_curv = 0.0;
        M->ricci_factor = 0.0;
    } else if (spec.kind == "sphere") {
        if (spec.radius <= 0) throw std::invalid_argument("build_manifold: radius must be positive");
        M->kind = ManifoldKind::Sphere;
        M->radius = spec.radius;
        auto basis = std::make_shared<SphereBasis>(spec.resolution, spec.radius);
        M->basis = basis;
        const auto& t1 = basis->grid_theta1();
        const auto& t2 = basis->grid_theta2();
        const auto& t3 = basis->grid_theta3();
        const auto& ph = basis->grid_phi();
        M->node_chart.reserve(static_cast<std::size_t>(basis->node_count()));
        for (double th1 : t1)
            for (double th2 : t2)
                for (double th3 : t3)
                    for (double phi : ph) M->node_chart.push_back({th1, th2, th3, phi});
        // weights: recompute the product (the basis keeps the level weights internally)
        const int L = spec.resolution;
        Rule1D g1 = gauss_legendre(L + 2);
        Rule1D g2 = gauss_chebyshev2(L + 1);
        Rule1D g3 = gauss_legendre(L + 1);
        const int nphi = 2 * L + 1;
        const double r4 = std::pow(spec.radius, 4);
        M->weights.resize(basis->node_count());
        int idx = 0;
        for (int a = 0; a < L + 2; ++a) {
            double w1 = g1.weights[a] * (1.0 - g1.nodes[a] * g1.nodes[a]) * r4;
            for (int b = 0; b < L + 1; ++b)
                for (int c = 0; c < L + 1; ++c)
                    for (int r = 0; r < nphi; ++r)
                        M->weights[idx++] = w1 * g2.weights[b] * g3.weights[c] * (2.0 * kPi / nphi);
        }
        M->node_embed.reserve(M->node_chart.size());
        for (const auto& p : M->node_chart) M->node_embed.push_back(sphere_embed(p, 1.0));
        M->euler_char = 2;
        M->scalar_curv = 12.0 / (spec.radius * spec.radius);
        M->ricci_factor = 3.0 / (spec.radius * spec.radius);
    } else {
        throw std::invalid_argument("build_manifold: unknown kind '" + spec.kind + "'");
    }
    M->volume = M->weights.sum();
    return M;
}

double integrate_nodal(const ModelManifold& M, const Eigen::VectorXd& nodal) {
    if (nodal.size() != M.weights.size()) throw std::invalid_argument("integrate: size mismatch");
    return M.weights.dot(nodal);
}

double integrate(const ScalarField& u) {
    if (u.empty()) throw std::invalid_argument("integrate: empty field");
    return integrate_nodal(*u.manifold(), u.nodal());
}

double geodesic_distance(const PointOnM& p, const PointOnM& q) {
    if (!p.M || p.M != q.M)
        throw std::invalid_argument("geodesic_distance: points from different manifolds");
    return p.M->distance(p.x, q.x);
}

PointOnM riemannian_center(std::span<const PointOnM> pts, std::span<const double> weights,
                           bool enforce_spread) {
    if (pts.empty()) throw std::invalid_argument("riemannian_center: no points");
    if (pts.size() != weights.size())
        throw std::invalid_argument("riemannian_center: weight count mismatch");
    ManifoldPtr M = pts[0].M;
    double wsum = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        if (pts[i].M != M) throw std::invalid_argument("riemannian_center: manifold mismatch");
        if (weights[i] < -1e-15) throw std::invalid_argument("riemannian_center: negative weight");
        wsum += weights[i];
    }
    if (std::abs(wsum - 1.0) > 1e-9)
        throw std::invalid_argument("riemannian_center: weights must sum to 1");
    if (enforce_spread) {
        const double lim = M->injectivity_radius() / 4.0;
        for (std::size_t i = 0; i < pts.size(); ++i)
            for (std::size_t j = i + 1; j < pts.size(); ++j)
                if (M->distance(pts[i].x, pts[j].x) >= lim)
                    throw std::invalid_argument("riemannian_center: cluster spread too large");
    }
    // start from the heaviest point
    std::size_t start = 0;
    for (std::size_t i = 1; i < pts.size(); ++i)
        if (weights[i] > weights[start]) start = i;
    Chart c = pts[start].x;
    for (int it = 0; it < 50; ++it) {
        Tangent v = Tangent::Zero();
        for (std::size_t i = 0; i < pts.size(); ++i)
            if (weights[i] > 0) v += weights[i] * M->log_map(c, pts[i].x);
        c = M->exp_map(c, v);
        if (v.norm() < 1e-12) break;
    }
    return PointOnM{M->canonical(c), M};
}

PointOnM geodesic_point(const PointOnM& a, const PointOnM& b, double t) {
    if (!a.M || a.M != b.M) throw std::invalid_argument("geodesic_point: manifold mismatch");
    Tangent v = a.M->log_map(a.x, b.x);
    return PointOnM{a.M->exp_map(a.x, t * v), a.M};
}

ManifoldPtr conformal_rescale(ManifoldPtr M, const ScalarField& w) {
    if (w.manifold() != M) throw std::invalid_argument("conformal_rescale: field on wrong manifold");
    ManifoldPtr base = M->base ? M->base : M;
    Eigen::VectorXd w_nodal = w.nodal();
    if (M->base) w_nodal += M->conf_w_nodal;  // compose conformal factors

    auto R = std::make_shared<ModelManifold>();
    R->kind = ManifoldKind::Conformal;
    R->resolution = base->resolution;
    R->radius = base->radius;
    R->basis = base->basis;
    R->node_chart = base->node_chart;
    R->node_embed = base->node_embed;
    R->euler_char = base->euler_char;
    R->base = base;
    R->conf_w_nodal = w_nodal;
    R->conf_w_coeff = base->basis->analyze(w_nodal);
    R->conf_e4w = (4.0 * w_nodal.array()).exp();
    R->weights = base->weights.cwiseProduct(R->conf_e4w);
    R->volume = R->weights.sum();
    R->scalar_curv = std::numeric_limits<double>::quiet_NaN();
    R->ricci_factor = std::numeric_limits<double>::quiet_NaN();
    return R;
}

} // namespace qcurv
