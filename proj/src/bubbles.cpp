#include "qcurv/bubbles.hpp"

#include <cmath>
#include <stdexcept>

#include "qcurv/quadrature.hpp"

namespace qcurv {

namespace {

constexpr double kPi = 3.14159265358979323846;

// quintic blend on [delta, 2 delta]: p(s) = 1 + s + 4 s^3 - 7 s^4 + 3 s^5,
// p' = (1-s)^2 (15 s^2 + 2 s + 1) >= 0, so chi is monotone and C^2
double blend_p(double s) { return 1.0 + s + s * s * s * (4.0 + s * (-7.0 + 3.0 * s)); }
double blend_p1(double s) { return 1.0 + s * s * (12.0 + s * (-28.0 + 15.0 * s)); }
double blend_p2(double s) { return s * (24.0 + s * (-84.0 + 60.0 * s)); }

struct RadialGeometry {
    bool torus;
    double a;  // sphere radius

    double area(double r) const {
        if (torus) return 2.0 * kPi * kPi * r * r * r;
        double s = std::sin(r / a);
        return 2.0 * kPi * kPi * a * a * a * s * s * s;
    }
    double ball_volume(double R) const {
        if (torus) return 0.5 * kPi * kPi * R * R * R * R;
        double x = std::cos(R / a);
        return 2.0 * kPi * kPi * a * a * a * a * (2.0 / 3.0 - x + x * x * x / 3.0);
    }
    // first-order coefficient of the radial Laplacian
    double lap_coef(double r) const {
        if (torus) return 3.0 / r;
        return 3.0 / (a * std::tan(r / a));
    }
};

RadialGeometry radial_geometry(const ModelManifold& M) {
    const ModelManifold& m = M.metric_model();
    return RadialGeometry{m.kind == ManifoldKind::Torus, m.radius};
}

// Radial quadrature with panels refined toward zero and split at the
// cutoff knots (the integrands are piecewise smooth with kinks at delta
// and 2 delta).
template <class F>
double radial_integral(const F& f, double R, double delta, double inner_scale, int pts = 14) {
    double total = integrate_layered(f, 0.0, std::min(R, delta), inner_scale, pts);
    if (R > delta) {
        double hi = std::min(R, 2.0 * delta);
        const int panels = 8;
        for (int p = 0; p < panels; ++p) {
            double a = delta + (hi - delta) * p / panels;
            double b = delta + (hi - delta) * (p + 1) / panels;
            Rule1D r = gauss_legendre_on(pts, a, b);
            for (std::size_t i = 0; i < r.size(); ++i) total += r.weights[i] * f(r.nodes[i]);
        }
    }
    if (R > 2.0 * delta) {
        Rule1D r = gauss_legendre_on(pts, 2.0 * delta, R);
        for (std::size_t i = 0; i < r.size(); ++i) total += r.weights[i] * f(r.nodes[i]);
    }
    return total;
}

// single-atom profile and derivatives in the geodesic distance r
struct Profile {
    double lambda, delta;
    double value(double r) const {
        double chi = chi_delta(r, delta);
        double b = 1.0 + lambda * lambda * chi * chi;
        double f = 2.0 * lambda / b;
        return f * f * f * f;
    }
    // d/dr and d^2/dr^2 of value
    void derivs(double r, double& A, double& A1, double& A2) const {
        double chi = chi_delta(r, delta);
        double c1 = chi_delta_d1(r, delta);
        double c2 = chi_delta_d2(r, delta);
        double l2 = lambda * lambda;
        double b = 1.0 + l2 * chi * chi;
        double p = 2.0 * lambda;
        double p4 = p * p * p * p;
        A = p4 / (b * b * b * b);
        double db = 2.0 * l2 * chi * c1;
        double d2b = 2.0 * l2 * (c1 * c1 + chi * c2);
        A1 = -4.0 * p4 / (b * b * b * b * b) * db;
        A2 = p4 * (20.0 * db * db / (b * b * b * b * b * b) - 4.0 * d2b / (b * b * b * b * b));
    }
};

// merged bubble clusters with the exact separation the radial reduction needs
struct BubbleGeometry {
    std::vector<PointOnM> centers;
    std::vector<double> weights;
    double c_far;
};

BubbleGeometry prepare(const ModelManifold& M, const BubbleConfig& cfg, bool need_separation) {
    if (cfg.lambda <= 0 || cfg.delta <= 0) throw std::invalid_argument("bubble: lambda, delta > 0");
    if (2.0 * cfg.delta >= M.injectivity_radius())
        throw std::invalid_argument("bubble: 2 delta must stay below the injectivity radius");
    Barycenter s = canonical_form(cfg.sigma, 1e-9);
    BubbleGeometry g;
    g.centers = s.atoms;
    g.weights = s.weights;
    double b = 1.0 + 4.0 * cfg.lambda * cfg.lambda * cfg.delta * cfg.delta;
    double f = 2.0 * cfg.lambda / b;
    g.c_far = f * f * f * f;
    if (need_separation) {
        for (std::size_t i = 0; i < g.centers.size(); ++i)
            for (std::size_t j = i + 1; j < g.centers.size(); ++j)
                if (geodesic_distance(g.centers[i], g.centers[j]) < 4.0 * cfg.delta)
                    throw std::invalid_argument(
                        "bubble analytics: atom clusters must be separated by 4 delta");
    }
    return g;
}

// S^3 product rule (weights sum to 2 pi^2) and a tangent frame, for ball
// integrals of smooth-times-radial integrands
struct AngularRule {
    std::vector<std::array<double, 4>> dirs;
    std::vector<double> w;
};

const AngularRule& angular_rule() {
    static AngularRule rule = [] {
        AngularRule r;
        const int na = 5, nb = 5, nc = 10;
        Rule1D ga = gauss_chebyshev2(na);  // cos(alpha), weight sin^2
        Rule1D gb = gauss_legendre(nb);    // cos(beta), weight sin
        for (int i = 0; i < na; ++i) {
            double ca = ga.nodes[i], sa = std::sqrt(std::max(0.0, 1 - ca * ca));
            for (int j = 0; j < nb; ++j) {
                double cb = gb.nodes[j], sb = std::sqrt(std::max(0.0, 1 - cb * cb));
                for (int k = 0; k < nc; ++k) {
                    double gam = 2.0 * kPi * k / nc;
                    r.dirs.push_back({ca, sa * cb, sa * sb * std::cos(gam), sa * sb * std::sin(gam)});
                    r.w.push_back(ga.weights[i] * gb.weights[j] * (2.0 * kPi / nc));
                }
            }
        }
        return r;
    }();
    return rule;
}

std::array<Tangent, 4> frame_at(const ModelManifold& M, const Chart& x) {
    const ModelManifold& m = M.metric_model();
    std::array<Tangent, 4> f;
    if (m.kind == ManifoldKind::Torus) {
        for (int i = 0; i < 4; ++i) {
            f[i] = Tangent::Zero();
            f[i][i] = 1.0;
        }
        return f;
    }
    Vec5 e = m.embed(x);
    int have = 0;
    for (int seed = 0; seed < 5 && have < 4; ++seed) {
        Tangent v = Tangent::Zero();
        v[seed] = 1.0;
        v -= v.dot(e) * e;
        for (int j = 0; j < have; ++j) v -= v.dot(f[j]) * f[j];
        double n = v.norm();
        if (n > 1e-6) {
            f[have++] = v / n;
        }
    }
    if (have < 4) throw std::runtime_error("frame_at: degenerate frame");
    return f;
}

// int_{B_R(x)} g(y) h(d(y,x)) dV via radial panels and the S^3 rule,
// splitting the radial panels at the cutoff knots
template <class G, class H>
double ball_integral(const ModelManifold& M, const Chart& x, double R, double delta,
                     double inner_scale, const G& g, const H& h) {
    const ModelManifold& m = M.metric_model();
    RadialGeometry geo = radial_geometry(m);
    const AngularRule& ang = angular_rule();
    auto frame = frame_at(m, x);
    auto shell = [&](double r) {
        double s = 0.0;
        for (std::size_t q = 0; q < ang.dirs.size(); ++q) {
            Tangent v = Tangent::Zero();
            for (int c = 0; c < 4; ++c) v += ang.dirs[q][c] * frame[c];
            Chart y = m.exp_map(x, r * v);
            s += ang.w[q] * g(y);
        }
        return h(r) * geo.area(r) / (2.0 * kPi * kPi) * s;
    };
    return radial_integral(shell, R, delta, inner_scale, 12);
}

double ls_slope(const std::vector<double>& x, const std::vector<double>& y) {
    const int n = static_cast<int>(x.size());
    double mx = 0, my = 0;
    for (int i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double num = 0, den = 0;
    for (int i = 0; i < n; ++i) {
        num += (x[i] - mx) * (y[i] - my);
        den += (x[i] - mx) * (x[i] - mx);
    }
    return num / den;
}

} // namespace

double chi_delta(double t, double delta) {
    if (t < 0) throw std::invalid_argument("chi_delta: t >= 0 required");
    if (t <= delta) return t;
    if (t >= 2.0 * delta) return 2.0 * delta;
    return delta * blend_p((t - delta) / delta);
}

double chi_delta_d1(double t, double delta) {
    if (t <= delta) return 1.0;
    if (t >= 2.0 * delta) return 0.0;
    return blend_p1((t - delta) / delta);
}

double chi_delta_d2(double t, double delta) {
    if (t <= delta || t >= 2.0 * delta) return 0.0;
    return blend_p2((t - delta) / delta) / delta;
}

double bubble_far_value(const BubbleConfig& cfg) {
    return std::log(2.0 * cfg.lambda / (1.0 + 4.0 * cfg.lambda * cfg.lambda * cfg.delta * cfg.delta));
}

double bubble_value(const ModelManifold& M, const BubbleConfig& cfg, const Chart& y) {
    const ModelManifold& m = M.metric_model();
    Profile prof{cfg.lambda, cfg.delta};
    double s = 0.0;
    for (int i = 0; i < cfg.sigma.size(); ++i)
        s += cfg.sigma.weights[i] * prof.value(m.distance(y, cfg.sigma.atoms[i].x));
    return 0.25 * std::log(s);
}

Eigen::VectorXd bubble_on(const ModelManifold& M, const BubbleConfig& cfg,
                          const std::vector<Chart>& pts) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(pts.size()));
    for (std::size_t i = 0; i < pts.size(); ++i)
        out[static_cast<Eigen::Index>(i)] = bubble_value(M, cfg, pts[i]);
    return out;
}

ScalarField bubble(ManifoldPtr M, const BubbleConfig& cfg) {
    prepare(*M, cfg, false);  // validates scales
    return ScalarField::from_nodal(M, bubble_on(*M, cfg, M->node_chart));
}

DiscreteMeasure bubble_measure(const ModelManifold& M, const FineGrid& g, const BubbleConfig& cfg,
                               double core_radius) {
    BubbleGeometry bg = prepare(M, cfg, true);
    const ModelManifold& m = M.metric_model();
    RadialGeometry geo = radial_geometry(m);
    Profile prof{cfg.lambda, cfg.delta};
    double h_grid = (m.kind == ManifoldKind::Torus)
                        ? 2.0 * kPi / g.axis_nodes[0].size()
                        : kPi / g.axis_nodes[0].size();
    double rc = core_radius > 0 ? core_radius
                                : std::min(cfg.delta, std::max(3.0 / cfg.lambda, 2.0 * h_grid));
    DiscreteMeasure mu;
    mu.points = g.chart;
    mu.mass.resize(g.weights.size());
    for (Eigen::Index i = 0; i < g.weights.size(); ++i) {
        bool core = false;
        for (const auto& ctr : bg.centers)
            if (m.distance(g.chart[i], ctr.x) < rc) {
                core = true;
                break;
            }
        mu.mass[i] = core ? 0.0
                          : g.weights[i] * std::exp(4.0 * bubble_value(M, cfg, g.chart[i]));
    }
    const double scale = std::min(cfg.delta, 1.0 / cfg.lambda);
    for (std::size_t j = 0; j < bg.centers.size(); ++j) {
        double t = bg.weights[j];
        double core_mass = radial_integral(
            [&](double r) {
                double G = t * prof.value(r) + (1.0 - t) * bg.c_far;
                return G * geo.area(r);
            },
            rc, cfg.delta, scale);
        mu.points.push_back(bg.centers[j].x);
        Eigen::VectorXd grown(mu.mass.size() + 1);
        grown.head(mu.mass.size()) = mu.mass;
        grown[mu.mass.size()] = core_mass;
        mu.mass = grown;
    }
    mu.mass /= mu.mass.sum();
    return mu;
}

double bubble_mass(const ModelManifold& M, const BubbleConfig& cfg, double exponent) {
    BubbleGeometry g = prepare(M, cfg, true);
    RadialGeometry geo = radial_geometry(M);
    const double R = 2.0 * cfg.delta;
    double far = std::pow(g.c_far, exponent) *
                 (M.metric_model().volume - geo.ball_volume(R) * static_cast<double>(g.centers.size()));
    Profile prof{cfg.lambda, cfg.delta};
    double total = far;
    const double scale = std::min(cfg.delta, 1.0 / cfg.lambda);
    for (std::size_t j = 0; j < g.centers.size(); ++j) {
        double t = g.weights[j];
        total += radial_integral(
            [&](double r) {
                double G = t * prof.value(r) + (1.0 - t) * g.c_far;
                return std::pow(G, exponent) * geo.area(r);
            },
            R, cfg.delta, scale);
    }
    return total;
}

double bubble_integral(const ModelManifold& M, const BubbleConfig& cfg) {
    BubbleGeometry g = prepare(M, cfg, true);
    RadialGeometry geo = radial_geometry(M);
    const double R = 2.0 * cfg.delta;
    const double far = bubble_far_value(cfg);
    Profile prof{cfg.lambda, cfg.delta};
    double total = far * M.metric_model().volume;
    const double scale = std::min(cfg.delta, 1.0 / cfg.lambda);
    for (std::size_t j = 0; j < g.centers.size(); ++j) {
        double t = g.weights[j];
        total += radial_integral(
            [&](double r) {
                double G = t * prof.value(r) + (1.0 - t) * g.c_far;
                return (0.25 * std::log(G) - far) * geo.area(r);
            },
            R, cfg.delta, scale);
    }
    return total;
}

double bubble_pairing(const OperatorModel& op, const BubbleConfig& cfg) {
    const ModelManifold& M = *op.manifold();
    const ModelManifold& m = M.metric_model();
    BubbleGeometry g = prepare(M, cfg, true);
    RadialGeometry geo = radial_geometry(M);
    if (M.kind == ManifoldKind::Conformal)
        throw std::invalid_argument("bubble_pairing: conformal metrics not supported");
    const double grad_coef = 2.0 * m.ricci_factor - (2.0 / 3.0) * m.scalar_curv;
    const double R = 2.0 * cfg.delta;
    Profile prof{cfg.lambda, cfg.delta};
    double total = 0.0;
    const double scale = std::min(cfg.delta, 1.0 / cfg.lambda) / 4.0;
    for (std::size_t j = 0; j < g.centers.size(); ++j) {
        double t = g.weights[j];
        total += radial_integral(
            [&](double r) {
                double A, A1, A2;
                prof.derivs(r, A, A1, A2);
                double G = t * A + (1.0 - t) * g.c_far;
                double G1 = t * A1;
                double G2 = t * A2;
                double f1 = G1 / (4.0 * G);
                double f2 = (G2 * G - G1 * G1) / (4.0 * G * G);
                double lap = f2 + geo.lap_coef(r) * f1;
                return (lap * lap + grad_coef * f1 * f1) * geo.area(r);
            },
            R, cfg.delta, scale);
    }
    return total;
}

double bubble_q_integral(const ModelManifold& M, const CurvatureData& q, const BubbleConfig& cfg) {
    BubbleGeometry g = prepare(M, cfg, true);
    const ModelManifold& m = M.metric_model();
    const double far = bubble_far_value(cfg);
    const double R = 2.0 * cfg.delta;
    Profile prof{cfg.lambda, cfg.delta};
    const double scale = std::min(cfg.delta, 1.0 / cfg.lambda);

    const double qmin = q.q_nodal.minCoeff(), qmax = q.q_nodal.maxCoeff();
    const bool q_const = (qmax - qmin) <= 1e-12 * std::max(1.0, std::abs(qmax));
    double total = far * q.k_p;
    if (q_const) {
        const double qbar = 0.5 * (qmin + qmax);
        RadialGeometry geo = radial_geometry(m);
        for (std::size_t j = 0; j < g.centers.size(); ++j) {
            double t = g.weights[j];
            total += qbar * radial_integral(
                                [&](double r) {
                                    double G = t * prof.value(r) + (1.0 - t) * g.c_far;
                                    return (0.25 * std::log(G) - far) * geo.area(r);
                                },
                                R, cfg.delta, scale);
        }
        return total;
    }
    Eigen::VectorXd qc = m.basis->analyze(q.q_nodal);
    for (std::size_t j = 0; j < g.centers.size(); ++j) {
        double t = g.weights[j];
        total += ball_integral(
            m, g.centers[j].x, R, cfg.delta, scale,
            [&](const Chart& y) { return m.basis->eval_field(qc, y); },
            [&](double r) {
                double G = t * prof.value(r) + (1.0 - t) * g.c_far;
                return 0.25 * std::log(G) - far;
            });
    }
    return total;
}

Eigen::VectorXd bubble_eigen_pairings(const OperatorModel& op, const BubbleConfig& cfg) {
    const ModelManifold& M = *op.manifold();
    const ModelManifold& m = M.metric_model();
    const auto& np = op.negative_part();
    Eigen::VectorXd out = Eigen::VectorXd::Zero(np.k_bar);
    if (np.k_bar == 0) return out;
    BubbleGeometry g = prepare(M, cfg, true);
    const double far = bubble_far_value(cfg);
    const double R = 2.0 * cfg.delta;
    Profile prof{cfg.lambda, cfg.delta};
    const double scale = std::min(cfg.delta, 1.0 / cfg.lambda);
    for (int i = 0; i < np.k_bar; ++i) {
        const Eigen::VectorXd& vc = np.eigenfields[i].coeff();
        double s = 0.0;  // the far constant integrates to zero against vhat_i
        for (std::size_t j = 0; j < g.centers.size(); ++j) {
            double t = g.weights[j];
            s += ball_integral(
                m, g.centers[j].x, R, cfg.delta, scale,
                [&](const Chart& y) { return m.basis->eval_field(vc, y); },
                [&](double r) {
                    double G = t * prof.value(r) + (1.0 - t) * g.c_far;
                    return 0.25 * std::log(G) - far;
                });
        }
        out[i] = s;
    }
    return out;
}

double bubble_adams_gap(const OperatorModel& op, const BubbleConfig& cfg) {
    const ModelManifold& M = *op.manifold();
    double mass = bubble_mass(M, cfg);
    double mean = bubble_integral(M, cfg) / M.metric_model().volume;
    double log_mass_centered = std::log(mass) - 4.0 * mean;
    double pair = bubble_pairing(op, cfg);
    const auto& np = op.negative_part();
    if (np.k_bar > 0) {
        Eigen::VectorXd a = bubble_eigen_pairings(op, cfg);
        for (int i = 0; i < np.k_bar; ++i) pair += 2.0 * std::abs(np.eigenvalues[i]) * a[i] * a[i];
    }
    return log_mass_centered - pair / (8.0 * kPi * kPi);
}

// --- composite fields -----------------------------------------------------------

ScalarField phi_s(const OperatorModel& op, const Eigen::VectorXd& s, double s_bar) {
    const auto& np = op.negative_part();
    if (np.k_bar == 0) throw std::invalid_argument("phi_s: operator has no negative eigenvalues");
    if (s.size() != np.k_bar) throw std::invalid_argument("phi_s: dimension mismatch");
    ScalarField f = ScalarField::constant(op.manifold(), 0.0);
    for (int i = 0; i < np.k_bar; ++i) f = f + np.eigenfields[i] * (s_bar * s[i]);
    return f;
}

TestField big_phi(const OperatorModel& op, const TestMapConfig& cfg, const Barycenter& sigma) {
    const double ns = cfg.s.size() ? cfg.s.norm() : 0.0;
    if (ns > 1.0 + 1e-12) throw std::invalid_argument("big_phi: |s| <= 1 required");
    if (cfg.lambda_bar < 1.0) throw std::invalid_argument("big_phi: lambda_bar >= 1 required");
    if (cfg.s.size() != 0 && cfg.s.size() != op.k_bar())
        throw std::invalid_argument("big_phi: s dimension must match the negative eigencount");
    TestField f;
    f.s_amplitudes = cfg.s_bar * cfg.s;
    f.bubble.sigma = sigma;
    f.bubble.delta = cfg.delta;
    if (ns <= 0.25) {
        f.bubble.lambda = cfg.lambda_bar;
        f.bubble_coef = 1.0;
        f.constant = 0.0;
    } else if (ns <= 0.5) {
        f.bubble.lambda = 2.0 * cfg.lambda_bar - 1.0 + 4.0 * (1.0 - cfg.lambda_bar) * ns;
        f.bubble_coef = 1.0;
        f.constant = 0.0;
    } else {
        f.bubble.lambda = 1.0;
        f.bubble_coef = 2.0 - 2.0 * ns;
        f.constant = 2.0 * ns - 1.0;
    }
    return f;
}

ScalarField materialize(const OperatorModel& op, const TestField& f, double t_scale) {
    const ManifoldPtr& M = op.manifold();
    Eigen::VectorXd nodal = Eigen::VectorXd::Constant(M->node_count(), f.constant);
    if (f.bubble_coef != 0.0)
        nodal += f.bubble_coef * bubble_on(*M, f.bubble, M->node_chart);
    const auto& np = op.negative_part();
    for (int i = 0; i < f.s_amplitudes.size() && i < np.k_bar; ++i)
        nodal += f.s_amplitudes[i] * np.eigenfields[i].nodal();
    return ScalarField::from_nodal(M, t_scale * nodal);
}

EnergyBreakdown test_field_energy(const OperatorModel& op, const CurvatureData& q,
                                  const TestField& f, double t_scale, double rho) {
    const ModelManifold& M = *op.manifold();
    const ModelManifold& m = M.metric_model();
    const auto& np = op.negative_part();
    const double t = t_scale;
    const double c = f.bubble_coef;
    const int kb = static_cast<int>(f.s_amplitudes.size());

    Eigen::VectorXd eig = (kb > 0 && c != 0.0) ? bubble_eigen_pairings(op, f.bubble)
                                               : Eigen::VectorXd::Zero(kb);
    EnergyBreakdown e;
    double quad = (c != 0.0) ? c * c * bubble_pairing(op, f.bubble) : 0.0;
    for (int i = 0; i < kb; ++i) {
        quad += np.eigenvalues[i] * f.s_amplitudes[i] * f.s_amplitudes[i];
        quad += 2.0 * c * f.s_amplitudes[i] * np.eigenvalues[i] * eig[i];
    }
    e.quadratic = t * t * quad;

    double lin = f.constant * q.k_p;
    if (c != 0.0) lin += c * bubble_q_integral(M, q, f.bubble);
    for (int i = 0; i < kb; ++i)
        lin += f.s_amplitudes[i] * integrate_nodal(M, q.q_nodal.cwiseProduct(np.eigenfields[i].nodal()));
    e.linear = 4.0 * rho * t * lin;

    // log int e^{4 t (phi_s + c phi + const)}
    double logm;
    if (c == 0.0) {
        Eigen::VectorXd expo = Eigen::VectorXd::Constant(M.node_count(), 4.0 * t * f.constant);
        for (int i = 0; i < kb; ++i) expo += 4.0 * t * f.s_amplitudes[i] * np.eigenfields[i].nodal();
        logm = log_integral_exp4(M, expo / 4.0);
    } else {
        BubbleGeometry g = prepare(M, f.bubble, true);
        Profile prof{f.bubble.lambda, f.bubble.delta};
        const double R = 2.0 * f.bubble.delta;
        const double scale = std::min(f.bubble.delta, 1.0 / f.bubble.lambda);
        const double ex = t * c;  // exponent on the atom profiles
        // smooth factor e^{4 t phi_s} on the nodes
        Eigen::VectorXd smooth = Eigen::VectorXd::Zero(M.node_count());
        for (int i = 0; i < kb; ++i) smooth += 4.0 * t * f.s_amplitudes[i] * np.eigenfields[i].nodal();
        Eigen::VectorXd smooth_exp = smooth.array().exp();
        double total = std::pow(g.c_far, ex) * integrate_nodal(M, smooth_exp);
        Eigen::VectorXd sc = (kb > 0) ? m.basis->analyze(smooth_exp) : Eigen::VectorXd();
        for (std::size_t j = 0; j < g.centers.size(); ++j) {
            double tw = g.weights[j];
            auto h = [&](double r) {
                double G = tw * prof.value(r) + (1.0 - tw) * g.c_far;
                return std::pow(G, ex) - std::pow(g.c_far, ex);
            };
            if (kb > 0) {
                total += ball_integral(m, g.centers[j].x, R, f.bubble.delta, scale,
                                       [&](const Chart& y) { return m.basis->eval_field(sc, y); }, h);
            } else {
                RadialGeometry geo = radial_geometry(m);
                total += radial_integral([&](double r) { return h(r) * geo.area(r); }, R,
                                         f.bubble.delta, scale);
            }
        }
        logm = std::log(total) + 4.0 * t * f.constant;
    }
    e.logterm = -rho * q.k_p * logm;
    e.total = e.quadratic + e.linear + e.logterm;
    return e;
}

EstimateSuiteReport estimate_suite(const OperatorModel& op, const CurvatureData& q,
                                   const TestMapConfig& cfg, const Barycenter& sigma,
                                   const std::vector<double>& lambda_grid) {
    if (lambda_grid.size() < 2) throw std::invalid_argument("estimate_suite: grid too short");
    const ModelManifold& M = *op.manifold();
    const auto& np = op.negative_part();
    EstimateSuiteReport rep;
    std::vector<double> logl, qs, pairs, logm;
    for (double lam : lambda_grid) {
        TestField f;
        f.bubble = BubbleConfig{sigma, lam, cfg.delta};
        f.bubble_coef = 1.0;
        f.s_amplitudes = cfg.s_bar * cfg.s;
        EstimateSuiteRow row;
        row.lambda = lam;
        row.q_term = bubble_q_integral(M, q, f.bubble);
        double quad = bubble_pairing(op, f.bubble);
        Eigen::VectorXd eig = (np.k_bar > 0) ? bubble_eigen_pairings(op, f.bubble)
                                             : Eigen::VectorXd();
        for (int i = 0; i < np.k_bar && i < f.s_amplitudes.size(); ++i) {
            row.q_term += f.s_amplitudes[i] *
                          integrate_nodal(M, q.q_nodal.cwiseProduct(np.eigenfields[i].nodal()));
            quad += np.eigenvalues[i] * f.s_amplitudes[i] * f.s_amplitudes[i] +
                    2.0 * f.s_amplitudes[i] * np.eigenvalues[i] * eig[i];
        }
        row.pairing = quad;
        EnergyBreakdown e = test_field_energy(op, q, f, 1.0, 1.0);
        row.log_mass = -e.logterm / std::max(q.k_p, 1e-300);
        if (q.k_p <= 0) {
            // recover the log mass directly when the curvature integral vanishes
            TestField f1 = f;
            CurvatureData unit;
            unit.q_nodal = Eigen::VectorXd::Zero(M.node_count());
            unit.k_p = 1.0;
            row.log_mass = -test_field_energy(op, unit, f1, 1.0, 1.0).logterm;
        }
        rep.rows.push_back(row);
        logl.push_back(std::log(lam));
        qs.push_back(row.q_term);
        pairs.push_back(row.pairing);
        logm.push_back(row.log_mass);
    }
    rep.q_slope = ls_slope(logl, qs);
    rep.pairing_slope = ls_slope(logl, pairs);
    rep.log_mass_drift =
        *std::max_element(logm.begin(), logm.end()) - *std::min_element(logm.begin(), logm.end());
    return rep;
}

double energy_slope(const OperatorModel& op, const Barycenter& sigma, double delta,
                    const std::vector<double>& lambda_grid) {
    if (lambda_grid.size() < 4) throw std::invalid_argument("energy_slope: need at least 4 grid points");
    for (int i = 0; i < sigma.size(); ++i) {
        if (sigma.weights[i] < 0.1)
            throw std::invalid_argument("energy_slope: weights below 0.1");
        for (int j = i + 1; j < sigma.size(); ++j)
            if (geodesic_distance(sigma.atoms[i], sigma.atoms[j]) < 10.0 * delta)
                throw std::invalid_argument("energy_slope: atoms closer than 10 delta");
    }
    std::vector<double> x, y;
    for (double lam : lambda_grid) {
        x.push_back(std::log(lam));
        y.push_back(bubble_pairing(op, BubbleConfig{sigma, lam, delta}));
    }
    return ls_slope(x, y);
}

double eigen_pairing_decay(const OperatorModel& op, const Barycenter& sigma, double lambda,
                           double delta) {
    if (op.k_bar() == 0) return 0.0;
    Eigen::VectorXd a = bubble_eigen_pairings(op, BubbleConfig{sigma, lambda, delta});
    return a.lpNorm<Eigen::Infinity>();
}

} // namespace qcurv
