#include <doctest.h>

#include <cmath>
#include <random>

#include "qcurv/bubbles.hpp"

using namespace qcurv;

namespace {
constexpr double kPi = 3.14159265358979323846;

Barycenter one_atom(ManifoldPtr M, const Chart& x) {
    return make_barycenter({PointOnM{x, M}}, {1.0});
}

Barycenter antipodal_pair(ManifoldPtr S, const Chart& x, double wa = 0.5) {
    Chart y{kPi - x[0], kPi - x[1], kPi - x[2], std::fmod(x[3] + kPi, 2 * kPi)};
    return make_barycenter({PointOnM{x, S}, PointOnM{y, S}}, {wa, 1.0 - wa});
}
} // namespace

TEST_CASE("chi cutoff: boundary values, monotonicity, C2 smoothness") {
    const double d = 0.13;
    CHECK(chi_delta(0.0, d) == 0.0);
    CHECK(chi_delta(3.0 * d, d) == 2.0 * d);
    CHECK(chi_delta(0.5 * d, d) == 0.5 * d);
    double prev = -1.0;
    for (int i = 0; i <= 4000; ++i) {
        double t = 3.0 * d * i / 4000.0;
        double v = chi_delta(t, d);
        CHECK(v >= prev - 1e-15);
        CHECK(chi_delta_d1(t, d) >= -1e-12);
        prev = v;
    }
    // derivative continuity across the knots (absolute tolerances: the
    // second derivative vanishes at both knots)
    for (double knot : {d, 2.0 * d}) {
        double h = 1e-7;
        CHECK(std::abs(chi_delta_d1(knot - h, d) - chi_delta_d1(knot + h, d)) < 1e-5);
        CHECK(std::abs(chi_delta_d2(knot - h, d) - chi_delta_d2(knot + h, d)) < 1e-3);
        // FD of chi' matches chi''
        double fd = (chi_delta_d1(knot + 2 * h, d) - chi_delta_d1(knot + h, d)) / h;
        CHECK(std::abs(fd - chi_delta_d2(knot + 1.5 * h, d)) < 1e-3);
    }
}

TEST_CASE("bubble values: peak, far field, field materialization") {
    auto S = build_manifold({"sphere", 8, 1.0});
    Chart x{1.3, 1.2, 2.0, 0.7};
    BubbleConfig cfg{one_atom(S, x), 150.0, 0.1};
    CHECK(bubble_value(*S, cfg, x) == doctest::Approx(std::log(2.0 * cfg.lambda)).epsilon(1e-12));
    Chart far{kPi - 1.3, kPi - 1.2, kPi - 2.0, 0.7 + kPi};
    CHECK(bubble_value(*S, cfg, far) == doctest::Approx(bubble_far_value(cfg)).epsilon(1e-10));
    auto f = bubble(S, cfg);
    CHECK(f.nodal().size() == S->node_count());
    // node values are the exact pointwise values
    for (int i = 0; i < S->node_count(); i += 631)
        CHECK(f.nodal()[i] == doctest::Approx(bubble_value(*S, cfg, S->node_chart[i])).epsilon(1e-12));
}

TEST_CASE("bubble mass: 8 pi^2 / 3 at lambda = 200, delta = 0.2") {
    auto S = build_manifold({"sphere", 8, 1.0});
    BubbleConfig cfg{one_atom(S, {1.3, 1.2, 2.0, 0.7}), 200.0, 0.2};
    double mass = bubble_mass(*S, cfg);
    CHECK(std::abs(mass - 8.0 * kPi * kPi / 3.0) / (8.0 * kPi * kPi / 3.0) < 0.05);
}

TEST_CASE("bubble mass: exact additivity over atoms") {
    auto S = build_manifold({"sphere", 8, 1.0});
    const double lam = 120.0, del = 0.05;
    auto sigma = antipodal_pair(S, {1.3, 1.2, 2.0, 0.7}, 0.3);
    double multi = bubble_mass(*S, BubbleConfig{sigma, lam, del});
    double single = bubble_mass(*S, BubbleConfig{one_atom(S, {1.3, 1.2, 2.0, 0.7}), lam, del});
    // e^{4 phi} is the weighted sum of identical atom profiles
    CHECK(multi == doctest::Approx(single).epsilon(1e-9));
}

TEST_CASE("analytics agree with the spectral path at resolvable scales") {
    auto S = build_manifold({"sphere", 12, 1.0});
    auto q = q_curvature(*S);
    Chart x{1.3, 1.2, 2.0, 0.7};
    BubbleConfig cfg{one_atom(S, x), 0.5, 0.3};  // scale 1/lambda = 2, fully resolvable
    auto f = bubble(S, cfg);

    double mass_exact = bubble_mass(*S, cfg);
    double mass_grid = std::exp(log_integral_exp4(*S, f.nodal()));
    CHECK(mass_exact == doctest::Approx(mass_grid).epsilon(1e-4));

    double qint_exact = bubble_q_integral(*S, q, cfg);
    double qint_grid = integrate_nodal(*S, q.q_nodal.cwiseProduct(f.nodal()));
    CHECK(qint_exact == doctest::Approx(qint_grid).epsilon(1e-4));

    double int_exact = bubble_integral(*S, cfg);
    CHECK(int_exact == doctest::Approx(integrate_nodal(*S, f.nodal())).epsilon(1e-4));
}

TEST_CASE("bubble pairing against a brute-force radial oracle") {
    // finite differences of the exact profile on a dense radial mesh; the
    // spectral route cannot serve as the oracle here because the quartic
    // energy weighs the cutoff's C^2 tail heavily
    auto S = build_manifold({"sphere", 8, 1.0});
    auto op = OperatorModel::geometric(S);
    Chart x{1.3, 1.2, 2.0, 0.7};
    for (double lam : {0.5, 5.0, 50.0}) {
        BubbleConfig cfg{one_atom(S, x), lam, 0.3};
        auto prof = [&](double r) {
            double chi = chi_delta(r, cfg.delta);
            double b = 1 + lam * lam * chi * chi;
            return std::log(2 * lam / b);  // = 1/4 log (2l/b)^4
        };
        const int N = 600000;
        const double R = 2 * cfg.delta, h = R / N;
        double brute = 0.0;
        for (int i = 1; i < N; ++i) {
            double r = i * h;
            double p1 = (prof(r + h) - prof(r - h)) / (2 * h);
            double p2 = (prof(r + h) - 2 * prof(r) + prof(r - h)) / (h * h);
            double lap = p2 + 3.0 / std::tan(r) * p1;
            double kpi2 = 2 * kPi * kPi;
            brute += (lap * lap - 2.0 * p1 * p1) * kpi2 * std::pow(std::sin(r), 3) * h;
        }
        CHECK(bubble_pairing(op, cfg) == doctest::Approx(brute).epsilon(1e-4));
    }

    // torus: flat radial Laplacian
    auto T = build_manifold({"torus", 8, 1.0});
    auto opT = OperatorModel::geometric(T);
    BubbleConfig cfgT{one_atom(T, {3.0, 2.0, 4.0, 1.0}), 20.0, 0.25};
    auto profT = [&](double r) {
        double chi = chi_delta(r, cfgT.delta);
        return std::log(2 * cfgT.lambda / (1 + cfgT.lambda * cfgT.lambda * chi * chi));
    };
    const int N = 600000;
    const double R = 0.5, h = R / N;
    double brute = 0.0;
    for (int i = 1; i < N; ++i) {
        double r = i * h;
        double p1 = (profT(r + h) - profT(r - h)) / (2 * h);
        double p2 = (profT(r + h) - 2 * profT(r) + profT(r - h)) / (h * h);
        double lap = p2 + 3.0 / r * p1;
        brute += lap * lap * 2 * kPi * kPi * r * r * r * h;
    }
    CHECK(bubble_pairing(opT, cfgT) == doctest::Approx(brute).epsilon(1e-4));
}

TEST_CASE("eigen pairings agree with the spectral path at resolvable scales") {
    auto T = build_manifold({"torus", 16, 1.0});
    auto pr = torus_axis_pair(*T, 0, 1);
    auto op = synthetic_operator(T, {{pr[0], -2.0}, {pr[1], -2.0}});
    BubbleConfig cfg{one_atom(T, {3.0, 2.0, 4.0, 1.0}), 0.8, 0.4};
    auto f = bubble(T, cfg);
    Eigen::VectorXd exact = bubble_eigen_pairings(op, cfg);
    Eigen::VectorXd grid = op.v_components(f);
    CHECK((exact - grid).lpNorm<Eigen::Infinity>() < 1e-5);
}

TEST_CASE("energy growth: fitted pairing slope in the 32 k pi^2 band") {
    std::vector<double> grid{50, 100, 200, 400, 800};
    const double unit = 32.0 * kPi * kPi;

    auto S = build_manifold({"sphere", 8, 1.0});
    auto opS = OperatorModel::geometric(S);
    double s1 = energy_slope(opS, one_atom(S, {1.3, 1.2, 2.0, 0.7}), 0.1, grid);
    CHECK(s1 >= 0.8 * unit);
    CHECK(s1 <= 1.1 * unit);

    double s2 = energy_slope(opS, antipodal_pair(S, {1.3, 1.2, 2.0, 0.7}), 0.1, grid);
    CHECK(s2 >= 0.8 * 2.0 * unit);
    CHECK(s2 <= 1.1 * 2.0 * unit);

    auto T = build_manifold({"torus", 8, 1.0});
    auto opT = OperatorModel::geometric(T);
    double s3 = energy_slope(opT, one_atom(T, {3.0, 2.0, 4.0, 1.0}), 0.1, grid);
    CHECK(s3 >= 0.8 * unit);
    CHECK(s3 <= 1.1 * unit);

    // preconditions enforced
    CHECK_THROWS(energy_slope(opS, one_atom(S, {1.3, 1.2, 2.0, 0.7}), 0.1, {50, 100}));
    CHECK_THROWS(energy_slope(opS, antipodal_pair(S, {1.3, 1.2, 2.0, 0.7}, 0.95), 0.1, grid));
}

TEST_CASE("estimate suite: Q-term slope -k_P and bounded log mass") {
    auto S = build_manifold({"sphere", 8, 1.0});
    auto op = OperatorModel::geometric(S);
    auto q = q_curvature(*S);
    TestMapConfig cfg;
    cfg.delta = 0.1;
    cfg.s = Eigen::VectorXd();
    cfg.s_bar = 0.0;
    // the lambda grid honors the bubble regime lambda * delta >= 10
    auto rep = estimate_suite(op, q, cfg, one_atom(S, {1.3, 1.2, 2.0, 0.7}),
                              {100, 200, 400, 800});
    CHECK(std::abs(rep.q_slope + q.k_p) < 0.10 * q.k_p);
    CHECK(rep.log_mass_drift <= 0.5);
    CHECK(rep.pairing_slope > 0.0);

    // torus with k_P = 0: flat Q-term
    auto T = build_manifold({"torus", 8, 1.0});
    auto opT = OperatorModel::geometric(T);
    auto qT = q_curvature(*T);
    auto repT = estimate_suite(opT, qT, cfg, one_atom(T, {3.0, 2.0, 4.0, 1.0}),
                               {50, 100, 200, 400});
    CHECK(std::abs(repT.q_slope) < 1e-8);
}

TEST_CASE("eigen pairing decay: lambda-stable and O(delta^4)") {
    auto T = build_manifold({"torus", 8, 1.0});
    auto pr = torus_axis_pair(*T, 0, 1);
    auto op = synthetic_operator(T, {{pr[0], -2.0}, {pr[1], -2.0}});
    auto sigma = one_atom(T, {3.0, 2.0, 4.0, 1.0});

    // lambda decade at fixed delta moves the pairing by less than 2x
    double p100 = eigen_pairing_decay(op, sigma, 100.0, 0.1);
    double p800 = eigen_pairing_decay(op, sigma, 800.0, 0.1);
    CHECK(p800 / p100 < 2.0);
    CHECK(p100 / p800 < 2.0);

    // log-log slope in delta near 4
    std::vector<double> deltas{0.05, 0.1, 0.2};
    std::vector<double> lx, ly;
    for (double d : deltas) {
        lx.push_back(std::log(d));
        ly.push_back(std::log(eigen_pairing_decay(op, sigma, 400.0, d)));
    }
    double num = 0, den = 0, mx = (lx[0] + lx[1] + lx[2]) / 3, my = (ly[0] + ly[1] + ly[2]) / 3;
    for (int i = 0; i < 3; ++i) {
        num += (lx[i] - mx) * (ly[i] - my);
        den += (lx[i] - mx) * (lx[i] - mx);
    }
    double slope = num / den;
    CHECK(slope > 3.3);
    CHECK(slope < 4.7);

    // k_bar = 0 convention
    auto opg = OperatorModel::geometric(T);
    CHECK(eigen_pairing_decay(opg, sigma, 100.0, 0.1) == 0.0);
}

TEST_CASE("phi_s: spectral identity and zero mean") {
    auto T = build_manifold({"torus", 8, 1.0});
    auto pr = torus_axis_pair(*T, 0, 1);
    auto op = synthetic_operator(T, {{pr[0], -2.0}, {pr[1], -1.5}});
    Eigen::VectorXd s(2);
    s << 0.6, -0.3;
    const double sbar = 10.0;
    auto f = phi_s(op, s, sbar);
    CHECK(std::abs(f.mean()) < 1e-10);
    const auto& np = op.negative_part();
    double expected = 0.0;
    for (int i = 0; i < 2; ++i) expected += np.eigenvalues[i] * sbar * sbar * s[i] * s[i];
    CHECK(op.pairing(f, f) == doctest::Approx(expected).epsilon(1e-9));
    CHECK(expected <= -std::abs(np.eigenvalues[1]) * s.squaredNorm() * sbar * sbar + 1e-9);
    // zero direction and absent negative spectrum are rejected
    auto opg = OperatorModel::geometric(T);
    CHECK_THROWS(phi_s(opg, s, sbar));
}

TEST_CASE("big_phi: branch continuity and sigma-independence at the boundary") {
    auto T = build_manifold({"torus", 8, 1.0});
    auto pr = torus_axis_pair(*T, 0, 1);
    auto op = synthetic_operator(T, {{pr[0], -2.0}, {pr[1], -1.5}});
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0, 2 * kPi);
    TestMapConfig cfg;
    cfg.s_bar = 5.0;
    cfg.lambda_bar = 50.0;
    cfg.delta = 0.2;

    for (double seam : {0.25, 0.5}) {
        for (int trial = 0; trial < 5; ++trial) {
            auto sigma = one_atom(T, {u(rng), u(rng), u(rng), u(rng)});
            Eigen::VectorXd dir(2);
            dir << 0.8, 0.6;
            cfg.s = (seam - 1e-9) * dir;
            auto below = materialize(op, big_phi(op, cfg, sigma));
            cfg.s = (seam + 1e-9) * dir;
            auto above = materialize(op, big_phi(op, cfg, sigma));
            CHECK((below.nodal() - above.nodal()).lpNorm<Eigen::Infinity>() < 1e-6);
        }
    }

    // |s| = 1 is sigma-independent: phi_s + 1
    Eigen::VectorXd dir(2);
    dir << 0.6, -0.8;
    cfg.s = dir;
    auto f1 = materialize(op, big_phi(op, cfg, one_atom(T, {1, 2, 3, 4})));
    auto f2 = materialize(op, big_phi(op, cfg, one_atom(T, {4, 3, 2, 1})));
    CHECK((f1.nodal() - f2.nodal()).lpNorm<Eigen::Infinity>() < 1e-12);
    auto ps = phi_s(op, dir, cfg.s_bar);
    CHECK((f1.nodal() - ps.nodal()).maxCoeff() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK((f1.nodal() - ps.nodal()).minCoeff() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("test field energy matches a finer-grid direct energy") {
    // the exact analytics are grid-free; the direct spectral energy converges
    // to them as the band grows (the quartic energy weighs the tail by k^4,
    // so the finest affordable grid sets the comparison tolerance)
    auto T = build_manifold({"torus", 16, 1.0});
    auto pr = torus_axis_pair(*T, 0, 1);
    auto op = synthetic_operator(T, {{pr[0], -2.0}, {pr[1], -1.5}});
    CurvatureData q;
    q.q_nodal = Eigen::VectorXd::Constant(T->node_count(), 12 * kPi * kPi / T->volume);
    q.k_p = 12 * kPi * kPi;

    TestField f;
    f.bubble = BubbleConfig{one_atom(T, {3.0, 2.0, 4.0, 1.0}), 0.5, 0.6};
    f.bubble_coef = 0.7;
    f.s_amplitudes = Eigen::VectorXd(2);
    f.s_amplitudes << 1.2, -0.4;
    f.constant = 0.3;

    for (double t : {1.0, 0.6}) {
        auto direct = energy_rho(op, q, materialize(op, f, t), 1.03);
        auto exact = test_field_energy(op, q, f, t, 1.03);
        // the quadratic block is validated by its own brute-force oracle; the
        // remaining terms converge on the grid
        double quad_parts = f.bubble_coef * f.bubble_coef * bubble_pairing(op, f.bubble);
        const auto& np = op.negative_part();
        Eigen::VectorXd eig = bubble_eigen_pairings(op, f.bubble);
        for (int i = 0; i < np.k_bar; ++i)
            quad_parts += np.eigenvalues[i] * f.s_amplitudes[i] * f.s_amplitudes[i] +
                          2.0 * f.bubble_coef * f.s_amplitudes[i] * np.eigenvalues[i] * eig[i];
        CHECK(exact.quadratic == doctest::Approx(t * t * quad_parts).epsilon(1e-10));
        CHECK(exact.linear == doctest::Approx(direct.linear).epsilon(1e-4));
        CHECK(exact.logterm == doctest::Approx(direct.logterm).epsilon(1e-5));
    }
}

TEST_CASE("II along the bubble family decreases when k_P exceeds 8 k pi^2") {
    auto S = build_manifold({"sphere", 8, 1.0});
    auto op = OperatorModel::geometric(S);
    // synthetic curvature with k_P = 12 pi^2, k = 1 band
    CurvatureData q;
    q.q_nodal = Eigen::VectorXd::Constant(S->node_count(), 12 * kPi * kPi / S->volume);
    q.k_p = 12 * kPi * kPi;
    auto sigma = one_atom(S, {1.3, 1.2, 2.0, 0.7});
    std::vector<double> lams{100, 200, 400, 800};
    std::vector<double> vals;
    for (double lam : lams) {
        TestField f;
        f.bubble = BubbleConfig{sigma, lam, 0.1};
        f.s_amplitudes = Eigen::VectorXd();
        vals.push_back(test_field_energy(op, q, f).total);
    }
    for (std::size_t i = 1; i < vals.size(); ++i) CHECK(vals[i] < vals[i - 1]);
    // slope at the tail at least half of 4 k_P - 32 pi^2
    double tail_slope = (vals.back() - vals[vals.size() - 2]) / std::log(2.0);
    CHECK(tail_slope <= -0.5 * (4.0 * q.k_p - 32.0 * kPi * kPi));
}

TEST_CASE("adams gap stays bounded along the bubble family") {
    auto S = build_manifold({"sphere", 8, 1.0});
    auto op = OperatorModel::geometric(S);
    auto sigma = one_atom(S, {1.3, 1.2, 2.0, 0.7});
    std::vector<double> lams{50, 100, 200, 400, 800};
    std::vector<double> gaps, pairs;
    for (double lam : lams) {
        BubbleConfig cfg{sigma, lam, 0.1};
        gaps.push_back(bubble_adams_gap(op, cfg));
        pairs.push_back(bubble_pairing(op, cfg));
    }
    double g0 = gaps[0];
    for (double g : gaps) CHECK(g <= g0 + 1.0);
    double spread = *std::max_element(gaps.begin(), gaps.end()) -
                    *std::min_element(gaps.begin(), gaps.end());
    CHECK(spread <= 2.0);
    // the quadratic term itself grows like 32 pi^2 log lambda
    double growth = (pairs.back() - pairs.front()) / (std::log(800.0) - std::log(50.0));
    CHECK(growth >= 0.8 * 32.0 * kPi * kPi);
}
