#include <doctest.h>

#include <cmath>
#include <random>

#include "qcurv/barycenter.hpp"
#include "qcurv/bubbles.hpp"

using namespace qcurv;

namespace {
constexpr double kPi = 3.14159265358979323846;

Chart random_chart(const ModelManifold& M, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    if (M.metric_model().kind == ManifoldKind::Torus)
        return {2 * kPi * u(rng), 2 * kPi * u(rng), 2 * kPi * u(rng), 2 * kPi * u(rng)};
    std::normal_distribution<double> g(0.0, 1.0);
    Vec5 v;
    for (int i = 0; i < 5; ++i) v[i] = g(rng);
    v.normalize();
    Chart p{std::acos(std::clamp(v[4], -1.0, 1.0)), 0, 0, 0};
    double r1 = std::sqrt(std::max(0.0, 1 - v[4] * v[4]));
    p[1] = r1 > 1e-14 ? std::acos(std::clamp(v[3] / r1, -1.0, 1.0)) : 0.0;
    double r2 = r1 * std::sin(p[1]);
    p[2] = r2 > 1e-14 ? std::acos(std::clamp(v[2] / r2, -1.0, 1.0)) : 0.0;
    p[3] = std::atan2(v[1], v[0]);
    if (p[3] < 0) p[3] += 2 * kPi;
    return p;
}

Barycenter random_barycenter(ManifoldPtr M, int atoms, std::mt19937_64& rng, double min_sep = 0.0,
                             double min_weight = 0.02) {
    std::vector<PointOnM> pts;
    while (static_cast<int>(pts.size()) < atoms) {
        PointOnM p{random_chart(*M, rng), M};
        bool ok = true;
        for (const auto& q : pts)
            if (geodesic_distance(p, q) < min_sep) ok = false;
        if (ok) pts.push_back(p);
    }
    std::uniform_real_distribution<double> u(min_weight, 1.0);
    std::vector<double> w(atoms);
    double s = 0;
    for (auto& x : w) {
        x = u(rng);
        s += x;
    }
    for (auto& x : w) x /= s;
    renormalize_exact(w);
    return make_barycenter(std::move(pts), std::move(w), atoms);
}

PointOnM displaced(const PointOnM& p, double dist, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    Tangent v;
    for (int i = 0; i < 5; ++i) v[i] = g(rng);
    if (p.M->metric_model().kind == ManifoldKind::Torus) v[4] = 0;
    else {
        Vec5 e = p.M->embed(p.x);
        v -= v.dot(e) * e;
    }
    v *= dist / std::max(v.norm(), 1e-14);
    return PointOnM{p.M->exp_map(p.x, v), p.M};
}
} // namespace

TEST_CASE("bary_distance: closed forms") {
    auto S = build_manifold({"sphere", 5, 1.0});
    std::mt19937_64 rng(5);
    auto sigma = random_barycenter(S, 3, rng, 0.5);
    CHECK(bary_distance(sigma, sigma) == doctest::Approx(0.0).epsilon(1e-14));

    // two diracs: min(2, d)
    for (int t = 0; t < 10; ++t) {
        PointOnM x{random_chart(*S, rng), S}, y{random_chart(*S, rng), S};
        Barycenter a = make_barycenter({x}, {1.0});
        Barycenter b = make_barycenter({y}, {1.0});
        double d = geodesic_distance(x, y);
        CHECK(bary_distance(a, b) == doctest::Approx(std::min(2.0, d)).epsilon(1e-9));
    }
    // torus pair farther than 2 saturates at 2
    auto T = build_manifold({"torus", 6, 1.0});
    Barycenter ta = make_barycenter({PointOnM{{0, 0, 0, 0}, T}}, {1.0});
    Barycenter tb = make_barycenter({PointOnM{{kPi, kPi, kPi, kPi}, T}}, {1.0});
    CHECK(bary_distance(ta, tb) == doctest::Approx(2.0).epsilon(1e-10));

    // half mass moved distance 1 costs exactly 1/2
    PointOnM x{{1.0, 1.0, 1.0, 1.0}, S};
    PointOnM y = displaced(x, 1.0, rng);
    Barycenter two = make_barycenter({x, y}, {0.5, 0.5});
    Barycenter one = make_barycenter({x}, {1.0});
    CHECK(bary_distance(two, one) == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("bary_distance: metric axioms on random triples") {
    auto S = build_manifold({"sphere", 5, 1.0});
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<int> na(1, 3);
    for (int t = 0; t < 1000; ++t) {
        auto a = random_barycenter(S, na(rng), rng);
        auto b = random_barycenter(S, na(rng), rng);
        auto c = random_barycenter(S, na(rng), rng);
        double ab = bary_distance(a, b), ba = bary_distance(b, a);
        double ac = bary_distance(a, c), cb = bary_distance(c, b);
        CHECK(ab == doctest::Approx(ba).epsilon(1e-10));
        CHECK(ab >= -1e-12);
        CHECK(ab <= ac + cb + 1e-8);
    }
}

TEST_CASE("bary_distance vs dictionary oracle: dictionary never exceeds, within 2%") {
    auto S = build_manifold({"sphere", 5, 1.0});
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<int> na(1, 3);
    for (int t = 0; t < 40; ++t) {
        auto a = random_barycenter(S, na(rng), rng, 0.1);
        auto b = random_barycenter(S, na(rng), rng, 0.1);
        double lp = bary_distance(a, b);
        double dict = dictionary_lower_bound(a, b, 2000, rng);
        CHECK(dict <= lp + 1e-9);
        if (lp > 1e-6) CHECK(dict >= 0.98 * lp);
    }
}

TEST_CASE("stratum margin: two-atom example and the small-weight bound") {
    auto S = build_manifold({"sphere", 5, 1.0});
    std::mt19937_64 rng(13);
    PointOnM x{{1.0, 1.0, 1.0, 1.0}, S};
    PointOnM y = displaced(x, 1.0, rng);
    auto sigma = make_barycenter({x, y}, {0.5, 0.5});
    double d1 = stratum_margin(sigma, 1);
    CHECK(d1 <= 0.5 + 1e-9);
    CHECK(d1 >= 0.25 - 1e-9);
    // single atom is already in M_1
    CHECK(stratum_margin(make_barycenter({x}, {1.0}), 1) == 0.0);

    // one weight eps/4 forces margin <= eps/2
    const double eps = 0.2;
    auto thin = make_barycenter({x, y}, {1.0 - eps / 4.0, eps / 4.0});
    CHECK(stratum_margin(thin, 1) <= eps / 2.0 + 1e-9);
}

TEST_CASE("stratum bounds verdict and randomized implication") {
    auto S = build_manifold({"sphere", 5, 1.0});
    std::mt19937_64 rng(17);
    PointOnM x{{1.0, 1.0, 1.0, 1.0}, S};
    PointOnM y = displaced(x, 1.0, rng);
    auto good = make_barycenter({x, y}, {0.5, 0.5});
    auto v = check_stratum_bounds(good, 0.2);
    CHECK(v.applicable);
    CHECK(v.bounds_hold);
    CHECK(v.min_weight == doctest::Approx(0.5));

    auto skew = make_barycenter({x, y}, {0.99, 0.01});
    auto v2 = check_stratum_bounds(skew, 0.2);
    CHECK(!v2.applicable);  // margin <= 2 * 0.01 << 0.2
    CHECK(v2.margin <= 0.02 + 1e-9);

    // the margin-to-bounds implication holds over randomized barycenters
    std::uniform_int_distribution<int> na(2, 4);
    int checked = 0;
    for (int t = 0; t < 10000; ++t) {
        auto s = random_barycenter(S, na(rng), rng, 0.05, 0.01);
        auto verdict = check_stratum_bounds(s, 0.15);
        if (verdict.applicable) {
            ++checked;
            CHECK(verdict.bounds_hold);
        }
    }
    CHECK(checked > 100);  // the suite actually exercises the implication
}

TEST_CASE("homotopy T: the five properties on randomized configurations") {
    std::mt19937_64 rng(23);
    auto S = build_manifold({"sphere", 6, 1.0});
    auto T = build_manifold({"torus", 6, 1.0});
    int runs = 0;
    for (int trial = 0; trial < 120; ++trial) {
        ManifoldPtr M = (trial % 2 == 0) ? S : T;
        const int j = 1 + (trial % 2);
        HomotopyConfig hc;
        hc.eps = 0.2;
        const double eps_hat = hc.resolved();
        const double eta = std::min(hc.eta_resolved(), hc.eps / 8.0);

        // anchor element of M_j(eps) plus satellites and faint far atoms
        auto base = random_barycenter(M, j, rng, 1.0, 0.3);
        std::vector<PointOnM> atoms;
        std::vector<double> w;
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (int l = 0; l < j; ++l) {
            double split = 0.25 * u(rng);
            atoms.push_back(base.atoms[l]);
            w.push_back(base.weights[l] * (1.0 - split));
            atoms.push_back(displaced(base.atoms[l], eta / 20.0 * u(rng), rng));
            w.push_back(base.weights[l] * split);
        }
        // faint far atom, weight small enough to stay near the stratum
        atoms.push_back(displaced(base.atoms[0], 0.5, rng));
        w.push_back(eps_hat / 4.0);
        renormalize_exact(w);
        auto sigma = make_barycenter(atoms, w, 2 * j + 1);
        ++runs;

        // (i) identity at t = 0
        auto t0 = homotopy_T(sigma, j, 0.0, hc);
        CHECK(bary_distance(sigma, t0) < 1e-12);

        // weights sum to exactly 1 at every t
        for (double t : {0.0, 0.3, 0.7, 1.0}) {
            auto im = homotopy_T(sigma, j, t, hc);
            double sum = 0.0;
            for (double x : im.weights) sum += x;
            CHECK(sum == 1.0);
        }

        // (ii) lands in M_j(eps/2)
        auto t1 = homotopy_T(sigma, j, 1.0, hc);
        CHECK(t1.size() == j);
        if (j > 1) CHECK(stratum_margin(t1, j - 1) > hc.eps / 2.0);

        // (iii) displacement bound, fitted constant stable across eps_hat decades
        double disp = 0.0;
        for (double t : {0.25, 0.5, 0.75, 1.0})
            disp = std::max(disp, bary_distance(sigma, homotopy_T(sigma, j, t, hc)));
        CHECK(disp <= 10.0 * std::sqrt(eps_hat));

        // (v) elements of M_j are fixed
        auto fixed = homotopy_T(base, j, u(rng), hc);
        CHECK(bary_distance(base, fixed) < 1e-12);
    }
    CHECK(runs == 120);
}

TEST_CASE("homotopy displacement constant is stable across two eps_hat decades") {
    std::mt19937_64 rng(29);
    auto S = build_manifold({"sphere", 6, 1.0});
    for (int j : {1, 2}) {
        std::vector<double> fitted;
        for (double eps_hat : {1e-4, 1e-5}) {
            HomotopyConfig hc;
            hc.eps = 0.2;
            hc.eps_hat = eps_hat;
            const double eta = std::min(hc.eta_resolved(), hc.eps / 8.0);
            double cmax = 0.0;
            for (int trial = 0; trial < 30; ++trial) {
                auto base = random_barycenter(S, j, rng, 1.0, 0.3);
                std::vector<PointOnM> atoms;
                std::vector<double> w;
                std::uniform_real_distribution<double> u(0.0, 1.0);
                for (int l = 0; l < j; ++l) {
                    double split = 0.25 * u(rng);
                    atoms.push_back(base.atoms[l]);
                    w.push_back(base.weights[l] * (1.0 - split));
                    atoms.push_back(displaced(base.atoms[l], eta / 20.0 * u(rng), rng));
                    w.push_back(base.weights[l] * split);
                }
                atoms.push_back(displaced(base.atoms[0], 0.5, rng));
                w.push_back(eps_hat / 4.0);
                renormalize_exact(w);
                auto sigma = make_barycenter(atoms, w, 2 * j + 1);
                double disp = 0.0;
                for (double t : {0.5, 1.0})
                    disp = std::max(disp, bary_distance(sigma, homotopy_T(sigma, j, t, hc)));
                cmax = std::max(cmax, disp / std::sqrt(eps_hat));
            }
            fitted.push_back(cmax);
        }
        CHECK(fitted[0] / fitted[1] < 5.0);
        CHECK(fitted[1] / fitted[0] < 5.0);
    }
}

TEST_CASE("hat homotopy: endpoints and sampled continuity") {
    std::mt19937_64 rng(31);
    auto S = build_manifold({"sphere", 6, 1.0});
    HomotopyConfig hc;
    hc.eps = 0.2;
    const double eta = std::min(hc.eta_resolved(), hc.eps / 8.0);
    auto base = random_barycenter(S, 2, rng, 1.0, 0.3);
    std::vector<PointOnM> atoms{base.atoms[0], displaced(base.atoms[0], eta / 25.0, rng),
                                base.atoms[1]};
    std::vector<double> w{0.4, 0.2, 0.4};
    renormalize_exact(w);
    auto sigma = make_barycenter(atoms, w, 3);

    auto end = hat_homotopy(sigma, 2, 1.0, hc);
    auto proj = project_atomic(sigma, 2);
    CHECK(bary_distance(end, proj) < 1e-9);
    auto mid = hat_homotopy(sigma, 2, 0.5, hc);
    auto t1 = homotopy_T(sigma, 2, 1.0, hc);
    CHECK(bary_distance(mid, t1) < 1e-12);

    double prev_t = 0.0;
    auto prev = hat_homotopy(sigma, 2, 0.0, hc);
    double max_jump = 0.0;
    for (int s = 1; s <= 20; ++s) {
        double t = s / 20.0;
        auto cur = hat_homotopy(sigma, 2, t, hc);
        max_jump = std::max(max_jump, bary_distance(prev, cur) / (t - prev_t));
        prev = cur;
        prev_t = t;
    }
    CHECK(max_jump < 2.0);  // Lipschitz in t at the scale of the construction
}

TEST_CASE("project_density: peak recovery on a two-spike measure") {
    auto S = build_manifold({"sphere", 8, 1.0});
    auto G = S->fine_grid(2);
    Chart a{1.2, 1.3, 1.8, 0.4};
    Chart b{2.2, 2.0, 1.0, 3.9};
    REQUIRE(S->distance(a, b) > 1.0);
    auto target = make_barycenter({PointOnM{a, S}, PointOnM{b, S}}, {0.7, 0.3});
    auto mu = bubble_measure(*S, G, BubbleConfig{target, 60.0, 0.15});
    auto sigma = project_density(S, mu, 2);
    REQUIRE(sigma.size() == 2);
    int ia = S->distance(sigma.atoms[0].x, a) < S->distance(sigma.atoms[1].x, a) ? 0 : 1;
    CHECK(S->distance(sigma.atoms[ia].x, a) < 0.05);
    CHECK(S->distance(sigma.atoms[1 - ia].x, b) < 0.05);
    CHECK(sigma.weights[ia] == doctest::Approx(0.7).epsilon(0.03));

    // j = 1 on a one-bubble density lands at the density peak
    auto single = make_barycenter({PointOnM{a, S}}, {1.0});
    auto mu1 = bubble_measure(*S, G, BubbleConfig{single, 60.0, 0.15});
    auto one = project_density(S, mu1, 1);
    CHECK(S->distance(one.atoms[0].x, a) < 0.05);
    // collapsing a two-peak measure keeps the heavy peak
    auto collapsed = project_density(S, mu, 1);
    CHECK(S->distance(collapsed.atoms[0].x, a) < 0.2);
}

TEST_CASE("psi_hat cascade: stratum choice follows the mass split") {
    auto S = build_manifold({"sphere", 8, 1.0});
    auto G = S->fine_grid(2);
    Chart a{1.2, 1.3, 1.8, 0.4};
    Chart b{2.2, 2.0, 1.0, 3.9};
    auto measure_with = [&](double wa) {
        auto target = make_barycenter({PointOnM{a, S}, PointOnM{b, S}}, {wa, 1 - wa});
        return bubble_measure(*S, G, BubbleConfig{target, 120.0, 0.15});
    };

    PsiConfig cfg;
    cfg.k = 2;
    PsiTrace trace;
    auto even = psi_hat_measure(S, measure_with(0.5), cfg, &trace);
    CHECK(trace.chosen_j == 2);
    CHECK(even.size() == 2);
    CHECK(even.weights[0] == doctest::Approx(0.5).epsilon(0.1));

    auto skew = psi_hat_measure(S, measure_with(0.95), cfg, &trace);
    CHECK(trace.chosen_j == 1);
    CHECK(skew.size() == 1);
    CHECK(S->distance(skew.atoms[0].x, a) < 0.1);
    CHECK(!trace.to_json().empty());
}

TEST_CASE("s_vector and psi branches") {
    auto T = build_manifold({"torus", 8, 1.0});
    auto pair = torus_axis_pair(*T, 0, 1);
    auto op = synthetic_operator(T, {{pair[0], -2.0}, {pair[1], -2.0}});
    const auto& np = op.negative_part();
    REQUIRE(np.k_bar == 2);

    // s(u) of an eigenfield combination
    auto u = np.eigenfields[0] * 3.0;
    Eigen::VectorXd s = s_vector(op, u);
    CHECK(s[0] == doctest::Approx(3.0).epsilon(1e-10));
    CHECK(std::abs(s[1]) < 1e-10);

    // k_bar = 0 operator: empty vector
    auto opg = OperatorModel::geometric(T);
    CHECK(s_vector(opg, u).size() == 0);

    // orthogonal field maps to the zero vector
    Eigen::VectorXd c = Eigen::VectorXd::Zero(T->basis->size());
    c[torus_axis_pair(*T, 1, 2)[0]] = 1.0;
    CHECK(s_vector(op, ScalarField::from_coeff(T, c)).norm() < 1e-10);

    CurvatureData q;
    q.q_nodal = Eigen::VectorXd::Constant(T->node_count(), 12 * kPi * kPi / T->volume);
    q.k_p = 12 * kPi * kPi;
    PsiConfig cfg;
    cfg.k = 1;

    // |s| > 1: collapsed representative with the rescaled direction
    auto big = normalize_volume(np.eigenfields[0] * 4.0);
    auto pt = psi(op, q, big, cfg);
    CHECK(!pt.unit_sphere_mode);
    CHECK(pt.s.norm() == doctest::Approx(1.0));
    CHECK(pt.sigma.size() == 1);

    // low k_P regime returns only the unit vector
    CurvatureData qlow;
    qlow.q_nodal = Eigen::VectorXd::Constant(T->node_count(), 6 * kPi * kPi / T->volume);
    qlow.k_p = 6 * kPi * kPi;
    auto dir = psi(op, qlow, np.eigenfields[0] * 0.3, cfg);
    CHECK(dir.unit_sphere_mode);
    CHECK(dir.s[0] == doctest::Approx(1.0));
    CHECK_THROWS(psi(op, qlow, ScalarField::from_coeff(T, c), cfg));

    // seam: |s| slightly below 1 vs collapsed representative
    auto near = normalize_volume(np.eigenfields[0] * (1.0 - 1e-6));
    auto p1 = psi(op, q, near, cfg);
    AkkPoint p2;
    p2.sigma = collapsed_representative(T, 1);
    p2.s = Eigen::VectorXd::Zero(2);
    p2.s[0] = 1.0;
    CHECK(akk_distance(p1, p2) < 1e-3);
}

TEST_CASE("psi_hat round trip tightens along the bubble family") {
    auto S = build_manifold({"sphere", 8, 1.0});
    auto G = S->fine_grid(2);
    auto dict = spectral_dictionary_on(S, G, 24);
    Chart x{1.3, 1.2, 2.0, 0.7};
    auto sigma = make_barycenter({PointOnM{x, S}}, {1.0});
    PsiConfig pc;
    pc.k = 1;
    std::vector<double> dists;
    for (double lam : {100.0, 200.0, 400.0, 800.0}) {
        auto mu = bubble_measure(*S, G, BubbleConfig{sigma, lam, 0.2});
        dists.push_back(bary_distance(psi_hat_measure(S, mu, pc, nullptr, &dict), sigma));
    }
    for (std::size_t i = 1; i < dists.size(); ++i) CHECK(dists[i] <= dists[i - 1] + 0.01);
    CHECK(dists.back() <= 0.1);
}
