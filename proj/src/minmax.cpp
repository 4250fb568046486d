#include "qcurv/minmax.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace qcurv {

namespace {
constexpr double kPi = 3.14159265358979323846;

// matrix-free MINRES for a symmetric operator on coefficient space
template <class Op>
Eigen::VectorXd minres(const Op& apply, const Eigen::VectorXd& rhs, int max_iter, double tol) {
    const Eigen::Index n = rhs.size();
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd r = rhs;
    double beta = r.norm();
    if (beta < 1e-300) return x;
    Eigen::VectorXd v_old = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd v = r / beta;
    Eigen::VectorXd w = Eigen::VectorXd::Zero(n), w_old = Eigen::VectorXd::Zero(n);
    double eta = beta;
    double c_old = 1.0, c = 1.0, s_old = 0.0, s = 0.0;
    double beta_old = 0.0;
    double phibar = beta;
    for (int it = 0; it < max_iter; ++it) {
        Eigen::VectorXd p = apply(v);
        double alpha = v.dot(p);
        p -= alpha * v + beta * v_old;
        beta_old = beta;
        beta = p.norm();
        // Givens rotations
        double delta = c * alpha - c_old * s * beta_old;
        double rho1 = std::sqrt(delta * delta + beta * beta);
        double rho2 = s * alpha + c_old * c * beta_old;
        double rho3 = s_old * beta_old;
        c_old = c;
        s_old = s;
        c = delta / rho1;
        s = beta / rho1;
        Eigen::VectorXd w_new = (v - rho3 * w_old - rho2 * w) / rho1;
        x += c * phibar * w_new;
        phibar = -s * phibar;
        w_old = w;
        w = w_new;
        if (beta < 1e-300) break;
        v_old = v;
        v = p / beta;
        eta = std::abs(phibar);
        if (eta < tol) break;
    }
    (void)eta;
    return x;
}

double sup_norm(const Eigen::VectorXd& v) { return v.lpNorm<Eigen::Infinity>(); }
} // namespace

PathSimplex initial_path(const OperatorModel& op, const TestMapConfig& cfg,
                         const std::vector<Barycenter>& sigma_samples,
                         const std::vector<Eigen::VectorXd>& s_samples,
                         const std::vector<double>& t_grid) {
    if (sigma_samples.empty() || t_grid.empty())
        throw std::invalid_argument("initial_path: empty sampling");
    PathSimplex path;
    path.map_cfg = cfg;
    std::vector<Eigen::VectorXd> svals = s_samples;
    if (svals.empty()) svals.push_back(Eigen::VectorXd::Zero(0));
    for (const auto& sigma : sigma_samples) {
        for (const auto& s : svals) {
            TestMapConfig node_cfg = cfg;
            node_cfg.s = s;
            TestField f = big_phi(op, node_cfg, sigma);
            for (double t : t_grid) {
                PathNode node;
                node.sigma = sigma;
                node.s = s;
                node.t = t;
                node.field = f;
                path.nodes.push_back(std::move(node));
            }
        }
    }
    return path;
}

MinmaxEstimate minmax_value_estimate(const OperatorModel& op, const CurvatureData& q,
                                     const PathSimplex& path, double rho, int refine_budget) {
    MinmaxEstimate est;
    est.boundary_max = -std::numeric_limits<double>::infinity();
    est.interior_max = -std::numeric_limits<double>::infinity();

    // group nodes into fibers (shared parameter point z)
    struct Fiber {
        const PathNode* any;
        std::vector<double> ts;
    };
    std::vector<Fiber> fibers;
    for (const auto& n : path.nodes) {
        Fiber* hit = nullptr;
        for (auto& f : fibers)
            if (f.any->sigma.atoms.size() == n.sigma.atoms.size() &&
                (f.any->s - n.s).norm() < 1e-14 &&
                bary_distance(f.any->sigma, n.sigma) < 1e-12) {
                hit = &f;
                break;
            }
        if (!hit) {
            fibers.push_back(Fiber{&n, {}});
            hit = &fibers.back();
        }
        hit->ts.push_back(n.t);
        double v = test_field_energy(op, q, n.field, n.t, rho).total;
        if (n.t >= 1.0 - 1e-14)
            est.boundary_max = std::max(est.boundary_max, v);
        else
            est.interior_max = std::max(est.interior_max, v);
    }

    // per-fiber sup over the cone coordinate, refined by golden search around
    // the best sample; beta deforms the interior bubble scale toward 1 while
    // the boundary slice stays pinned at lambda_bar
    auto fiber_sup = [&](const Fiber& f, double beta) {
        auto value = [&](double t) {
            TestField g = f.any->field;
            if (g.bubble_coef != 0.0 && beta > 0.0) {
                double logl = std::log(g.bubble.lambda);
                g.bubble.lambda = std::exp(logl * (1.0 - beta * (1.0 - t)));
            }
            return test_field_energy(op, q, g, t, rho).total;
        };
        double best_t = 0.0, best_v = -std::numeric_limits<double>::infinity();
        for (double t : f.ts) {
            double v = value(t);
            if (v > best_v) {
                best_v = v;
                best_t = t;
            }
        }
        double lo = std::max(0.0, best_t - 0.25), hi = std::min(1.0, best_t + 0.25);
        const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
        double a = lo, b = hi;
        double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
        double f1 = value(x1), f2 = value(x2);
        for (int it = 0; it < 24; ++it) {
            if (f1 < f2) {  // maximize
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + gr * (b - a);
                f2 = value(x2);
            } else {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - gr * (b - a);
                f1 = value(x1);
            }
        }
        return std::max(best_v, std::max(f1, f2));
    };

    auto path_sup = [&](double beta) {
        double s = -std::numeric_limits<double>::infinity();
        for (const auto& f : fibers) s = std::max(s, fiber_sup(f, beta));
        return s;
    };

    est.initial_sup = path_sup(0.0);
    est.upper = est.initial_sup;
    for (int b = 1; b <= refine_budget; ++b) {
        double beta = static_cast<double>(b) / refine_budget;
        est.upper = std::min(est.upper, path_sup(beta));
        ++est.budget_used;
    }
    return est;
}

MonotonicityReport monotonicity_monitor(const std::vector<double>& rho_grid,
                                        const std::vector<double>& estimates,
                                        double noise_tolerance) {
    if (rho_grid.size() != estimates.size() || rho_grid.size() < 3)
        throw std::invalid_argument("monotonicity_monitor: need >= 3 grid points");
    MonotonicityReport rep;
    double c = 0.0;
    for (std::size_t i = 0; i + 1 < rho_grid.size(); ++i) {
        double r0 = rho_grid[i], r1 = rho_grid[i + 1];
        if (r1 <= r0) throw std::invalid_argument("monotonicity_monitor: grid must increase");
        double slope = (estimates[i + 1] / r1 - estimates[i] / r0) / (r1 - r0);
        c = std::max(c, slope);
    }
    rep.fitted_c = std::max(0.0, c);
    // audit: with the fitted C the map rho -> est/rho - C rho is non-increasing
    double worst = 0.0;
    for (std::size_t i = 0; i + 1 < rho_grid.size(); ++i) {
        double g0 = estimates[i] / rho_grid[i] - rep.fitted_c * rho_grid[i];
        double g1 = estimates[i + 1] / rho_grid[i + 1] - rep.fitted_c * rho_grid[i + 1];
        worst = std::max(worst, g1 - g0);
    }
    rep.worst_violation = worst;
    rep.ok = worst <= noise_tolerance;
    return rep;
}

SolveReport flow_solve(const OperatorModel& op, const CurvatureData& q, const ScalarField& u0,
                       double rho, const SolveConfig& cfg) {
    const ManifoldPtr& M = op.manifold();
    const Basis& B = *M->metric_model().basis;
    SolveReport rep;
    rep.rho = rho;
    ScalarField u = normalize_volume(u0);

    auto residual = [&](const ScalarField& w) { return euler_residual(op, q, w, rho); };
    // sup-norm of the band-limited part: the solvable component of the
    // residual (the pointwise remainder is quadrature aliasing of e^{4u},
    // which no band-limited iterate can remove)
    auto rnorm = [&](const ScalarField& r) { return sup_norm(B.synthesize(r.coeff())); };
    auto energy_of = [&](const ScalarField& w) { return energy_rho(op, q, w, rho).total; };

    Eigen::VectorXd precond(B.size());
    for (int i = 0; i < B.size(); ++i) precond[i] = 1.0 / (std::abs(op.symbol()[i]) + 1.0);

    double e = energy_of(u);
    double step = cfg.flow_step;
    ScalarField r = residual(u);
    rep.max_energy_increase = 0.0;
    double best_rn = std::numeric_limits<double>::infinity();
    int stagnant = 0;
    for (int it = 0; it < cfg.flow_iters; ++it) {
        double rn = rnorm(r);
        rep.residual_history.push_back(rn);
        rep.energy_history.push_back(e);
        rep.vnorm_history.push_back(op.v_components(u).norm());
        if (rn < cfg.flow_switch_tol) break;
        // hand over to Newton once the flow stops making residual progress
        if (rn < 0.7 * best_rn) {
            best_rn = rn;
            stagnant = 0;
        } else if (++stagnant > 2) {
            break;  // the polish handles critical points the flow cannot reach
        }
        if (rep.vnorm_history.back() > cfg.divergence_norm ||
            sup_norm(u.nodal()) > cfg.divergence_norm) {
            rep.status = "ps-unbounded";
            rep.u = u;
            rep.final_residual = rnorm(r);
            rep.holder_norm = holder_norm(*M, u, cfg.alpha, cfg.seed);
            rep.volume_defect = std::abs(std::exp(log_integral_exp4(*M, u.nodal())) - 1.0);
            return rep;
        }
        Eigen::VectorXd d = -precond.cwiseProduct(r.coeff());
        // trust bound: a single flow step moves the field by at most 0.25
        double dsup = sup_norm(B.synthesize(d));
        if (step * dsup > 0.25) step = 0.25 / dsup;
        bool accepted = false;
        for (int ls = 0; ls < 30; ++ls) {
            ScalarField trial = normalize_volume(
                ScalarField::from_coeff(M, u.coeff() + step * d));
            double et = energy_of(trial);
            if (et <= e + 1e-12) {
                rep.max_energy_increase = std::max(rep.max_energy_increase, et - e);
                u = trial;
                e = et;
                rep.max_volume_defect = std::max(
                    rep.max_volume_defect,
                    std::abs(std::exp(log_integral_exp4(*M, u.nodal())) - 1.0));
                accepted = true;
                if (ls == 0) step = std::min(step * 1.5, 64.0);
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;  // stagnated at line-search floor
        r = residual(u);
    }

    // Newton polish on the zero-mean complement (the residual annihilates
    // constants and integrates to zero)
    const double vol = M->volume;
    for (int it = 0; it < cfg.newton_iters; ++it) {
        r = residual(u);
        double rn = rnorm(r);
        rep.residual_history.push_back(rn);
        rep.energy_history.push_back(energy_of(u));
        rep.vnorm_history.push_back(op.v_components(u).norm());
        if (rn < cfg.newton_tol) break;
        Eigen::VectorXd e4u = (4.0 * u.nodal().array() - log_integral_exp4(*M, u.nodal())).exp();
        auto J = [&](const Eigen::VectorXd& v) {
            Eigen::VectorXd out = op.symbol().cwiseProduct(v);
            Eigen::VectorXd vn = B.synthesize(v);
            double mean_part = integrate_nodal(*M, e4u.cwiseProduct(vn));
            Eigen::VectorXd nl = e4u.cwiseProduct(vn) - e4u * mean_part;
            out += -8.0 * rho * q.k_p * B.analyze(nl);
            out[0] = v[0] * vol;  // pin the constant mode
            return out;
        };
        // symmetric spectral preconditioning: solve (D J D) y = D rhs, dv = D y
        Eigen::VectorXd dscale(B.size());
        for (int i = 0; i < B.size(); ++i)
            dscale[i] = 1.0 / std::sqrt(std::abs(op.symbol()[i]) + 8.0 * rho * q.k_p / vol + 1.0);
        auto Jp = [&](const Eigen::VectorXd& y) {
            return (dscale.cwiseProduct(J(dscale.cwiseProduct(y)))).eval();
        };
        Eigen::VectorXd rhs = -r.coeff();
        rhs[0] = 0.0;
        Eigen::VectorXd prhs = dscale.cwiseProduct(rhs);
        Eigen::VectorXd y = minres(Jp, prhs, cfg.minres_iters, 1e-13 * std::max(1.0, prhs.norm()));
        Eigen::VectorXd dv = dscale.cwiseProduct(y);
        dv[0] = 0.0;
        double damping = 1.0;
        bool ok = false;
        for (int ls = 0; ls < 20; ++ls) {
            ScalarField trial = normalize_volume(
                ScalarField::from_coeff(M, u.coeff() + damping * dv));
            if (rnorm(residual(trial)) < rn) {
                u = trial;
                rep.max_volume_defect = std::max(
                    rep.max_volume_defect,
                    std::abs(std::exp(log_integral_exp4(*M, u.nodal())) - 1.0));
                ok = true;
                break;
            }
            damping *= 0.5;
        }
        if (!ok) break;
    }

    r = residual(u);
    rep.final_residual = rnorm(r);
    rep.offband_residual = sup_norm(r.nodal() - B.synthesize(r.coeff()));
    rep.residual_history.push_back(rep.final_residual);
    rep.energy_history.push_back(energy_of(u));
    rep.vnorm_history.push_back(op.v_components(u).norm());
    rep.u = u;
    rep.volume_defect = std::abs(std::exp(log_integral_exp4(*M, u.nodal())) - 1.0);
    rep.holder_norm = holder_norm(*M, u, cfg.alpha, cfg.seed);
    rep.status = (rep.final_residual < cfg.newton_tol) ? "converged" : "max-iter";
    return rep;
}

double holder_norm(const ModelManifold& M, const ScalarField& u, double alpha, unsigned seed) {
    const ModelManifold& m = M.metric_model();
    const Eigen::VectorXd& v = u.nodal();
    double ubar = u.mean();
    double out = (v.array() - ubar).abs().maxCoeff();
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> pick(0, M.node_count() - 1);
    const int samples = std::min(20000, M.node_count() * 4);
    double quot = 0.0;
    for (int s = 0; s < samples; ++s) {
        int i = pick(rng), j = pick(rng);
        if (i == j) continue;
        double d = m.distance(M.node_chart[i], M.node_chart[j]);
        if (d < 1e-12) continue;
        quot = std::max(quot, std::abs(v[i] - v[j]) / std::pow(d, alpha));
    }
    return out + quot;
}

std::vector<SolveReport> continuation(const OperatorModel& op, const CurvatureData& q,
                                      const std::vector<double>& rho_grid, const SolveConfig& cfg,
                                      double forbidden_guard) {
    if (rho_grid.empty()) throw std::invalid_argument("continuation: empty grid");
    const double unit = 8.0 * kPi * kPi;
    for (double rho : rho_grid) {
        double v = rho * q.k_p;
        double nearest = std::round(v / unit);
        if (nearest >= 1.0 && std::abs(v - nearest * unit) < forbidden_guard)
            throw std::invalid_argument("continuation: rho = " + std::to_string(rho) +
                                        " puts rho k_P within the forbidden neighborhood of " +
                                        std::to_string(nearest * unit));
    }
    std::vector<SolveReport> out;
    ScalarField u = ScalarField::constant(op.manifold(), 0.0);
    for (double rho : rho_grid) {
        SolveReport rep = flow_solve(op, q, u, rho, cfg);
        if (rep.status == "converged") u = rep.u;  // warm start
        out.push_back(std::move(rep));
    }
    return out;
}

CurvatureData manufacture(const OperatorModel& op, const ScalarField& w_star, double k_p_target) {
    const ManifoldPtr& M = op.manifold();
    Eigen::VectorXd e4w = (4.0 * w_star.nodal().array()).exp();
    double mass = integrate_nodal(*M, e4w);
    double qbar = k_p_target / mass;
    Eigen::VectorXd pw = op.apply(w_star).nodal();
    CurvatureData cd;
    cd.q_nodal = qbar * e4w - 0.5 * pw;
    cd.k_p = M->weights.dot(cd.q_nodal);
    return cd;
}

PsBoundReport direct_ps_bound_check(const OperatorModel& op, const CurvatureData& q,
                                    const std::vector<ScalarField>& seq) {
    PsBoundReport rep;
    rep.adams_margin = 8.0 * kPi * kPi - q.k_p;
    if (q.k_p >= 8.0 * kPi * kPi) {
        rep.applicable = false;
        return rep;
    }
    rep.applicable = true;
    const ManifoldPtr& M = op.manifold();
    const Basis& B = *M->metric_model().basis;
    for (const auto& u : seq) {
        ScalarField uh = op.v_projection(u);
        double logm = log_integral_exp4(*M, u.nodal());
        Eigen::VectorXd dens = (4.0 * u.nodal().array() - logm).exp();
        double t1 = op.pairing(uh, uh) +
                    4.0 * integrate_nodal(*M, q.q_nodal.cwiseProduct(uh.nodal())) -
                    4.0 * q.k_p * integrate_nodal(*M, dens.cwiseProduct(uh.nodal()));
        rep.v_test.push_back(t1);
        rep.v_norm.push_back(op.v_components(u).norm());
        // spectral H^2 surrogate of ||u - ubar||
        double n2 = 0.0;
        for (int i = 1; i < B.size(); ++i) {
            double mu = B.minus_laplace(i);
            n2 += (1.0 + mu * mu) * u.coeff()[i] * u.coeff()[i];
        }
        rep.full_norm.push_back(std::sqrt(n2));
    }
    double vmax = 0.0;
    for (std::size_t i = 0; i < seq.size(); ++i) vmax = std::max(vmax, rep.v_norm[i]);
    // the V-relation must vanish relative to ||u_hat|| along a genuine
    // Palais-Smale tail; a unit-size ratio marks a violating sequence
    double last_ratio = std::abs(rep.v_test.back()) / std::max(rep.v_norm.back(), 1e-12);
    rep.v_bound_ok = vmax < 1e3 && last_ratio <= 1.0;
    double fmax = *std::max_element(rep.full_norm.begin(), rep.full_norm.end());
    rep.norms_bounded = fmax < 1e4 && rep.full_norm.back() <= fmax + 1e-12;
    return rep;
}

WeakLimitReport weak_limit_check(const OperatorModel& op, const CurvatureData& q,
                                 const std::vector<ScalarField>& seq, const ScalarField& u0,
                                 double rho, double tol) {
    WeakLimitReport rep;
    const ManifoldPtr& M = op.manifold();
    const Basis& B = *M->metric_model().basis;
    const int nv = std::min(12, B.size());
    double logm0 = log_integral_exp4(*M, u0.nodal());
    Eigen::VectorXd d0 = (4.0 * u0.nodal().array() - logm0).exp();
    for (const auto& u : seq) {
        double logm = log_integral_exp4(*M, u.nodal());
        Eigen::VectorXd d = (4.0 * u.nodal().array() - logm).exp();
        double worst = 0.0;
        for (int f = 0; f < nv; ++f) {
            Eigen::VectorXd c = Eigen::VectorXd::Zero(B.size());
            c[f] = 1.0;
            Eigen::VectorXd vn = B.synthesize(c);
            worst = std::max(worst,
                             std::abs(integrate_nodal(*M, (d - d0).cwiseProduct(vn))));
        }
        rep.drift.push_back(worst);
    }
    rep.residual = sup_norm(euler_residual(op, q, u0, rho).nodal());
    rep.converged = rep.drift.back() <= tol && rep.residual <= tol;
    return rep;
}

} // namespace qcurv
