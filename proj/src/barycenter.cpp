#include "qcurv/barycenter.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "qcurv/lp.hpp"
#include "qcurv/neighbor.hpp"

namespace qcurv {

namespace {

// quintic smoothstep, C^2 at both ends
double smooth5(double s) {
    s = std::clamp(s, 0.0, 1.0);
    return s * s * s * (10.0 + s * (-15.0 + 6.0 * s));
}

// non-increasing cutoff: 1 below lo, 0 above hi
double cutoff_down(double d, double lo, double hi) {
    if (d <= lo) return 1.0;
    if (d >= hi) return 0.0;
    return 1.0 - smooth5((d - lo) / (hi - lo));
}

// union support of two atomic measures with signed masses a - b
struct SignedSupport {
    std::vector<PointOnM> pts;
    std::vector<double> mass;
};

SignedSupport union_support(const Barycenter& a, const Barycenter& b, double tol) {
    SignedSupport s;
    auto add = [&](const PointOnM& p, double m) {
        for (std::size_t i = 0; i < s.pts.size(); ++i) {
            if (geodesic_distance(s.pts[i], p) < tol) {
                s.mass[i] += m;
                return;
            }
        }
        s.pts.push_back(p);
        s.mass.push_back(m);
    };
    for (int i = 0; i < a.size(); ++i) add(a.atoms[i], a.weights[i]);
    for (int i = 0; i < b.size(); ++i) add(b.atoms[i], -b.weights[i]);
    return s;
}

double lp_dual_norm(const SignedSupport& s, double sup_bound, double lip_bound, int max_iter) {
    const int n = static_cast<int>(s.pts.size());
    if (n == 0) return 0.0;
    if (n == 1) return std::abs(s.mass[0]) * sup_bound;
    // variables x = f + sup_bound in [0, 2 sup_bound]
    const int rows = n + n * (n - 1);
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(rows, n);
    Eigen::VectorXd b(rows);
    int r = 0;
    for (int i = 0; i < n; ++i) {
        A(r, i) = 1.0;
        b(r++) = 2.0 * sup_bound;
    }
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            A(r, i) = 1.0;
            A(r, j) = -1.0;
            b(r++) = lip_bound * geodesic_distance(s.pts[i], s.pts[j]);
        }
    Eigen::VectorXd c = Eigen::Map<const Eigen::VectorXd>(s.mass.data(), n);
    LpResult res = simplex_max(c, A, b, max_iter);
    return res.value - sup_bound * c.sum();
}

// all partitions of {0..m-1} into exactly j nonempty blocks (restricted
// growth strings); m is small
void partitions_into(int m, int j, std::vector<std::vector<int>>& out) {
    std::vector<int> a(m, 0);
    auto blocks = [&]() { return *std::max_element(a.begin(), a.end()) + 1; };
    while (true) {
        if (blocks() == j) out.push_back(a);
        int i = m - 1;
        for (; i > 0; --i) {
            int mx = *std::max_element(a.begin(), a.begin() + i);
            if (a[i] <= mx) {
                ++a[i];
                std::fill(a.begin() + i + 1, a.end(), 0);
                break;
            }
            // reset handled by fill above
        }
        if (i == 0) break;
    }
}

Barycenter collapse_by_partition(const Barycenter& s, const std::vector<int>& part, int j,
                                 bool use_center) {
    std::vector<PointOnM> atoms(j, s.atoms[0]);
    std::vector<double> weights(j, 0.0);
    for (int blk = 0; blk < j; ++blk) {
        std::vector<PointOnM> pts;
        std::vector<double> w;
        double tot = 0.0;
        for (int i = 0; i < s.size(); ++i)
            if (part[i] == blk) {
                pts.push_back(s.atoms[i]);
                w.push_back(s.weights[i]);
                tot += s.weights[i];
            }
        weights[blk] = tot;
        if (pts.size() == 1 || tot <= 0) {
            atoms[blk] = pts[0];
            continue;
        }
        std::size_t heaviest = 0;
        for (std::size_t i = 1; i < w.size(); ++i)
            if (w[i] > w[heaviest]) heaviest = i;
        if (!use_center) {
            atoms[blk] = pts[heaviest];
            continue;
        }
        double spread = 0.0;
        for (std::size_t i = 0; i < pts.size(); ++i)
            for (std::size_t l = i + 1; l < pts.size(); ++l)
                spread = std::max(spread, geodesic_distance(pts[i], pts[l]));
        if (spread >= pts[0].M->injectivity_radius() / 4.0) {
            atoms[blk] = pts[heaviest];
        } else {
            for (auto& x : w) x /= tot;
            atoms[blk] = riemannian_center(pts, w, false);
        }
    }
    return make_barycenter(std::move(atoms), std::move(weights), s.order);
}

// transfer small parcels of weight between atoms while the LP distance drops
Barycenter weight_descent(const Barycenter& sigma, Barycenter cand, const MetricConfig& cfg) {
    if (cand.size() < 2) return cand;
    double best = bary_distance(sigma, cand, cfg);
    double step = 0.25;
    for (int pass = 0; pass < 6; ++pass) {
        bool improved = false;
        for (int a = 0; a < cand.size(); ++a)
            for (int b = 0; b < cand.size(); ++b) {
                if (a == b) continue;
                double delta = step * cand.weights[a];
                if (delta < 1e-6) continue;
                Barycenter trial = cand;
                trial.weights[a] -= delta;
                trial.weights[b] += delta;
                double d = bary_distance(sigma, trial, cfg);
                if (d < best - 1e-12) {
                    best = d;
                    cand = trial;
                    improved = true;
                }
            }
        if (!improved) step *= 0.5;
    }
    renormalize_exact(cand.weights);
    return cand;
}

} // namespace

Barycenter make_barycenter(std::vector<PointOnM> atoms, std::vector<double> weights, int order) {
    if (atoms.empty() || atoms.size() != weights.size())
        throw std::invalid_argument("make_barycenter: atom/weight mismatch");
    ManifoldPtr M = atoms[0].M;
    double sum = 0.0;
    for (std::size_t i = 0; i < atoms.size(); ++i) {
        if (atoms[i].M != M) throw std::invalid_argument("make_barycenter: manifold mismatch");
        if (weights[i] < -1e-12) throw std::invalid_argument("make_barycenter: negative weight");
        sum += weights[i];
    }
    if (std::abs(sum - 1.0) > 1e-8)
        throw std::invalid_argument("make_barycenter: weights must sum to 1");
    Barycenter b;
    b.atoms = std::move(atoms);
    b.weights = std::move(weights);
    b.order = std::max<int>(order, static_cast<int>(b.atoms.size()));
    return canonical_form(b);
}

void renormalize_exact(std::vector<double>& w) {
    double sum = std::accumulate(w.begin(), w.end(), 0.0);
    if (sum <= 0) throw std::invalid_argument("renormalize_exact: nonpositive total");
    for (auto& x : w) x /= sum;
    // push the rounding residue into the largest weight, then walk single
    // ulps until the left-to-right sum lands bitwise on 1
    auto walk = [&](double* slot) {
        for (int it = 0; it < 256; ++it) {
            double sum = std::accumulate(w.begin(), w.end(), 0.0);
            if (sum == 1.0) return true;
            *slot = std::nextafter(*slot, sum < 1.0 ? 2.0 : -2.0);
        }
        return std::accumulate(w.begin(), w.end(), 0.0) == 1.0;
    };
    auto mx = std::max_element(w.begin(), w.end());
    *mx += 1.0 - std::accumulate(w.begin(), w.end(), 0.0);
    if (!walk(&*mx)) {
        double prefix = std::accumulate(w.begin(), w.end() - 1, 0.0);
        w.back() = 1.0 - prefix;
        walk(&w.back());
    }
}

Barycenter canonical_form(const Barycenter& b, double merge_tol) {
    Barycenter out;
    out.order = b.order;
    for (int i = 0; i < b.size(); ++i) {
        if (b.weights[i] <= 0.0) continue;
        bool merged = false;
        for (int j = 0; j < out.size(); ++j) {
            if (geodesic_distance(out.atoms[j], b.atoms[i]) < merge_tol) {
                out.weights[j] += b.weights[i];
                merged = true;
                break;
            }
        }
        if (!merged) {
            out.atoms.push_back(b.atoms[i]);
            out.weights.push_back(b.weights[i]);
        }
    }
    if (out.atoms.empty()) throw std::invalid_argument("canonical_form: empty barycenter");
    renormalize_exact(out.weights);
    out.order = std::max<int>(out.order, out.size());
    return out;
}

double bary_distance(const Barycenter& a, const Barycenter& b, const MetricConfig& cfg) {
    if (a.manifold() != b.manifold())
        throw std::invalid_argument("bary_distance: manifold mismatch");
    SignedSupport s = union_support(a, b, cfg.merge_tol);
    double total = 0.0;
    for (double m : s.mass) total += std::abs(m);
    if (total < 1e-15) return 0.0;
    if (!cfg.sum_convention) return lp_dual_norm(s, 1.0, 1.0, cfg.lp_max_iter);
    double best = 0.0;
    for (int g = 0; g <= 20; ++g) {
        double lam = g / 20.0;
        best = std::max(best, lp_dual_norm(s, 1.0 - lam, lam, cfg.lp_max_iter));
    }
    return best;
}

double dictionary_lower_bound(const Barycenter& a, const Barycenter& b, int samples,
                              std::mt19937_64& rng) {
    SignedSupport s = union_support(a, b, 1e-9);
    const int n = static_cast<int>(s.pts.size());
    if (n == 0) return 0.0;
    Eigen::MatrixXd D(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) D(i, j) = geodesic_distance(s.pts[i], s.pts[j]);
    Eigen::VectorXd c = Eigen::Map<const Eigen::VectorXd>(s.mass.data(), n);

    auto value_of = [&](Eigen::VectorXd v) {
        // upper McShane projection into the Lipschitz cone, then clamp
        for (int pass = 0; pass < n; ++pass)
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) v[i] = std::min(v[i], v[j] + D(i, j));
        v = v.cwiseMax(-1.0).cwiseMin(1.0);
        // coordinate ascent: each component moves to the feasible endpoint
        // favored by its sign in the pairing (stays a feasible test function)
        for (int sign = -1; sign <= 1; sign += 2) {
            Eigen::VectorXd u = v;
            for (int pass = 0; pass < 2 * n; ++pass) {
                bool changed = false;
                for (int i = 0; i < n; ++i) {
                    double lo = -1.0, hi = 1.0;
                    for (int j = 0; j < n; ++j) {
                        if (j == i) continue;
                        lo = std::max(lo, u[j] - D(i, j));
                        hi = std::min(hi, u[j] + D(i, j));
                    }
                    double target = (sign * c[i] >= 0) ? hi : lo;
                    if (target != u[i]) {
                        u[i] = target;
                        changed = true;
                    }
                }
                if (!changed) break;
            }
            v = (std::abs(c.dot(u)) > std::abs(c.dot(v))) ? u : v;
        }
        return std::abs(c.dot(v));
    };

    double best = 0.0;
    // corner anchors (all sign patterns) for small supports
    if (n <= 10) {
        for (int mask = 0; mask < (1 << n); ++mask) {
            Eigen::VectorXd v(n);
            for (int i = 0; i < n; ++i) v[i] = (mask >> i) & 1 ? 1.0 : -1.0;
            best = std::max(best, value_of(v));
        }
    }
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int t = 0; t < samples; ++t) {
        Eigen::VectorXd v(n);
        for (int i = 0; i < n; ++i) v[i] = u(rng);
        best = std::max(best, value_of(v));
    }
    return best;
}

Barycenter project_atomic(const Barycenter& sigma, int j, const MetricConfig& cfg) {
    if (j < 1) throw std::invalid_argument("project_atomic: j >= 1 required");
    const int m = sigma.size();
    if (m <= j) {
        Barycenter out = sigma;
        out.order = std::max(sigma.order, j);
        return out;
    }
    std::vector<Barycenter> candidates;
    if (m <= 5) {
        std::vector<std::vector<int>> parts;
        partitions_into(m, j, parts);
        for (const auto& p : parts) {
            candidates.push_back(collapse_by_partition(sigma, p, j, true));
            candidates.push_back(collapse_by_partition(sigma, p, j, false));
        }
    } else {
        // greedy agglomeration: repeatedly merge the cheapest pair
        Barycenter cur = sigma;
        while (cur.size() > j) {
            double best = std::numeric_limits<double>::infinity();
            Barycenter best_b;
            for (int a = 0; a < cur.size(); ++a)
                for (int b = a + 1; b < cur.size(); ++b) {
                    std::vector<int> part(cur.size());
                    int blk = 0;
                    for (int i = 0; i < cur.size(); ++i) {
                        if (i == b) continue;
                        part[i] = blk++;
                    }
                    part[b] = part[a];
                    Barycenter trial = collapse_by_partition(cur, part, cur.size() - 1, true);
                    double d = bary_distance(sigma, trial, cfg);
                    if (d < best) {
                        best = d;
                        best_b = trial;
                    }
                }
            cur = best_b;
        }
        candidates.push_back(cur);
    }
    double best = std::numeric_limits<double>::infinity();
    const Barycenter* arg = nullptr;
    for (const auto& cand : candidates) {
        double d = bary_distance(sigma, cand, cfg);
        if (d < best) {
            best = d;
            arg = &cand;
        }
    }
    Barycenter refined = weight_descent(sigma, *arg, cfg);
    refined.order = std::max(sigma.order, j);
    return refined;
}

double stratum_margin(const Barycenter& sigma, int j, const MetricConfig& cfg) {
    if (j < 1) throw std::invalid_argument("stratum_margin: j >= 1 required");
    if (sigma.size() <= j) return 0.0;
    Barycenter p = project_atomic(sigma, j, cfg);
    return bary_distance(sigma, p, cfg);
}

StratumBoundsVerdict check_stratum_bounds(const Barycenter& sigma, double eps,
                                          const MetricConfig& cfg) {
    StratumBoundsVerdict v;
    const int m = sigma.size();
    v.min_weight = *std::min_element(sigma.weights.begin(), sigma.weights.end());
    v.min_separation = std::numeric_limits<double>::infinity();
    for (int i = 0; i < m; ++i)
        for (int l = i + 1; l < m; ++l)
            v.min_separation = std::min(v.min_separation, geodesic_distance(sigma.atoms[i], sigma.atoms[l]));
    if (m == 1) v.min_separation = std::numeric_limits<double>::infinity();
    v.margin = (m >= 2) ? stratum_margin(sigma, m - 1, cfg) : std::numeric_limits<double>::infinity();
    v.applicable = v.margin > eps;
    v.bounds_hold = (v.min_weight >= eps / 2.0) && (v.min_separation >= eps / 2.0);
    return v;
}

Barycenter homotopy_T(const Barycenter& sigma, int j, double t, const HomotopyConfig& cfg) {
    if (t < 0.0 || t > 1.0) throw std::invalid_argument("homotopy_T: t in [0,1] required");
    MetricConfig mcfg;
    Barycenter anchors = project_atomic(sigma, j, mcfg);
    if (anchors.size() != j) {
        if (cfg.enforce) throw std::invalid_argument("homotopy_T: projection has wrong atom count");
    }
    const double eta = std::min(cfg.eta_resolved(), cfg.eps / 8.0);
    if (cfg.enforce) {
        double d = bary_distance(sigma, anchors, mcfg);
        if (d > cfg.slack_resolved())
            throw std::invalid_argument("homotopy_T: sigma too far from the stratum");
        for (int a = 0; a < anchors.size(); ++a)
            for (int b = a + 1; b < anchors.size(); ++b)
                if (geodesic_distance(anchors.atoms[a], anchors.atoms[b]) <= eta / 2.0)
                    throw std::invalid_argument("homotopy_T: anchor atoms too close for the cutoff scale");
    }

    const int m = sigma.size();
    const int na = anchors.size();
    auto rho = [&](double d) { return cutoff_down(d, eta / 16.0, eta / 8.0); };

    // classify atoms against the anchors
    std::vector<int> owner(m, -1);     // anchor index when within eta/4
    std::vector<double> dist_to(m, 0.0);
    for (int i = 0; i < m; ++i) {
        double dmin = std::numeric_limits<double>::infinity();
        int best = -1;
        for (int l = 0; l < na; ++l) {
            double d = geodesic_distance(sigma.atoms[i], anchors.atoms[l]);
            if (d < dmin) {
                dmin = d;
                best = l;
            }
        }
        dist_to[i] = dmin;
        owner[i] = (dmin < eta / 4.0) ? best : -1;
    }

    // cluster masses and intrinsic centers over the core balls B_{eta/8}
    std::vector<double> Tl(na, 0.0);
    std::vector<PointOnM> Xl(anchors.atoms);
    for (int l = 0; l < na; ++l) {
        std::vector<PointOnM> pts;
        std::vector<double> w;
        for (int i = 0; i < m; ++i)
            if (owner[i] == l && dist_to[i] < eta / 8.0) {
                pts.push_back(sigma.atoms[i]);
                w.push_back(rho(dist_to[i]) * sigma.weights[i]);
                Tl[l] += w.back();
            }
        if (Tl[l] > 0.0) {
            for (auto& x : w) x /= Tl[l];
            Xl[l] = riemannian_center(pts, w, false);
        } else if (cfg.enforce) {
            throw std::invalid_argument("homotopy_T: empty cluster around an anchor atom");
        }
    }

    std::vector<PointOnM> atoms;
    std::vector<double> weights;
    double core0 = 0.0;      // sum over core atoms of t_i at t = 0
    double core_t = 0.0;     // sum over core atoms of ((1-t) + t rho_i) t_i
    for (int i = 0; i < m; ++i) {
        const int l = owner[i];
        if (l < 0) {
            atoms.push_back(sigma.atoms[i]);
            weights.push_back((1.0 - t) * sigma.weights[i]);
        } else if (dist_to[i] >= eta / 8.0) {
            double z = std::clamp(8.0 / eta * dist_to[i] - 1.0, 0.0, 1.0);
            PointOnM inner = geodesic_point(Xl[l], sigma.atoms[i], z);
            atoms.push_back(geodesic_point(sigma.atoms[i], inner, t));
            weights.push_back((1.0 - t) * sigma.weights[i]);
        } else {
            atoms.push_back(geodesic_point(sigma.atoms[i], Xl[l], t));
            double w = ((1.0 - t) + t * rho(dist_to[i])) * sigma.weights[i];
            weights.push_back(w);
            core0 += sigma.weights[i];
            core_t += w;
        }
    }
    const double normalizer = (1.0 - t) * (1.0 - core0) + core_t;
    if (normalizer <= 0) throw std::runtime_error("homotopy_T: vanishing total mass");
    for (auto& w : weights) w /= normalizer;

    Barycenter out;
    out.atoms = std::move(atoms);
    out.weights = std::move(weights);
    out.order = sigma.order;
    return canonical_form(out);
}

Barycenter hat_homotopy(const Barycenter& sigma, int j, double t, const HomotopyConfig& cfg) {
    if (t <= 0.5) return homotopy_T(sigma, j, 2.0 * t, cfg);
    Barycenter a = homotopy_T(sigma, j, 1.0, cfg);
    MetricConfig mcfg;
    Barycenter b = project_atomic(sigma, j, mcfg);
    const double s = 2.0 * t - 1.0;
    if (a.size() != b.size()) {
        if (cfg.enforce) throw std::runtime_error("hat_homotopy: endpoint atom counts differ");
        return (s < 0.5) ? a : b;
    }
    // pair a's atoms with the nearest projection atom
    const int n = a.size();
    std::vector<int> match(n, -1);
    std::vector<bool> used(n, false);
    for (int i = 0; i < n; ++i) {
        double dmin = std::numeric_limits<double>::infinity();
        for (int l = 0; l < n; ++l) {
            if (used[l]) continue;
            double d = geodesic_distance(a.atoms[i], b.atoms[l]);
            if (d < dmin) {
                dmin = d;
                match[i] = l;
            }
        }
        used[match[i]] = true;
    }
    std::vector<PointOnM> atoms;
    std::vector<double> weights;
    for (int i = 0; i < n; ++i) {
        atoms.push_back(geodesic_point(a.atoms[i], b.atoms[match[i]], s));
        weights.push_back((1.0 - s) * a.weights[i] + s * b.weights[match[i]]);
    }
    renormalize_exact(weights);
    Barycenter out;
    out.atoms = std::move(atoms);
    out.weights = std::move(weights);
    out.order = sigma.order;
    return canonical_form(out);
}

// --- density projections --------------------------------------------------

Barycenter project_density(ManifoldPtr M, const DiscreteMeasure& mu, int j,
                           const ProjectionConfig& cfg) {
    const int n = static_cast<int>(mu.points.size());
    if (n == 0 || mu.mass.size() != n) throw std::invalid_argument("project_density: bad measure");
    if (j < 1) throw std::invalid_argument("project_density: j >= 1 required");
    const ModelManifold& mm = M->metric_model();

    // greedy peak extraction on point masses with distance suppression
    double r0 = cfg.peak_suppression > 0 ? cfg.peak_suppression : 0.3;
    Eigen::VectorXd avail = mu.mass;
    std::vector<int> seeds;
    for (int s = 0; s < j; ++s) {
        int best = 0;
        for (int i = 1; i < n; ++i)
            if (avail[i] > avail[best]) best = i;
        seeds.push_back(best);
        for (int i = 0; i < n; ++i)
            if (avail[i] >= 0 && mm.distance(mu.points[i], mu.points[best]) < 2.0 * r0) avail[i] = -1.0;
    }

    std::vector<PointOnM> atoms;
    for (int s : seeds) atoms.push_back(PointOnM{mu.points[s], M});
    std::vector<double> weights(j, 1.0 / j);

    // Lloyd alternation: nearest-atom cells, intrinsic cell centers, cell masses
    for (int it = 0; it < cfg.lloyd_iters; ++it) {
        std::vector<double> cell_mass(j, 0.0);
        std::vector<Tangent> mean_log(j, Tangent::Zero());
        std::vector<int> assign(n);
        for (int i = 0; i < n; ++i) {
            double dmin = std::numeric_limits<double>::infinity();
            int best = 0;
            for (int l = 0; l < j; ++l) {
                double d = mm.distance(mu.points[i], atoms[l].x);
                if (d < dmin) {
                    dmin = d;
                    best = l;
                }
            }
            assign[i] = best;
            cell_mass[best] += mu.mass[i];
        }
        const double reach = 0.95 * mm.injectivity_radius();
        for (int i = 0; i < n; ++i) {
            int l = assign[i];
            if (cell_mass[l] > 0 && mu.mass[i] > 0 &&
                mm.distance(atoms[l].x, mu.points[i]) < reach)
                mean_log[l] += (mu.mass[i] / cell_mass[l]) * mm.log_map(atoms[l].x, mu.points[i]);
        }
        double moved = 0.0;
        for (int l = 0; l < j; ++l) {
            if (cell_mass[l] <= 0) continue;
            Chart nx = mm.exp_map(atoms[l].x, mean_log[l]);
            moved = std::max(moved, mm.distance(nx, atoms[l].x));
            atoms[l] = PointOnM{nx, M};
            weights[l] = cell_mass[l];
        }
        if (moved < 1e-10) break;
    }
    renormalize_exact(weights);
    Barycenter out;
    out.atoms = atoms;
    out.weights = weights;
    out.order = j;
    out = canonical_form(out);

    // When j undershoots the true cluster count, Lloyd means drift between
    // clusters while the dual norm prefers the heavy peaks; keep whichever
    // candidate the dictionary estimate ranks closer.
    std::vector<PointOnM> seed_atoms;
    for (int s : seeds) seed_atoms.push_back(PointOnM{mu.points[s], M});
    std::vector<double> seed_w(j, 0.0);
    for (int i = 0; i < n; ++i) {
        double dmin = std::numeric_limits<double>::infinity();
        int best = 0;
        for (int l = 0; l < j; ++l) {
            double d = mm.distance(mu.points[i], seed_atoms[l].x);
            if (d < dmin) {
                dmin = d;
                best = l;
            }
        }
        seed_w[best] += mu.mass[i];
    }
    renormalize_exact(seed_w);
    Barycenter alt;
    alt.atoms = std::move(seed_atoms);
    alt.weights = std::move(seed_w);
    alt.order = j;
    alt = canonical_form(alt);
    if (density_distance_estimate(M, mu, alt, cfg) < density_distance_estimate(M, mu, out, cfg))
        return alt;
    return out;
}

namespace {
double c1_ball_scale(const Basis& B, int f) {
    Eigen::VectorXd c = Eigen::VectorXd::Zero(B.size());
    c[f] = 1.0;
    Eigen::VectorXd nodal = B.synthesize(c);
    auto grad = B.gradient_frame(c);
    double sup = nodal.lpNorm<Eigen::Infinity>();
    double gsup = 0.0;
    for (int q = 0; q < nodal.size(); ++q) {
        double g2 = 0.0;
        for (int comp = 0; comp < 4; ++comp) g2 += grad[comp][q] * grad[comp][q];
        gsup = std::max(gsup, g2);
    }
    return 1.05 * std::max(sup, std::sqrt(gsup));
}
} // namespace

SpectralDictionary spectral_dictionary_on(ManifoldPtr M, const FineGrid& g, int count) {
    const ModelManifold& mm = M->metric_model();
    const Basis& B = *mm.basis;
    const int nspec = std::min(count, B.size() - 1);
    SpectralDictionary dict;
    dict.values.resize(static_cast<Eigen::Index>(g.chart.size()), nspec);
    dict.scales.resize(nspec);
    for (int f = 1; f <= nspec; ++f) {
        Eigen::VectorXd c = Eigen::VectorXd::Zero(B.size());
        c[f] = 1.0;
        dict.scales[f - 1] = c1_ball_scale(B, f);
        dict.values.col(f - 1) = mm.synthesize_on(g, c) / dict.scales[f - 1];
    }
    return dict;
}

double density_distance_estimate(ManifoldPtr M, const DiscreteMeasure& mu, const Barycenter& sigma,
                                 const ProjectionConfig& cfg, const SpectralDictionary* dict) {
    const ModelManifold& mm = M->metric_model();
    const int n = static_cast<int>(mu.points.size());
    const int j = sigma.size();
    // distances to the atoms, reused by every McShane sample
    Eigen::MatrixXd D(n, j);
    for (int i = 0; i < n; ++i)
        for (int l = 0; l < j; ++l) D(i, l) = mm.distance(mu.points[i], sigma.atoms[l].x);
    Eigen::MatrixXd DA(j, j);
    for (int a = 0; a < j; ++a)
        for (int b = 0; b < j; ++b) DA(a, b) = geodesic_distance(sigma.atoms[a], sigma.atoms[b]);

    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    double best = 0.0;
    const int corners = (j <= 6) ? (1 << j) : 0;
    for (int t = 0; t < corners + cfg.dict_mcshane; ++t) {
        Eigen::VectorXd a(j);
        if (t < corners)
            for (int l = 0; l < j; ++l) a[l] = (t >> l) & 1 ? 1.0 : -1.0;
        else
            for (int l = 0; l < j; ++l) a[l] = u(rng);
        // project anchor values into the Lipschitz cone of the atom set
        for (int pass = 0; pass < j; ++pass)
            for (int x = 0; x < j; ++x)
                for (int y = 0; y < j; ++y) a[x] = std::min(a[x], a[y] + DA(x, y));
        double val = 0.0;
        for (int l = 0; l < j; ++l)
            val -= sigma.weights[l] * std::clamp(a[l], -1.0, 1.0);
        for (int i = 0; i < n; ++i) {
            double g = a[0] + D(i, 0);
            for (int l = 1; l < j; ++l) g = std::min(g, a[l] + D(i, l));
            val += mu.mass[i] * std::clamp(g, -1.0, 1.0);
        }
        best = std::max(best, std::abs(val));
    }

    // low-frequency spectral functions rescaled into the C^1 ball
    const Basis& B = *mm.basis;
    if (dict) {
        for (Eigen::Index f = 0; f < dict->values.cols(); ++f) {
            double val = mu.mass.dot(dict->values.col(f));
            for (int l = 0; l < j; ++l)
                val -= sigma.weights[l] *
                       B.eval_basis(static_cast<int>(f) + 1, sigma.atoms[l].x) / dict->scales[f];
            best = std::max(best, std::abs(val));
        }
    } else if (n <= 20000) {
        const int nspec = std::min(cfg.dict_spectral, B.size() - 1);
        for (int f = 1; f <= nspec; ++f) {
            double scale = c1_ball_scale(B, f);
            double val = 0.0;
            for (int i = 0; i < n; ++i) val += mu.mass[i] * B.eval_basis(f, mu.points[i]) / scale;
            for (int l = 0; l < j; ++l)
                val -= sigma.weights[l] * B.eval_basis(f, sigma.atoms[l].x) / scale;
            best = std::max(best, std::abs(val));
        }
    }
    return best;
}

// --- the sublevel map ------------------------------------------------------

std::string PsiTrace::to_json() const {
    std::ostringstream os;
    os << "{\"chosen_j\":" << chosen_j << ",\"distances\":[";
    for (std::size_t i = 0; i < distances.size(); ++i)
        os << (i ? "," : "") << distances[i];
    os << "],\"cutoffs\":[";
    for (std::size_t i = 0; i < cutoffs.size(); ++i) os << (i ? "," : "") << cutoffs[i];
    os << "]}";
    return os.str();
}

Barycenter psi_hat_measure(ManifoldPtr M, const DiscreteMeasure& mu, const PsiConfig& cfg,
                           PsiTrace* trace, const SpectralDictionary* dict) {
    if (cfg.k < 1) throw std::invalid_argument("psi_hat: k >= 1 required");
    DiscreteMeasure nu = mu;
    double total = nu.mass.sum();
    if (std::abs(total - 1.0) > 1e-6)
        throw std::invalid_argument("psi_hat: density not normalized");
    nu.mass /= total;

    std::vector<double> scales(cfg.k + 1, 0.0);
    scales[1] = cfg.eps1;
    for (int j = 2; j <= cfg.k; ++j) scales[j] = scales[j - 1] * scales[j - 1] / cfg.scale_shrink;

    std::vector<double> dist(cfg.k + 1, 0.0), cut(cfg.k + 1, 1.0);
    int jstar = cfg.k;
    std::vector<Barycenter> fits(cfg.k + 1);
    for (int j = 1; j < cfg.k; ++j) {
        fits[j] = project_density(M, nu, j, cfg.proj);
        dist[j] = density_distance_estimate(M, nu, fits[j], cfg.proj, dict);
        cut[j] = cutoff_down(dist[j], scales[j], 2.0 * scales[j]);
        if (cut[j] >= 1.0) {
            jstar = j;
            break;
        }
    }
    Barycenter sigma = (jstar < cfg.k && fits[jstar].size() == jstar)
                           ? fits[jstar]
                           : project_density(M, nu, jstar, cfg.proj);
    sigma.order = cfg.k;

    // partial collapse homotopies below the chosen stratum, innermost first
    for (int l = jstar - 1; l >= 1; --l) {
        double f = cut[l];
        if (f <= 0.0) continue;
        HomotopyConfig hc;
        hc.eps = 4.0 * scales[l];
        hc.eps_hat = 4.0 * scales[l + 1];
        hc.enforce = false;
        sigma = hat_homotopy(sigma, l, f, hc);
    }
    if (trace) {
        trace->chosen_j = jstar;
        trace->distances.assign(dist.begin() + 1, dist.begin() + cfg.k + 1);
        trace->cutoffs.assign(cut.begin() + 1, cut.begin() + cfg.k + 1);
    }
    return sigma;
}

Barycenter psi_hat(const OperatorModel& op, const CurvatureData& q, const ScalarField& u,
                   const PsiConfig& cfg, PsiTrace* trace) {
    const ManifoldPtr& M = op.manifold();
    if (std::abs(std::exp(log_integral_exp4(*M, u.nodal())) - 1.0) > 1e-6)
        throw std::invalid_argument("psi_hat: field not volume-normalized");
    Eigen::VectorXd alpha = op.v_components(u);
    if (alpha.norm() > 1.0 + 1e-12)
        throw std::invalid_argument("psi_hat: V-component exceeds the unit bound");
    if (cfg.l_hat > 0) {
        double ii = energy(op, q, u).total;
        if (ii > -cfg.l_hat) throw std::invalid_argument("psi_hat: not in the sublevel");
    }
    FineGrid g = M->fine_grid(2);
    Eigen::VectorXd vals = M->synthesize_on(g, u.coeff());
    DiscreteMeasure mu;
    mu.points = g.chart;
    mu.mass.resize(g.weights.size());
    for (Eigen::Index i = 0; i < g.weights.size(); ++i)
        mu.mass[i] = g.weights[i] * std::exp(4.0 * vals[i]);
    mu.mass /= mu.mass.sum();
    SpectralDictionary dict = spectral_dictionary_on(M, g, cfg.proj.dict_spectral);
    return psi_hat_measure(M, mu, cfg, trace, &dict);
}

Eigen::VectorXd s_vector(const OperatorModel& op, const ScalarField& u) {
    return op.v_components(u);
}

Barycenter collapsed_representative(ManifoldPtr M, int k) {
    const ModelManifold& mm = M->metric_model();
    Chart base = (mm.kind == ManifoldKind::Torus)
                     ? Chart{0.0, 0.0, 0.0, 0.0}
                     : Chart{1.5707963267948966, 1.5707963267948966, 1.5707963267948966, 0.0};
    Barycenter b;
    b.atoms = {PointOnM{base, M}};
    b.weights = {1.0};
    b.order = std::max(1, k);
    return b;
}

double akk_distance(const AkkPoint& a, const AkkPoint& b, const MetricConfig& cfg) {
    if (a.unit_sphere_mode != b.unit_sphere_mode)
        throw std::invalid_argument("akk_distance: mixed representations");
    double ds = (a.s - b.s).norm();
    if (a.unit_sphere_mode) return ds;
    double ta = std::max(0.0, 1.0 - a.s.norm());
    double tb = std::max(0.0, 1.0 - b.s.norm());
    return ds + std::min(ta, tb) * bary_distance(a.sigma, b.sigma, cfg);
}

AkkPoint psi(const OperatorModel& op, const CurvatureData& q, const ScalarField& u,
             const PsiConfig& cfg, PsiTrace* trace) {
    AkkPoint out;
    Eigen::VectorXd s = op.v_components(u);
    auto band = kp_band(q.k_p);
    const bool low_kp = band.has_value() && *band == 0;
    if (low_kp && op.k_bar() >= 1) {
        double ns = s.norm();
        if (ns < 1e-14) throw std::runtime_error("psi: undefined direction (s = 0)");
        out.unit_sphere_mode = true;
        out.s = s / ns;
        return out;
    }
    out.s = s;
    if (s.size() == 0) out.s = Eigen::VectorXd::Zero(0);
    if (s.norm() <= 1.0) {
        out.sigma = psi_hat(op, q, u, cfg, trace);
    } else {
        out.sigma = collapsed_representative(op.manifold(), cfg.k);
        out.s = s / s.norm();
    }
    return out;
}

} // namespace qcurv
