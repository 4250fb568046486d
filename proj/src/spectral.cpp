#include "qcurv/spectral.hpp"

#include <cassert>
#include <cmath>
#include <stdexcept>

namespace qcurv {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Contract axis `ax` of a row-major rank-4 tensor with table T (rows x d[ax]):
// out[..., r, ...] = sum_j T(r, j) in[..., j, ...]
void contract_axis(const std::vector<double>& in, std::array<int, 4>& d, int ax,
                   const Eigen::MatrixXd& T, std::vector<double>& out) {
    const int rows = static_cast<int>(T.rows());
    const int nj = d[ax];
    assert(T.cols() == nj);
    int outer = 1, inner = 1;
    for (int i = 0; i < ax; ++i) outer *= d[i];
    for (int i = ax + 1; i < 4; ++i) inner *= d[i];
    out.assign(static_cast<std::size_t>(outer) * rows * inner, 0.0);
    for (int o = 0; o < outer; ++o) {
        const double* src = in.data() + static_cast<std::size_t>(o) * nj * inner;
        double* dst = out.data() + static_cast<std::size_t>(o) * rows * inner;
        for (int r = 0; r < rows; ++r) {
            double* drow = dst + static_cast<std::size_t>(r) * inner;
            for (int j = 0; j < nj; ++j) {
                const double t = T(r, j);
                if (t == 0.0) continue;
                const double* srow = src + static_cast<std::size_t>(j) * inner;
                for (int i = 0; i < inner; ++i) drow[i] += t * srow[i];
            }
        }
    }
    d[ax] = rows;
}

} // namespace

// ---------------------------------------------------------------------------
// TorusBasis
// ---------------------------------------------------------------------------

TorusBasis::TorusBasis(int nodes_per_axis) : n_(nodes_per_axis) {
    if (n_ < 4) throw std::invalid_argument("TorusBasis: at least 4 nodes per axis required");
    K_ = (n_ % 2 == 0) ? n_ / 2 - 1 : (n_ - 1) / 2;
    nb_ = 2 * K_ + 1;
    w1d_ = 2.0 * kPi / n_;
    tab_.resize(nb_, n_);
    dtab_.resize(nb_, n_);
    const double c0 = 1.0 / std::sqrt(2.0 * kPi);
    const double c1 = 1.0 / std::sqrt(kPi);
    for (int j = 0; j < n_; ++j) {
        const double x = 2.0 * kPi * j / n_;
        tab_(0, j) = c0;
        dtab_(0, j) = 0.0;
        for (int m = 1; m <= K_; ++m) {
            tab_(2 * m - 1, j) = c1 * std::cos(m * x);
            tab_(2 * m, j) = c1 * std::sin(m * x);
            dtab_(2 * m - 1, j) = -c1 * m * std::sin(m * x);
            dtab_(2 * m, j) = c1 * m * std::cos(m * x);
        }
    }
}

std::array<int, 4> TorusBasis::split(int i) const {
    std::array<int, 4> a;
    for (int t = 3; t >= 0; --t) {
        a[t] = i % nb_;
        i /= nb_;
    }
    return a;
}

std::array<int, 4> TorusBasis::mode(int i) const {
    auto a = split(i);
    std::array<int, 4> k;
    for (int t = 0; t < 4; ++t) k[t] = (a[t] + 1) / 2;
    return k;
}

double TorusBasis::minus_laplace(int i) const {
    auto k = mode(i);
    double s = 0.0;
    for (int t = 0; t < 4; ++t) s += static_cast<double>(k[t]) * k[t];
    return s;
}

int TorusBasis::degree(int i) const { return static_cast<int>(minus_laplace(i)); }

Eigen::VectorXd TorusBasis::contract_all(const Eigen::VectorXd& in, bool forward,
                                         const std::array<const Eigen::MatrixXd*, 4>& tabs) const {
    std::array<int, 4> d;
    d.fill(forward ? n_ : nb_);
    std::vector<double> cur(in.data(), in.data() + in.size());
    std::vector<double> nxt;
    for (int ax = 0; ax < 4; ++ax) {
        if (forward) {
            Eigen::MatrixXd T = (*tabs[ax]) * w1d_;
            contract_axis(cur, d, ax, T, nxt);
        } else {
            Eigen::MatrixXd T = tabs[ax]->transpose();
            contract_axis(cur, d, ax, T, nxt);
        }
        cur.swap(nxt);
    }
    return Eigen::Map<Eigen::VectorXd>(cur.data(), static_cast<Eigen::Index>(cur.size()));
}

Eigen::VectorXd TorusBasis::analyze(const Eigen::VectorXd& nodal) const {
    if (nodal.size() != node_count()) throw std::invalid_argument("analyze: size mismatch");
    std::array<const Eigen::MatrixXd*, 4> tabs{&tab_, &tab_, &tab_, &tab_};
    return contract_all(nodal, true, tabs);
}

Eigen::VectorXd TorusBasis::synthesize(const Eigen::VectorXd& coeff) const {
    if (coeff.size() != size()) throw std::invalid_argument("synthesize: size mismatch");
    std::array<const Eigen::MatrixXd*, 4> tabs{&tab_, &tab_, &tab_, &tab_};
    return contract_all(coeff, false, tabs);
}

std::array<Eigen::VectorXd, 4> TorusBasis::gradient_frame(const Eigen::VectorXd& coeff) const {
    std::array<Eigen::VectorXd, 4> g;
    for (int c = 0; c < 4; ++c) {
        std::array<const Eigen::MatrixXd*, 4> tabs{&tab_, &tab_, &tab_, &tab_};
        tabs[c] = &dtab_;
        g[c] = contract_all(coeff, false, tabs);
    }
    return g;
}


Eigen::VectorXd TorusBasis::synthesize_product(const Eigen::VectorXd& coeff,
                                               const std::vector<double>& axis_nodes) const {
    if (coeff.size() != size()) throw std::invalid_argument("synthesize_product: size mismatch");
    const int nn = static_cast<int>(axis_nodes.size());
    Eigen::MatrixXd T(nn, nb_);
    const double c0 = 1.0 / std::sqrt(2.0 * kPi);
    const double c1 = 1.0 / std::sqrt(kPi);
    for (int j = 0; j < nn; ++j) {
        T(j, 0) = c0;
        for (int m = 1; m <= K_; ++m) {
            T(j, 2 * m - 1) = c1 * std::cos(m * axis_nodes[j]);
            T(j, 2 * m) = c1 * std::sin(m * axis_nodes[j]);
        }
    }
    std::array<int, 4> d;
    d.fill(nb_);
    std::vector<double> cur(coeff.data(), coeff.data() + coeff.size());
    std::vector<double> nxt;
    for (int ax = 0; ax < 4; ++ax) {
        contract_axis(cur, d, ax, T, nxt);
        cur.swap(nxt);
    }
    return Eigen::Map<Eigen::VectorXd>(cur.data(), static_cast<Eigen::Index>(cur.size()));
}

double TorusBasis::eval_field(const Eigen::VectorXd& coeff, const Chart& p) const {
    Eigen::MatrixXd e(4, nb_);
    const double c0 = 1.0 / std::sqrt(2.0 * kPi);
    const double c1 = 1.0 / std::sqrt(kPi);
    for (int t = 0; t < 4; ++t) {
        e(t, 0) = c0;
        for (int m = 1; m <= K_; ++m) {
            e(t, 2 * m - 1) = c1 * std::cos(m * p[t]);
            e(t, 2 * m) = c1 * std::sin(m * p[t]);
        }
    }
    // fold axes from the last one inward
    const int nb3 = nb_ * nb_ * nb_;
    Eigen::VectorXd acc3(nb3);
    for (int i = 0; i < nb3; ++i) {
        double s = 0.0;
        for (int a = 0; a < nb_; ++a) s += coeff[i * nb_ + a] * e(3, a);
        acc3[i] = s;
    }
    const int nb2 = nb_ * nb_;
    Eigen::VectorXd acc2(nb2);
    for (int i = 0; i < nb2; ++i) {
        double s = 0.0;
        for (int a = 0; a < nb_; ++a) s += acc3[i * nb_ + a] * e(2, a);
        acc2[i] = s;
    }
    Eigen::VectorXd acc1(nb_);
    for (int i = 0; i < nb_; ++i) {
        double s = 0.0;
        for (int a = 0; a < nb_; ++a) s += acc2[i * nb_ + a] * e(1, a);
        acc1[i] = s;
    }
    double s = 0.0;
    for (int a = 0; a < nb_; ++a) s += acc1[a] * e(0, a);
    return s;
}

double TorusBasis::eval_basis(int i, const Chart& p) const {
    auto a = split(i);
    const double c0 = 1.0 / std::sqrt(2.0 * kPi);
    const double c1 = 1.0 / std::sqrt(kPi);
    double v = 1.0;
    for (int t = 0; t < 4; ++t) {
        if (a[t] == 0) {
            v *= c0;
        } else {
            const int m = (a[t] + 1) / 2;
            v *= (a[t] % 2 == 1) ? c1 * std::cos(m * p[t]) : c1 * std::sin(m * p[t]);
        }
    }
    return v;
}

// ---------------------------------------------------------------------------
// SphereBasis
// ---------------------------------------------------------------------------

SphereBasis::Ladder SphereBasis::build_ladder(const std::vector<double>& theta,
                                              const Eigen::VectorXd& w, int L) {
    const int n = static_cast<int>(theta.size());
    Ladder lad;
    lad.val.resize(L + 1);
    lad.dval.resize(L + 1);
    lad.coef.resize(L + 1);
    Eigen::VectorXd sqw = w.array().sqrt();
    for (int m = 0; m <= L; ++m) {
        const int cols = L - m + 1;
        Eigen::MatrixXd V(n, cols);
        for (int q = 0; q < n; ++q) {
            const double s = std::sin(theta[q]);
            const double x = std::cos(theta[q]);
            double sm = std::pow(s, m);
            double xp = 1.0;
            for (int j = 0; j < cols; ++j) {
                V(q, j) = sm * xp * sqw[q];
                xp *= x;
            }
        }
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(V);
        Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(n, cols);
        Eigen::MatrixXd R = qr.matrixQR().topRows(cols).triangularView<Eigen::Upper>();
        for (int d = 0; d < cols; ++d) {
            if (R(d, d) < 0) {
                Q.col(d) *= -1.0;
                R.row(d) *= -1.0;
            }
        }
        Eigen::MatrixXd C = R.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(cols, cols));
        lad.coef[m] = C;
        Eigen::MatrixXd val(n, cols), dval(n, cols);
        for (int q = 0; q < n; ++q) {
            const double s = std::sin(theta[q]);
            const double x = std::cos(theta[q]);
            for (int d = 0; d < cols; ++d) {
                double pv = 0.0, dpv = 0.0, xp = 1.0;
                for (int j = 0; j <= d; ++j) {
                    pv += C(j, d) * xp;
                    if (j + 1 <= d) dpv += C(j + 1, d) * (j + 1) * xp;
                    xp *= x;
                }
                const double sm = std::pow(s, m);
                val(q, d) = sm * pv;
                double dv = -std::pow(s, m + 1) * dpv;
                if (m > 0) dv += m * std::pow(s, m - 1) * x * pv;
                dval(q, d) = dv;
            }
        }
        lad.val[m] = val;
        lad.dval[m] = dval;
    }
    return lad;
}

SphereBasis::SphereBasis(int max_degree, double radius) : L_(max_degree), radius_(radius) {
    if (L_ < 1) throw std::invalid_argument("SphereBasis: degree >= 1 required");
    if (radius_ <= 0) throw std::invalid_argument("SphereBasis: radius > 0 required");
    n1_ = L_ + 2;
    n2_ = L_ + 1;
    n3_ = L_ + 1;
    nphi_ = 2 * L_ + 1;
    nnodes_ = n1_ * n2_ * n3_ * nphi_;

    const double r4 = radius_ * radius_ * radius_ * radius_;

    // theta1: sin^3 weight, polynomial after folding (1-x^2) into GL weights
    Rule1D g1 = gauss_legendre(n1_);
    th1_.resize(n1_);
    w1_.resize(n1_);
    for (int q = 0; q < n1_; ++q) {
        th1_[q] = std::acos(g1.nodes[q]);
        w1_[q] = g1.weights[q] * (1.0 - g1.nodes[q] * g1.nodes[q]) * r4;
    }
    // theta2: sin^2 weight = sqrt(1-x^2) dx, Gauss-Chebyshev second kind
    Rule1D g2 = gauss_chebyshev2(n2_);
    th2_.resize(n2_);
    w2_.resize(n2_);
    for (int q = 0; q < n2_; ++q) {
        th2_[q] = std::acos(g2.nodes[q]);
        w2_[q] = g2.weights[q];
    }
    // theta3: sin weight = dx, plain GL
    Rule1D g3 = gauss_legendre(n3_);
    th3_.resize(n3_);
    w3_.resize(n3_);
    for (int q = 0; q < n3_; ++q) {
        th3_[q] = std::acos(g3.nodes[q]);
        w3_[q] = g3.weights[q];
    }
    phi_.resize(nphi_);
    for (int r = 0; r < nphi_; ++r) phi_[r] = 2.0 * kPi * r / nphi_;
    wphi_ = 2.0 * kPi / nphi_;

    lad1_ = build_ladder(th1_, w1_, L_);
    lad2_ = build_ladder(th2_, w2_, L_);
    lad3_ = build_ladder(th3_, w3_, L_);

    const int na = 2 * L_ + 1;
    tphi_.resize(na, nphi_);
    dtphi_.resize(na, nphi_);
    const double c0 = 1.0 / std::sqrt(2.0 * kPi);
    const double c1 = 1.0 / std::sqrt(kPi);
    for (int r = 0; r < nphi_; ++r) {
        tphi_(0, r) = c0;
        dtphi_(0, r) = 0.0;
        for (int m = 1; m <= L_; ++m) {
            tphi_(2 * m - 1, r) = c1 * std::cos(m * phi_[r]);
            tphi_(2 * m, r) = c1 * std::sin(m * phi_[r]);
            dtphi_(2 * m - 1, r) = -c1 * m * std::sin(m * phi_[r]);
            dtphi_(2 * m, r) = c1 * m * std::cos(m * phi_[r]);
        }
    }

    // ragged index tables
    m_of_a_.resize(na);
    m_of_a_[0] = 0;
    for (int m = 1; m <= L_; ++m) {
        m_of_a_[2 * m - 1] = m;
        m_of_a_[2 * m] = m;
    }
    off3_.resize(na);
    s3_count_ = 0;
    for (int a = 0; a < na; ++a) {
        off3_[a] = s3_count_;
        s3_count_ += L_ - m_of_a_[a] + 1;
    }
    off2_.resize(na);
    s2_count_ = 0;
    for (int a = 0; a < na; ++a) {
        const int m3 = m_of_a_[a];
        off2_[a].resize(L_ - m3 + 1);
        for (int j3 = 0; j3 <= L_ - m3; ++j3) {
            off2_[a][j3] = s2_count_;
            const int m2 = m3 + j3;
            s2_count_ += L_ - m2 + 1;
        }
    }
    off1_.resize(na);
    nbasis_ = 0;
    for (int a = 0; a < na; ++a) {
        const int m3 = m_of_a_[a];
        off1_[a].resize(L_ - m3 + 1);
        for (int j3 = 0; j3 <= L_ - m3; ++j3) {
            const int m2 = m3 + j3;
            off1_[a][j3].resize(L_ - m2 + 1);
            for (int j2 = 0; j2 <= L_ - m2; ++j2) {
                off1_[a][j3][j2] = nbasis_;
                const int m1 = m2 + j2;
                nbasis_ += L_ - m1 + 1;
            }
        }
    }
    meta_.resize(nbasis_);
    for (int a = 0; a < na; ++a) {
        const int m3 = m_of_a_[a];
        for (int j3 = 0; j3 <= L_ - m3; ++j3) {
            const int m2 = m3 + j3;
            for (int j2 = 0; j2 <= L_ - m2; ++j2) {
                const int m1 = m2 + j2;
                for (int d = 0; d <= L_ - m1; ++d) {
                    Meta& mt = meta_[off1_[a][j3][j2] + d];
                    mt.l = m1 + d;
                    mt.m1 = m1;
                    mt.m2 = m2;
                    mt.m3 = m3;
                    mt.sine = (a > 0 && a % 2 == 0);
                }
            }
        }
    }
    int expected = 0;
    for (int l = 0; l <= L_; ++l) expected += sphere_harmonic_count(l);
    if (nbasis_ != expected) throw std::logic_error("SphereBasis: basis count mismatch");
}

double SphereBasis::minus_laplace(int i) const {
    const int l = meta_[i].l;
    return static_cast<double>(l) * (l + 3) / (radius_ * radius_);
}

Eigen::VectorXd SphereBasis::transform(const Eigen::VectorXd& in, bool forward,
                                       int deriv_level) const {
    const int na = 2 * L_ + 1;
    const int n12 = n1_ * n2_;
    const Eigen::MatrixXd& Tphi = (deriv_level == 4) ? dtphi_ : tphi_;
    const auto& L1 = (deriv_level == 1) ? lad1_.dval : lad1_.val;
    const auto& L2 = (deriv_level == 2) ? lad2_.dval : lad2_.val;
    const auto& L3 = (deriv_level == 3) ? lad3_.dval : lad3_.val;

    if (forward) {
        // stage phi
        std::vector<double> A(static_cast<std::size_t>(n12) * n3_ * na, 0.0);
        for (int b = 0; b < n12 * n3_; ++b) {
            const double* src = in.data() + static_cast<std::size_t>(b) * nphi_;
            double* dst = A.data() + static_cast<std::size_t>(b) * na;
            for (int a = 0; a < na; ++a) {
                double s = 0.0;
                for (int r = 0; r < nphi_; ++r) s += Tphi(a, r) * src[r];
                dst[a] = s * wphi_;
            }
        }
        // stage theta3
        std::vector<double> B(static_cast<std::size_t>(n12) * s3_count_, 0.0);
        for (int b12 = 0; b12 < n12; ++b12) {
            for (int a = 0; a < na; ++a) {
                const int m3 = m_of_a_[a];
                const int cnt = L_ - m3 + 1;
                double* dst = B.data() + static_cast<std::size_t>(b12) * s3_count_ + off3_[a];
                for (int q3 = 0; q3 < n3_; ++q3) {
                    const double v = A[(static_cast<std::size_t>(b12) * n3_ + q3) * na + a] * w3_[q3];
                    if (v == 0.0) continue;
                    for (int j3 = 0; j3 < cnt; ++j3) dst[j3] += L3[m3](q3, j3) * v;
                }
            }
        }
        // stage theta2
        std::vector<double> C(static_cast<std::size_t>(n1_) * s2_count_, 0.0);
        for (int q1 = 0; q1 < n1_; ++q1) {
            for (int a = 0; a < na; ++a) {
                const int m3 = m_of_a_[a];
                for (int j3 = 0; j3 <= L_ - m3; ++j3) {
                    const int m2 = m3 + j3;
                    const int cnt = L_ - m2 + 1;
                    double* dst = C.data() + static_cast<std::size_t>(q1) * s2_count_ + off2_[a][j3];
                    for (int q2 = 0; q2 < n2_; ++q2) {
                        const double v =
                            B[(static_cast<std::size_t>(q1) * n2_ + q2) * s3_count_ + off3_[a] + j3] * w2_[q2];
                        if (v == 0.0) continue;
                        for (int j2 = 0; j2 < cnt; ++j2) dst[j2] += L2[m2](q2, j2) * v;
                    }
                }
            }
        }
        // stage theta1
        Eigen::VectorXd coeff = Eigen::VectorXd::Zero(nbasis_);
        for (int a = 0; a < na; ++a) {
            const int m3 = m_of_a_[a];
            for (int j3 = 0; j3 <= L_ - m3; ++j3) {
                const int m2 = m3 + j3;
                for (int j2 = 0; j2 <= L_ - m2; ++j2) {
                    const int m1 = m2 + j2;
                    const int cnt = L_ - m1 + 1;
                    double* dst = coeff.data() + off1_[a][j3][j2];
                    for (int q1 = 0; q1 < n1_; ++q1) {
                        const double v = C[static_cast<std::size_t>(q1) * s2_count_ + off2_[a][j3] + j2] * w1_[q1];
                        if (v == 0.0) continue;
                        for (int d = 0; d < cnt; ++d) dst[d] += L1[m1](q1, d) * v;
                    }
                }
            }
        }
        return coeff;
    }

    // backward: coeff -> nodal
    std::vector<double> C(static_cast<std::size_t>(n1_) * s2_count_, 0.0);
    for (int a = 0; a < na; ++a) {
        const int m3 = m_of_a_[a];
        for (int j3 = 0; j3 <= L_ - m3; ++j3) {
            const int m2 = m3 + j3;
            for (int j2 = 0; j2 <= L_ - m2; ++j2) {
                const int m1 = m2 + j2;
                const int cnt = L_ - m1 + 1;
                const double* src = in.data() + off1_[a][j3][j2];
                for (int q1 = 0; q1 < n1_; ++q1) {
                    double s = 0.0;
                    for (int d = 0; d < cnt; ++d) s += L1[m1](q1, d) * src[d];
                    C[static_cast<std::size_t>(q1) * s2_count_ + off2_[a][j3] + j2] = s;
                }
            }
        }
    }
    std::vector<double> B(static_cast<std::size_t>(n1_) * n2_ * s3_count_, 0.0);
    for (int q1 = 0; q1 < n1_; ++q1) {
        for (int a = 0; a < na; ++a) {
            const int m3 = m_of_a_[a];
            for (int j3 = 0; j3 <= L_ - m3; ++j3) {
                const int m2 = m3 + j3;
                const int cnt = L_ - m2 + 1;
                const double* src = C.data() + static_cast<std::size_t>(q1) * s2_count_ + off2_[a][j3];
                for (int q2 = 0; q2 < n2_; ++q2) {
                    double s = 0.0;
                    for (int j2 = 0; j2 < cnt; ++j2) s += L2[m2](q2, j2) * src[j2];
                    B[(static_cast<std::size_t>(q1) * n2_ + q2) * s3_count_ + off3_[a] + j3] = s;
                }
            }
        }
    }
    std::vector<double> A(static_cast<std::size_t>(n12) * n3_ * (2 * L_ + 1), 0.0);
    for (int b12 = 0; b12 < n12; ++b12) {
        for (int a = 0; a < na; ++a) {
            const int m3 = m_of_a_[a];
            const int cnt = L_ - m3 + 1;
            const double* src = B.data() + static_cast<std::size_t>(b12) * s3_count_ + off3_[a];
            for (int q3 = 0; q3 < n3_; ++q3) {
                double s = 0.0;
                for (int j3 = 0; j3 < cnt; ++j3) s += L3[m3](q3, j3) * src[j3];
                A[(static_cast<std::size_t>(b12) * n3_ + q3) * na + a] = s;
            }
        }
    }
    Eigen::VectorXd out = Eigen::VectorXd::Zero(nnodes_);
    for (int b = 0; b < n12 * n3_; ++b) {
        const double* src = A.data() + static_cast<std::size_t>(b) * na;
        double* dst = out.data() + static_cast<std::size_t>(b) * nphi_;
        for (int r = 0; r < nphi_; ++r) {
            double s = 0.0;
            for (int a = 0; a < na; ++a) s += Tphi(a, r) * src[a];
            dst[r] = s;
        }
    }
    return out;
}

Eigen::VectorXd SphereBasis::analyze(const Eigen::VectorXd& nodal) const {
    if (nodal.size() != nnodes_) throw std::invalid_argument("analyze: size mismatch");
    return transform(nodal, true, 0);
}

Eigen::VectorXd SphereBasis::synthesize(const Eigen::VectorXd& coeff) const {
    if (coeff.size() != nbasis_) throw std::invalid_argument("synthesize: size mismatch");
    return transform(coeff, false, 0);
}

std::array<Eigen::VectorXd, 4> SphereBasis::gradient_frame(const Eigen::VectorXd& coeff) const {
    std::array<Eigen::VectorXd, 4> g;
    for (int c = 0; c < 4; ++c) g[c] = transform(coeff, false, c + 1);
    // divide by the metric frame factors
    for (int q1 = 0; q1 < n1_; ++q1) {
        const double s1 = std::sin(th1_[q1]);
        for (int q2 = 0; q2 < n2_; ++q2) {
            const double s2 = std::sin(th2_[q2]);
            for (int q3 = 0; q3 < n3_; ++q3) {
                const double s3 = std::sin(th3_[q3]);
                const std::size_t base =
                    ((static_cast<std::size_t>(q1) * n2_ + q2) * n3_ + q3) * nphi_;
                for (int r = 0; r < nphi_; ++r) {
                    g[1][base + r] /= s1;
                    g[2][base + r] /= s1 * s2;
                    g[3][base + r] /= s1 * s2 * s3;
                }
            }
        }
    }
    for (int c = 0; c < 4; ++c) g[c] /= radius_;
    return g;
}


Eigen::VectorXd SphereBasis::synthesize_product(const Eigen::VectorXd& in,
                                                const std::vector<double>& th1,
                                                const std::vector<double>& th2,
                                                const std::vector<double>& th3,
                                                const std::vector<double>& phi) const {
    if (in.size() != nbasis_) throw std::invalid_argument("synthesize_product: size mismatch");
    auto tables_at = [this](const Ladder& lad, const std::vector<double>& theta) {
        std::vector<Eigen::MatrixXd> out(L_ + 1);
        const int nq = static_cast<int>(theta.size());
        for (int m = 0; m <= L_; ++m) {
            const int cols = L_ - m + 1;
            out[m].resize(nq, cols);
            const Eigen::MatrixXd& C = lad.coef[m];
            for (int q = 0; q < nq; ++q) {
                const double sm = std::pow(std::sin(theta[q]), m);
                const double x = std::cos(theta[q]);
                for (int d = 0; d < cols; ++d) {
                    double pv = 0.0;
                    for (int j = d; j >= 0; --j) pv = pv * x + C(j, d);
                    out[m](q, d) = sm * pv;
                }
            }
        }
        return out;
    };
    const auto T1 = tables_at(lad1_, th1);
    const auto T2 = tables_at(lad2_, th2);
    const auto T3 = tables_at(lad3_, th3);
    const int p1 = static_cast<int>(th1.size()), p2 = static_cast<int>(th2.size()),
              p3 = static_cast<int>(th3.size()), pf = static_cast<int>(phi.size());
    const int na = 2 * L_ + 1;
    Eigen::MatrixXd Tphi(na, pf);
    const double c0 = 1.0 / std::sqrt(2.0 * kPi);
    const double c1 = 1.0 / std::sqrt(kPi);
    for (int r = 0; r < pf; ++r) {
        Tphi(0, r) = c0;
        for (int m = 1; m <= L_; ++m) {
            Tphi(2 * m - 1, r) = c1 * std::cos(m * phi[r]);
            Tphi(2 * m, r) = c1 * std::sin(m * phi[r]);
        }
    }

    std::vector<double> C(static_cast<std::size_t>(p1) * s2_count_, 0.0);
    for (int a = 0; a < na; ++a) {
        const int m3 = m_of_a_[a];
        for (int j3 = 0; j3 <= L_ - m3; ++j3) {
            const int m2 = m3 + j3;
            for (int j2 = 0; j2 <= L_ - m2; ++j2) {
                const int m1 = m2 + j2;
                const int cnt = L_ - m1 + 1;
                const double* src = in.data() + off1_[a][j3][j2];
                for (int q1 = 0; q1 < p1; ++q1) {
                    double s = 0.0;
                    for (int d = 0; d < cnt; ++d) s += T1[m1](q1, d) * src[d];
                    C[static_cast<std::size_t>(q1) * s2_count_ + off2_[a][j3] + j2] = s;
                }
            }
        }
    }
    std::vector<double> B(static_cast<std::size_t>(p1) * p2 * s3_count_, 0.0);
    for (int q1 = 0; q1 < p1; ++q1) {
        for (int a = 0; a < na; ++a) {
            const int m3 = m_of_a_[a];
            for (int j3 = 0; j3 <= L_ - m3; ++j3) {
                const int m2 = m3 + j3;
                const int cnt = L_ - m2 + 1;
                const double* src = C.data() + static_cast<std::size_t>(q1) * s2_count_ + off2_[a][j3];
                for (int q2 = 0; q2 < p2; ++q2) {
                    double s = 0.0;
                    for (int j2 = 0; j2 < cnt; ++j2) s += T2[m2](q2, j2) * src[j2];
                    B[(static_cast<std::size_t>(q1) * p2 + q2) * s3_count_ + off3_[a] + j3] = s;
                }
            }
        }
    }
    const int p12 = p1 * p2;
    std::vector<double> A(static_cast<std::size_t>(p12) * p3 * na, 0.0);
    for (int b12 = 0; b12 < p12; ++b12) {
        for (int a = 0; a < na; ++a) {
            const int m3 = m_of_a_[a];
            const int cnt = L_ - m3 + 1;
            const double* src = B.data() + static_cast<std::size_t>(b12) * s3_count_ + off3_[a];
            for (int q3 = 0; q3 < p3; ++q3) {
                double s = 0.0;
                for (int j3 = 0; j3 < cnt; ++j3) s += T3[m3](q3, j3) * src[j3];
                A[(static_cast<std::size_t>(b12) * p3 + q3) * na + a] = s;
            }
        }
    }
    Eigen::VectorXd out(static_cast<Eigen::Index>(p12) * p3 * pf);
    for (int b = 0; b < p12 * p3; ++b) {
        const double* src = A.data() + static_cast<std::size_t>(b) * na;
        double* dst = out.data() + static_cast<std::size_t>(b) * pf;
        for (int r = 0; r < pf; ++r) {
            double s = 0.0;
            for (int a = 0; a < na; ++a) s += Tphi(a, r) * src[a];
            dst[r] = s;
        }
    }
    return out;
}

void SphereBasis::eval_tables(const Chart& p, std::vector<Eigen::VectorXd>& e1,
                              std::vector<Eigen::VectorXd>& e2, std::vector<Eigen::VectorXd>& e3,
                              Eigen::VectorXd& ephi) const {
    auto eval_ladder = [this](const Ladder& lad, double theta, std::vector<Eigen::VectorXd>& out) {
        out.resize(L_ + 1);
        const double s = std::sin(theta);
        const double x = std::cos(theta);
        for (int m = 0; m <= L_; ++m) {
            const int cols = L_ - m + 1;
            out[m].resize(cols);
            const double sm = std::pow(s, m);
            const Eigen::MatrixXd& C = lad.coef[m];
            for (int d = 0; d < cols; ++d) {
                double pv = 0.0;
                for (int j = d; j >= 0; --j) pv = pv * x + C(j, d);
                out[m][d] = sm * pv;
            }
        }
    };
    eval_ladder(lad1_, p[0], e1);
    eval_ladder(lad2_, p[1], e2);
    eval_ladder(lad3_, p[2], e3);
    const int na = 2 * L_ + 1;
    ephi.resize(na);
    const double c0 = 1.0 / std::sqrt(2.0 * kPi);
    const double c1 = 1.0 / std::sqrt(kPi);
    ephi[0] = c0;
    for (int m = 1; m <= L_; ++m) {
        ephi[2 * m - 1] = c1 * std::cos(m * p[3]);
        ephi[2 * m] = c1 * std::sin(m * p[3]);
    }
}

double SphereBasis::eval_field(const Eigen::VectorXd& coeff, const Chart& p) const {
    std::vector<Eigen::VectorXd> e1, e2, e3;
    Eigen::VectorXd ephi;
    eval_tables(p, e1, e2, e3, ephi);
    const int na = 2 * L_ + 1;
    double total = 0.0;
    for (int a = 0; a < na; ++a) {
        const int m3 = m_of_a_[a];
        double sa = 0.0;
        for (int j3 = 0; j3 <= L_ - m3; ++j3) {
            const int m2 = m3 + j3;
            double s3v = 0.0;
            for (int j2 = 0; j2 <= L_ - m2; ++j2) {
                const int m1 = m2 + j2;
                double s2v = 0.0;
                const double* src = coeff.data() + off1_[a][j3][j2];
                for (int d = 0; d <= L_ - m1; ++d) s2v += src[d] * e1[m1][d];
                s3v += s2v * e2[m2][j2];
            }
            sa += s3v * e3[m3][j3];
        }
        total += sa * ephi[a];
    }
    return total;
}

double SphereBasis::eval_basis(int i, const Chart& p) const {
    const Meta& mt = meta_[i];
    std::vector<Eigen::VectorXd> e1, e2, e3;
    Eigen::VectorXd ephi;
    eval_tables(p, e1, e2, e3, ephi);
    const int a = (mt.m3 == 0) ? 0 : (mt.sine ? 2 * mt.m3 : 2 * mt.m3 - 1);
    return e1[mt.m1][mt.l - mt.m1] * e2[mt.m2][mt.m1 - mt.m2] * e3[mt.m3][mt.m2 - mt.m3] * ephi[a];
}

} // namespace qcurv
