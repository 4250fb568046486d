#include "qcurv/quadrature.hpp"

#include <cmath>
#include <stdexcept>

namespace qcurv {

Rule1D gauss_legendre(int n) {
    if (n < 1) throw std::invalid_argument("gauss_legendre: n >= 1 required");
    Rule1D r;
    r.nodes.resize(n);
    r.weights.resize(n);
    const double pi = std::acos(-1.0);
    for (int i = 0; i < (n + 1) / 2; ++i) {
        // Newton iteration from the Chebyshev-like initial guess.
        double x = std::cos(pi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        r.nodes[i] = -x;
        r.nodes[n - 1 - i] = x;
        double w = 2.0 / ((1.0 - x * x) * dp * dp);
        r.weights[i] = w;
        r.weights[n - 1 - i] = w;
    }
    if (n % 2 == 1) r.nodes[n / 2] = 0.0;
    return r;
}

Rule1D gauss_chebyshev2(int n) {
    if (n < 1) throw std::invalid_argument("gauss_chebyshev2: n >= 1 required");
    Rule1D r;
    r.nodes.resize(n);
    r.weights.resize(n);
    const double pi = std::acos(-1.0);
    for (int q = 1; q <= n; ++q) {
        double th = q * pi / (n + 1.0);
        r.nodes[q - 1] = std::cos(th);
        double s = std::sin(th);
        r.weights[q - 1] = pi / (n + 1.0) * s * s;
    }
    return r;
}

Rule1D gauss_legendre_on(int n, double a, double b) {
    Rule1D base = gauss_legendre(n);
    Rule1D r;
    r.nodes.resize(base.size());
    r.weights.resize(base.size());
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    for (std::size_t i = 0; i < base.size(); ++i) {
        r.nodes[i] = mid + half * base.nodes[i];
        r.weights[i] = half * base.weights[i];
    }
    return r;
}

double integrate_layered(const std::function<double(double)>& f, double a, double b,
                         double scale, int pts) {
    if (b <= a) return 0.0;
    double total = 0.0;
    double left = a;
    double width = std::min(scale, b - a);
    while (left < b) {
        double right = std::min(left + width, b);
        Rule1D r = gauss_legendre_on(pts, left, right);
        for (std::size_t i = 0; i < r.size(); ++i) total += r.weights[i] * f(r.nodes[i]);
        left = right;
        width *= 2.0;
    }
    return total;
}

} // namespace qcurv
