#pragma once

#include <functional>
#include <vector>

namespace qcurv {

/// One-dimensional quadrature rule: sum_q weights[q] * f(nodes[q]).
struct Rule1D {
    std::vector<double> nodes;
    std::vector<double> weights;
    std::size_t size() const { return nodes.size(); }
};

/// n-point Gauss-Legendre rule on [-1,1], exact for polynomials of degree 2n-1.
Rule1D gauss_legendre(int n);

/// n-point Gauss-Chebyshev rule of the second kind on [-1,1]:
/// integrates f(x) sqrt(1-x^2) dx exactly for f of degree 2n-1.
Rule1D gauss_chebyshev2(int n);

/// Gauss-Legendre rule mapped to [a,b].
Rule1D gauss_legendre_on(int n, double a, double b);

/// Integrate f over [a,b] with panels refined geometrically toward a.
/// Used for radial integrands with an inner layer of width `scale` near a;
/// panels grow by factor 2 from `scale` up to b-a, `pts` Gauss points each.
double integrate_layered(const std::function<double(double)>& f, double a, double b,
                         double scale, int pts = 16);

} // namespace qcurv
