#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <vector>

#include "shearlyap/lattice_linalg.hpp"

namespace shearlyap {

// Reduction into [0,1); values within 1e-15 below 1 are clamped to 0.
inline double wrap01(double v) {
    double r = v - std::floor(v);
    if (r >= 1.0 - 1e-15) r = 0.0;
    return r;
}

// frac(n * x) for 0 <= x < 1, accurate to a few ulps for any 64-bit n.
inline double frac_mul(std::int64_t n, double x) {
    const std::int64_t hi = n >> 32;
    const std::int64_t lo = n - hi * 4294967296LL;
    const double h = static_cast<double>(hi);
    const double l = static_cast<double>(lo);
    const double p1 = h * x;
    const double e1 = std::fma(h, x, -p1);
    const double a = p1 * 4294967296.0;
    const double b = e1 * 4294967296.0;
    const double p2 = l * x;
    const double e2 = std::fma(l, x, -p2);
    const double s = (a - std::floor(a)) + (b - std::floor(b)) + (p2 - std::floor(p2)) + e2;
    return s - std::floor(s);
}

struct TorusPoint {
    int dim = 3;
    std::array<double, 4> x{};

    TorusPoint() = default;
    TorusPoint(std::initializer_list<double> coords);
    static TorusPoint from_lifted(const Eigen::VectorXd& v);

    double operator[](int i) const { return x[i]; }
    Eigen::VectorXd lifted() const;
};

// Applies an integer matrix to a torus point exactly modulo 1.
TorusPoint apply_integer(const IntMatrix& m, const TorusPoint& p);

// The shear f_t: translation by t*sin(2 pi x)*direction, direction = (0,1,b...)
// written in the normalized chart.
struct ShearMap {
    double t = 0;
    Eigen::VectorXd direction;

    ShearMap() = default;
    ShearMap(double t, std::vector<double> b_coeffs);
    static ShearMap along(const NormalizedBasis& basis, double t);

    int dim() const { return static_cast<int>(direction.size()); }
    std::vector<double> b_coeffs() const;
    ShearMap inverse() const;

    TorusPoint apply(const TorusPoint& p) const;
    Eigen::VectorXd apply_lifted(const Eigen::VectorXd& p) const;
    Eigen::MatrixXd derivative(double x) const;
};

struct Jet {
    TorusPoint image;
    Eigen::MatrixXd derivative;
};

TorusPoint apply(const ShearMap& f, const TorusPoint& p);
Jet jet(const ShearMap& f, const TorusPoint& p);
// Max entry error between the analytic derivative and central differences.
double finite_difference_check(const ShearMap& f, const TorusPoint& p, double h);

// Chart changes: chart = Q * original (mod 1).
TorusPoint to_chart(const NormalizedBasis& basis, const TorusPoint& original);
TorusPoint from_chart(const NormalizedBasis& basis, const TorusPoint& chart);
// The shear seen in original coordinates: Q^-1 o f_t o Q.
TorusPoint apply_original(const ShearMap& f, const NormalizedBasis& basis, const TorusPoint& original);

}  // namespace shearlyap
