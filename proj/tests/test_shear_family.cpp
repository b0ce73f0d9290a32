#include <cmath>
#include <numbers>

#include "doctest.h"
#include "shearlyap/errors.hpp"
#include "shearlyap/rng.hpp"
#include "shearlyap/shear_family.hpp"
#include "shearlyap/stats.hpp"

using namespace shearlyap;

namespace {
constexpr double kPi = std::numbers::pi;

double torus_gap(double a, double b) {
    double d = std::abs(a - b);
    return std::min(d, 1.0 - d);
}
}  // namespace

TEST_CASE("points on x = 0 are fixed") {
    ShearMap f(3.7, {0.4});
    const TorusPoint p{0.0, 0.3, 0.7};
    const TorusPoint q = apply(f, p);
    CHECK(q[0] == 0.0);
    CHECK(q[1] == doctest::Approx(0.3));
    CHECK(q[2] == doctest::Approx(0.7));
}

TEST_CASE("quarter line translates by t times direction") {
    const double t = 0.35, b = 0.4;
    ShearMap f(t, {b});
    const TorusPoint q = apply(f, TorusPoint{0.25, 0.1, 0.2});
    CHECK(q[1] == doctest::Approx(0.1 + t));
    CHECK(q[2] == doctest::Approx(0.2 + b * t));
}

TEST_CASE("inverse shear undoes the shear") {
    Rng rng(7, 0);
    ShearMap f(12.5, {0.3});
    const ShearMap g = f.inverse();
    double worst = 0;
    for (int i = 0; i < 1000000; ++i) {
        TorusPoint p{rng.uniform(), rng.uniform(), rng.uniform()};
        TorusPoint r = apply(g, apply(f, p));
        for (int k = 0; k < 3; ++k) worst = std::max(worst, torus_gap(r[k], p[k]));
    }
    CHECK(worst < 1e-12);
}

TEST_CASE("derivative acts on the chart vectors as stated") {
    const double t = 2.5, b = 0.37;
    ShearMap f(t, {b});
    Eigen::Vector3d abar(1, 0, 0.6), bbar(0, 1, b);
    Rng rng(3, 1);
    for (int i = 0; i < 100; ++i) {
        TorusPoint p{rng.uniform(), rng.uniform(), rng.uniform()};
        const Jet j = jet(f, p);
        CHECK((j.derivative * bbar - bbar).norm() < 1e-14);
        const Eigen::Vector3d expect = abar + 2 * kPi * t * std::cos(2 * kPi * p[0]) * bbar;
        CHECK((j.derivative * abar - expect).norm() < 1e-12 * (1 + t));
        CHECK(j.derivative(0, 0) == 1.0);
        CHECK(j.derivative(1, 0) == doctest::Approx(2 * kPi * t * std::cos(2 * kPi * p[0])));
    }
}

TEST_CASE("jacobian determinant is one") {
    Rng rng(11, 2);
    ShearMap f(40.0, {0.8});
    ShearMap g(40.0, {0.2, 0.6});
    double worst = 0;
    for (int i = 0; i < 1000000; ++i) {
        const double x = rng.uniform();
        worst = std::max(worst, std::abs(f.derivative(x).determinant() - 1.0));
        if (i % 10 == 0) worst = std::max(worst, std::abs(g.derivative(x).determinant() - 1.0));
    }
    CHECK(worst <= 1e-12);
}

TEST_CASE("displacement is parallel to the shear direction") {
    Rng rng(5, 3);
    ShearMap f(0.9, {0.25, 0.5});
    for (int i = 0; i < 1000; ++i) {
        Eigen::Vector4d p(rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform());
        const Eigen::VectorXd d = f.apply_lifted(p) - p;
        const Eigen::VectorXd dir = f.direction.normalized();
        CHECK((d - dir * dir.dot(d)).norm() < 1e-12);
        CHECK(d(0) == 0.0);
    }
}

TEST_CASE("finite differences agree with the analytic derivative") {
    Rng rng(9, 4);
    for (double t : {0.5, 3.0, 20.0}) {
        ShearMap f(t, {0.4});
        for (int i = 0; i < 50; ++i) {
            TorusPoint p{rng.uniform(), rng.uniform(), rng.uniform()};
            CHECK(finite_difference_check(f, p, 1e-5) <= 1e-7 * (1 + t));
        }
    }
    ShearMap id(0.0, {0.4});
    CHECK(finite_difference_check(id, TorusPoint{0.3, 0.2, 0.1}, 1e-4) <= 1e-10);
    CHECK_THROWS_AS(finite_difference_check(id, TorusPoint{0.3, 0.2, 0.1}, 1e-2), DomainError);
}

TEST_CASE("finite difference error decays quadratically") {
    ShearMap f(1.0, {0.4});
    const TorusPoint p{0.13, 0.2, 0.1};
    std::vector<double> lx, ly;
    for (double h : {1e-3, 1e-4}) {
        lx.push_back(std::log(h));
        ly.push_back(std::log(finite_difference_check(f, p, h)));
    }
    // The h = 1e-5 point is dominated by rounding at this t, so the slope
    // is taken from the two larger steps.
    CHECK(fit_line(lx, ly).slope == doctest::Approx(2.0).epsilon(0.05));
}

TEST_CASE("derivative norms grow linearly in t") {
    std::vector<double> lt, ln;
    for (double t : {1.0, 10.0, 100.0, 1000.0}) {
        ShearMap f(t, {0.4});
        double sup = 0;
        for (int i = 0; i < 200; ++i) sup = std::max(sup, f.derivative(i / 200.0).norm());
        lt.push_back(std::log(t));
        ln.push_back(std::log(sup));
    }
    CHECK(fit_line(lt, ln).slope == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("coordinates stay in the unit interval") {
    ShearMap f(1e6, {0.3});
    Rng rng(1, 5);
    for (int i = 0; i < 10000; ++i) {
        TorusPoint q = apply(f, TorusPoint{rng.uniform(), rng.uniform(), rng.uniform()});
        for (int k = 0; k < 3; ++k) {
            CHECK(q[k] >= 0.0);
            CHECK(q[k] < 1.0);
        }
    }
    CHECK(wrap01(1.0 - 1e-16) == 0.0);
    CHECK(wrap01(-0.25) == 0.75);
}

TEST_CASE("exact fractional product for large integers") {
    const std::int64_t n = 123456789012345LL;
    const double x = 0.1234567;
    // Oracle: x = m * 2^-e exactly, so frac(n x) = ((n m) mod 2^e) * 2^-e in 128-bit arithmetic.
    int e = 0;
    const double mant = std::frexp(x, &e);
    const auto m = static_cast<__int128>(std::ldexp(mant, 53));
    const int shift = 53 - e;
    const __int128 mask = (static_cast<__int128>(1) << shift) - 1;
    const __int128 r = (static_cast<__int128>(n) * m) & mask;
    const double ref = std::ldexp(static_cast<double>(r), -shift);
    CHECK(torus_gap(frac_mul(n, x), ref) < 1e-12);
    CHECK(frac_mul(-3, 0.5) == 0.5);
    CHECK(frac_mul(7, 0.25) == 0.75);
}

TEST_CASE("chart conjugation round trips") {
    NormalizedBasis nb;
    nb.change_of_basis = IntMatrix::Identity(3, 3);
    nb.change_of_basis(0, 1) = 1;
    nb.change_of_basis(2, 0) = -2;
    const TorusPoint p{0.1, 0.7, 0.45};
    const TorusPoint q = from_chart(nb, to_chart(nb, p));
    for (int k = 0; k < 3; ++k) CHECK(torus_gap(q[k], p[k]) < 1e-14);
    ShearMap f(0.0, {0.4});
    const TorusPoint r = apply_original(f, nb, p);
    for (int k = 0; k < 3; ++k) CHECK(torus_gap(r[k], p[k]) < 1e-14);
}
