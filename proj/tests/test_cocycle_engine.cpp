#include <cmath>
#include <numbers>

#include "doctest.h"
#include "shearlyap/cocycle_engine.hpp"
#include "shearlyap/errors.hpp"
#include "shearlyap/rng.hpp"
#include "shearlyap/stats.hpp"

using namespace shearlyap;

namespace {

struct Setup {
    ToralAutomorphism chart;
    NormalizedBasis nb;
    Spectrum spec;
};

const Setup& setup() {
    static const Setup s = [] {
        Setup r;
        const auto l = ToralAutomorphism::from_rows(3, {2, 1, 0, 1, 2, 1, 0, 1, 1}).inverse();
        r.spec = certify_spectrum(l);
        r.nb = normalize_basis(l, invariant_frames(l, r.spec));
        r.chart = r.nb.chart_map;
        return r;
    }();
    return s;
}

ComposedSystem shear_then_power(double t, int n) {
    const Setup& s = setup();
    ComposedSystem sys(3, {Factor::shear_by(ShearMap::along(s.nb, t)), Factor::automorphism(s.chart, n)});
    sys.set_stable_plane(s.nb.a_bar, s.nb.b_bar);
    return sys;
}

double gap(double a, double b) {
    double d = std::abs(a - b);
    return std::min(d, 1.0 - d);
}

}  // namespace

TEST_CASE("identity word gives a constant orbit and zero exponents") {
    ComposedSystem id(3, {});
    const TorusPoint p{0.2, 0.4, 0.6};
    for (const auto& q : orbit(id, p, 10))
        for (int k = 0; k < 3; ++k) CHECK(q[k] == p[k]);
    const auto est = lyapunov_spectrum(id, p, 1000, 3, 1, 10);
    for (double e : est.exponents) CHECK(std::abs(e) < 1e-14);
}

TEST_CASE("origin is fixed by the linear word") {
    ComposedSystem lin(3, {Factor::automorphism(setup().chart, 5)});
    for (const auto& q : orbit(lin, TorusPoint{0.0, 0.0, 0.0}, 20))
        for (int k = 0; k < 3; ++k) CHECK(q[k] == 0.0);
}

TEST_CASE("orbits stay on the torus") {
    const auto sys = shear_then_power(30.0, 4);
    for (const auto& q : orbit(sys, TorusPoint{0.31, 0.77, 0.05}, 5000))
        for (int k = 0; k < 3; ++k) {
            CHECK(q[k] >= 0.0);
            CHECK(q[k] < 1.0);
        }
}

TEST_CASE("word evaluation equals sequential factor application") {
    const Setup& s = setup();
    const ShearMap f = ShearMap::along(s.nb, 3.3);
    const auto sys = shear_then_power(3.3, 3);
    Rng rng(4, 0);
    for (int i = 0; i < 200; ++i) {
        TorusPoint p{rng.uniform(), rng.uniform(), rng.uniform()};
        TorusPoint seq = apply_integer(s.chart.entries(), apply_integer(s.chart.entries(),
                                                                         apply_integer(s.chart.entries(), f.apply(p))));
        TorusPoint w = sys.apply(p);
        for (int k = 0; k < 3; ++k) CHECK(gap(seq[k], w[k]) < 1e-12);
    }
}

TEST_CASE("chain rule matches finite differences of the lifted word") {
    const auto sys = shear_then_power(2.0, 2);
    Rng rng(6, 0);
    for (int i = 0; i < 50; ++i) {
        TorusPoint p{rng.uniform(), rng.uniform(), rng.uniform()};
        const Eigen::MatrixXd d = sys.derivative(p);
        const Eigen::VectorXd base = p.lifted();
        const double h = 1e-6;
        for (int j = 0; j < 3; ++j) {
            Eigen::VectorXd e = Eigen::VectorXd::Zero(3);
            e(j) = h;
            const Eigen::VectorXd fd = (sys.apply_lifted(base + e) - sys.apply_lifted(base - e)) / (2 * h);
            CHECK((fd - d.col(j)).norm() <= 1e-6 * (1 + d.norm()));
        }
        // Explicit product of factor jets.
        const Setup& s = setup();
        const Eigen::MatrixXd l = s.chart.to_double();
        const Eigen::MatrixXd prod = l * l * ShearMap::along(s.nb, 2.0).derivative(p[0]);
        CHECK((prod - d).norm() <= 1e-10 * prod.norm());
    }
}

TEST_CASE("linear word reproduces the certified log eigenvalues") {
    const auto& spec = setup().spec;
    for (int n : {1, 4, 8}) {
        ComposedSystem lin(3, {Factor::automorphism(setup().chart, n)});
        const auto est = lyapunov_spectrum(lin, TorusPoint{0.1, 0.2, 0.3}, 20000, 3);
        for (int i = 0; i < 3; ++i) {
            const double expect = n * std::log(spec.eigenvalues[i].abs_value());
            CHECK(std::abs(est.exponents[i] - expect) <= 1e-4 * std::abs(expect) + 1e-9);
        }
    }
}

TEST_CASE("exponents sum to zero for a conservative word") {
    const auto sys = shear_then_power(5.0, 3);
    const auto est = lyapunov_batch(sys, 17, 8, 20000, 3, 1, 1, 200);
    const double sum = est.exponents[0] + est.exponents[1] + est.exponents[2];
    CHECK(std::abs(sum) <= std::max(3 * (est.std_errors[0] + est.std_errors[1] + est.std_errors[2]), 1e-9));
    CHECK(est.exponents[0] >= est.exponents[1]);
    CHECK(est.exponents[1] >= est.exponents[2]);
    for (const auto& row : est.per_orbit) CHECK(std::abs(row[0] + row[1] + row[2]) < 1e-9);
}

TEST_CASE("inverse word has the negated reversed spectrum") {
    const auto sys = shear_then_power(4.0, 2);
    const auto inv = sys.inverse();
    const auto a = lyapunov_batch(sys, 3, 6, 20000, 3, 1, 1, 200);
    const auto b = lyapunov_batch(inv, 3, 6, 20000, 3, 1, 1, 200);
    for (int i = 0; i < 3; ++i) {
        const double tol = 3 * std::hypot(a.std_errors[i], b.std_errors[2 - i]) + 1e-9;
        CHECK(std::abs(a.exponents[i] + b.exponents[2 - i]) <= tol);
    }
}

TEST_CASE("top exponent does not depend on the reorthonormalization period") {
    const auto sys = shear_then_power(3.0, 2);
    const TorusPoint p{0.123, 0.456, 0.789};
    const double e1 = lyapunov_spectrum(sys, p, 20000, 1, 1).exponents[0];
    for (int period : {8, 32}) CHECK(std::abs(lyapunov_spectrum(sys, p, 20000, 1, period).exponents[0] - e1) < 1e-6);
    CHECK_THROWS_AS(lyapunov_spectrum(sys, p, 10, 1, 65), DomainError);
}

TEST_CASE("oversized periods overflow loudly") {
    ComposedSystem lin(3, {Factor::automorphism(setup().chart, 12)});
    CHECK_THROWS_AS(lyapunov_spectrum(lin, TorusPoint{0.1, 0.2, 0.3}, 1000, 3, 64, 0), NumericalBlowup);
}

TEST_CASE("linear standard error shrinks with orbit length") {
    // Near the linear map the estimator noise comes from the shear only; on a
    // weakly sheared word the batch error scales like 1/sqrt(N).
    const auto sys = shear_then_power(0.05, 1);
    const TorusPoint p{0.3, 0.1, 0.7};
    const double s1 = lyapunov_spectrum(sys, p, 10000, 1).std_errors[0];
    const double s2 = lyapunov_spectrum(sys, p, 160000, 1).std_errors[0];
    CHECK(s2 < s1);
    CHECK(std::log(s1 / s2) / std::log(16.0) == doctest::Approx(0.5).epsilon(0.4));
}

TEST_CASE("restricted cocycle in chart coordinates") {
    const Setup& s = setup();
    ComposedSystem only_shear(3, {Factor::shear_by(ShearMap::along(s.nb, 7.0))});
    only_shear.set_stable_plane(s.nb.a_bar, s.nb.b_bar);
    const auto [q, v] = restricted_stable_cocycle(only_shear, TorusPoint{0.37, 0.2, 0.9}, Eigen::Vector2d(0, 1));
    CHECK((v - Eigen::Vector2d(0, 1)).norm() < 1e-15);

    const double lws = s.spec.value(1), lss = s.spec.value(2);
    const auto one = shear_then_power(6.0, 1);
    Rng rng(2, 0);
    for (int i = 0; i < 100; ++i) {
        TorusPoint p{rng.uniform(), rng.uniform(), rng.uniform()};
        const Eigen::Matrix2d a = one.restricted(p);
        CHECK(a.determinant() == doctest::Approx(lws * lss).epsilon(1e-8));
        // The restricted matrix reproduces the full derivative on the plane.
        const Eigen::MatrixXd d = one.derivative(p);
        Eigen::MatrixXd basis(3, 2);
        basis << s.nb.a_bar, s.nb.b_bar;
        CHECK((d * basis - basis * a).norm() < 1e-10 * d.norm());
    }
}

TEST_CASE("linear restriction is diagonal in the eigenbasis") {
    const Setup& s = setup();
    const auto lin = shear_then_power(0.0, 5);
    const Eigen::Matrix2d a = lin.restricted(TorusPoint{0.4, 0.4, 0.4});
    Eigen::EigenSolver<Eigen::Matrix2d> es(a);
    std::vector<double> ev{es.eigenvalues()(0).real(), es.eigenvalues()(1).real()};
    std::sort(ev.begin(), ev.end());
    CHECK(ev[1] == doctest::Approx(std::pow(s.spec.value(1), 5)).epsilon(1e-10));
    CHECK(ev[0] == doctest::Approx(std::pow(s.spec.value(2), 5)).epsilon(1e-10));
}

TEST_CASE("non invariant planes are refused") {
    const Setup& s = setup();
    ComposedSystem sys(3, {Factor::automorphism(s.chart, 1)});
    Eigen::VectorXd a(3), b(3);
    a << 1, 0, 0;
    b << 0, 1, 0;
    CHECK_THROWS_AS(sys.set_stable_plane(a, b), PlaneNotInvariant);
}

TEST_CASE("projective conventions") {
    const ProjectivePoint q = ProjectivePoint::make(TorusPoint{0.1, 0.2, 0.3}, Eigen::Vector2d(-1, -1));
    CHECK(q.angle() == doctest::Approx(std::numbers::pi / 4));
    CHECK(projective_angle(Eigen::Vector2d(1, 0)) == 0.0);
    CHECK(projective_angle(Eigen::Vector2d(-1, 0)) == 0.0);
    CHECK_THROWS_AS(projective_normalize(Eigen::Vector2d(0, 0)), ZeroVector);
    CHECK(projective_distance(0.05, std::numbers::pi - 0.05) == doctest::Approx(0.1));

    const auto lin = shear_then_power(0.0, 1);
    const Eigen::Matrix2d a = lin.restricted(q.base);
    Eigen::EigenSolver<Eigen::Matrix2d> es(a);
    const Eigen::Vector2d fixed = es.eigenvectors().col(0).real();
    const auto img = projective_step(lin, ProjectivePoint::make(q.base, fixed));
    CHECK(projective_distance(img.angle(), projective_angle(fixed)) < 1e-12);
    const auto img2 = projective_step(lin, ProjectivePoint::make(q.base, -fixed));
    CHECK(projective_distance(img2.angle(), img.angle()) < 1e-15);
}

TEST_CASE("projective action is Lipschitz with the bolicity constant") {
    const auto sys = shear_then_power(4.0, 1);
    const double b = bolicity_sup(sys, 2000, 5);
    Rng rng(8, 0);
    for (int i = 0; i < 2000; ++i) {
        TorusPoint p{rng.uniform(), rng.uniform(), rng.uniform()};
        const double a1 = rng.angle(), a2 = a1 + 1e-3 * (rng.uniform() - 0.5);
        const auto s1 = projective_step(sys, ProjectivePoint::make(p, Eigen::Vector2d(std::cos(a1), std::sin(a1))));
        const auto s2 = projective_step(sys, ProjectivePoint::make(p, Eigen::Vector2d(std::cos(a2), std::sin(a2))));
        const double ratio = projective_distance(s1.angle(), s2.angle()) / projective_distance(a1, a2);
        // The sampled supremum is checked against the exact pointwise constant.
        const Eigen::Matrix2d a = sys.restricted(p);
        Eigen::JacobiSVD<Eigen::Matrix2d> svd(a);
        const double cond = svd.singularValues()(0) / svd.singularValues()(1);
        CHECK(ratio <= cond * (1 + 1e-6));
        CHECK(cond <= b * (1 + 0.2));
    }
}

TEST_CASE("top stable exponent at the linear point") {
    const auto& spec = setup().spec;
    const int n = 3;
    const auto lin = shear_then_power(0.0, n);
    const double expect = n * std::log(spec.value(1));
    // v_ws in chart coordinates is close to (1, 0); a generic vector aligns too.
    for (const Eigen::Vector2d v0 : {Eigen::Vector2d(1, 0), Eigen::Vector2d(0.3, 0.8)}) {
        const auto r = top_stable_exponent(lin, TorusPoint{0.2, 0.5, 0.1}, v0, 20000);
        CHECK(std::abs(r.value - expect) <= 1e-4 * std::abs(expect));
    }
}

TEST_CASE("top stable exponent dominates the minimal expansion") {
    const auto sys = shear_then_power(8.0, 2);
    const TorusPoint p{0.31, 0.4, 0.9};
    const long n = 5000;
    const auto r = top_stable_exponent(sys, p, Eigen::Vector2d(1, 0), n, 0);
    double lower = 0;
    TorusPoint q = p;
    for (long i = 0; i < n; ++i) {
        Eigen::JacobiSVD<Eigen::Matrix2d> svd(sys.restricted(q));
        lower += std::log(svd.singularValues()(1));
        q = sys.apply(q);
    }
    CHECK(r.value >= lower / n);
}

TEST_CASE("stable exponent matches the full spectrum") {
    // The plane is invariant, so the top restricted exponent is the second
    // exponent of the full spectrum.
    const auto sys = shear_then_power(6.0, 2);
    const TorusPoint p{0.61, 0.2, 0.33};
    const auto full = lyapunov_spectrum(sys, p, 40000, 3);
    const auto st = top_stable_exponent(sys, p, Eigen::Vector2d(0.6, 0.8), 40000);
    CHECK(std::abs(full.exponents[1] - st.value) < 3 * (full.std_errors[1] + st.std_error) + 1e-6);
}

TEST_CASE("batched runs are deterministic across thread counts") {
    const auto sys = shear_then_power(5.0, 2);
    const auto a = lyapunov_batch(sys, 99, 6, 3000, 3, 1, 1, 100);
    const auto b = lyapunov_batch(sys, 99, 6, 3000, 3, 1, 3, 100);
    CHECK(a.per_orbit == b.per_orbit);
    CHECK(a.exponents == b.exponents);
    CHECK(a.orbit_ids == std::vector<std::uint64_t>{0, 1, 2, 3, 4, 5});
}
