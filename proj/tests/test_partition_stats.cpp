#include <cmath>
#include <numbers>

#include "doctest.h"
#include "shearlyap/errors.hpp"
#include "shearlyap/partition_stats.hpp"
#include "shearlyap/rng.hpp"

using namespace shearlyap;

namespace {

const ShearGeometry& geo() {
    static const ShearGeometry g = make_geometry(ToralAutomorphism::from_rows(3, {2, 1, 0, 1, 2, 1, 0, 1, 1}).inverse());
    return g;
}

double desk_t() { return std::pow(geo().lam_ws, -4.0); }

double seg_distance(const Eigen::VectorXd& p, const UnstableSegment& seg) {
    double best = INFINITY;
    for (std::size_t k = 0; k + 1 < seg.nodes.size(); ++k) {
        const Eigen::VectorXd a = seg.nodes[k], b = seg.nodes[k + 1];
        const double u = std::clamp((p - a).dot(b - a) / (b - a).squaredNorm(), 0.0, 1.0);
        best = std::min(best, (p - a - u * (b - a)).norm());
    }
    return best;
}

// Bad-strip share of a straight segment from p along v: exact overlap of the
// x-range with the strips |x - centre| <= w.
double straight_bad_fraction(const Eigen::VectorXd& p, const Eigen::VectorXd& v, double length, double thr) {
    const double w = std::asin(thr) / (2 * std::numbers::pi);
    const double a = std::min(p(0), p(0) + length * v(0)), b = std::max(p(0), p(0) + length * v(0));
    double bad = 0;
    for (double c = std::floor(a) - 0.75; c < b + 1; c += 0.5) bad += std::max(0.0, std::min(b, c + w) - std::max(a, c - w));
    return bad / (b - a);
}

}  // namespace

TEST_CASE("leaf without shear is a straight segment along v_u") {
    const auto& g = geo();
    const LeafField f(g, 6, 0.0);
    const auto seg = grow_unstable_segment(f, TorusPoint{0.3, 0.6, 0.1}, 5.0);
    const Eigen::VectorXd vu = g.eig.col(0).normalized();
    for (std::size_t k = 0; k < seg.nodes.size(); ++k) {
        const Eigen::VectorXd want = seg.nodes.front() + seg.arc[k] * vu;
        CHECK((seg.nodes[k] - want).norm() < 1e-12);
    }
    CHECK(seg.length == doctest::Approx(5.0));
}

TEST_CASE("leaf directions stay in the invariant cone and span E^u") {
    const auto& g = geo();
    const int n = 8;
    const double t = desk_t();
    const LeafField f(g, n, t);
    const auto seg = grow_unstable_segment(f, TorusPoint{0.05, 0.5, 0.9}, 10.0);
    const ComposedSystem sys = g.system(n, t);
    for (std::size_t k = 0; k < seg.nodes.size(); k += 37) {
        CHECK(f.deviation(seg.directions[k]) <= seg.gamma * (1 + 1e-9));
        // Invariance: the derivative maps E^u(x) onto E^u(F x).
        const TorusPoint p = TorusPoint::from_lifted(seg.nodes[k]);
        const Eigen::VectorXd img = sys.derivative(p) * seg.directions[k];
        const Eigen::VectorXd there = f.direction(sys.apply(p).lifted());
        CHECK(std::abs(std::abs(img.normalized().dot(there)) - 1) < 1e-12);
    }
}

TEST_CASE("cone loss is reported") {
    const auto& g = geo();
    LeafOptions opt;
    opt.gamma = 1e-12;
    const LeafField f(g, 4, 50.0, opt);
    CHECK_THROWS_AS(f.direction(TorusPoint{0.1, 0.2, 0.3}.lifted()), ConeLoss);
}

TEST_CASE("halving the step reproduces the leaf") {
    const auto& g = geo();
    const double t = 200.0;
    LeafOptions coarse;
    coarse.max_step = g.crossing_length() / 8;
    LeafOptions fine = coarse;
    fine.max_step /= 2;
    const LeafField fc(g, 6, t, coarse), ff(g, 6, t, fine);
    const TorusPoint p{0.2, 0.7, 0.4};
    const auto a = grow_unstable_segment(fc, p, 8.0);
    const auto b = grow_unstable_segment(ff, p, 8.0);
    double worst = 0;
    for (const auto& q : b.nodes) worst = std::max(worst, seg_distance(q, a));
    for (const auto& q : a.nodes) worst = std::max(worst, seg_distance(q, b));
    CHECK(worst <= 1e-8 * 8.0);
    double la = 0, lb = 0;
    for (std::size_t k = 1; k < a.nodes.size(); ++k) la += (a.nodes[k] - a.nodes[k - 1]).norm();
    for (std::size_t k = 1; k < b.nodes.size(); ++k) lb += (b.nodes[k] - b.nodes[k - 1]).norm();
    CHECK(std::abs(la - lb) / lb < 1e-6);
}

TEST_CASE("density ratios") {
    const auto& g = geo();
    SUBCASE("identical nodes") {
        const LeafField f(g, 8, desk_t());
        const auto seg = grow_unstable_segment(f, TorusPoint{0.4, 0.1, 0.8}, 3.0);
        CHECK(density_ratio(f, seg, 5, 5) == 1.0);
    }
    SUBCASE("constant without shear") {
        const LeafField f(g, 8, 0.0);
        const auto seg = grow_unstable_segment(f, TorusPoint{0.4, 0.1, 0.8}, 3.0);
        for (std::size_t k = 0; k < seg.nodes.size(); ++k) CHECK(density_ratio(f, seg, 0, k) == doctest::Approx(1.0).epsilon(1e-14));
    }
    SUBCASE("bounded by the cone size on random pairs") {
        for (double t : {desk_t(), 1000.0}) {
            const LeafField f(g, 6, t);
            const auto seg = grow_unstable_segment(f, TorusPoint{0.9, 0.3, 0.2}, 20.0);
            const double gm = seg.gamma;
            Rng rng(9, 0);
            for (int k = 0; k < 100000; ++k) {
                const std::size_t i = rng.integer(0, int(seg.nodes.size()) - 1);
                const std::size_t j = rng.integer(0, int(seg.nodes.size()) - 1);
                const double r = density_ratio(f, seg, i, j);
                CHECK(r >= (1 - gm) / (1 + gm));
                CHECK(r <= (1 + gm) / (1 - gm));
            }
        }
    }
}

TEST_CASE("segment length grows by the unstable rate") {
    const auto& g = geo();
    const int n = 6;
    const double t = 300.0;
    const LeafField f(g, n, t);
    const double gm = f.gamma();
    const double lu = std::pow(g.lam_u, n);
    for (int i = 0; i < 1000; ++i) {
        const auto seg = grow_unstable_segment(f, random_point(3, 77, i), 0.05);
        // Image length measured on the pushed polyline, independent of image_arc.
        double img = 0;
        Eigen::VectorXd prev = f.map(seg.nodes.front());
        for (std::size_t k = 1; k < seg.nodes.size(); ++k) {
            const Eigen::VectorXd cur = f.map(seg.nodes[k]);
            img += (cur - prev).norm();
            prev = cur;
        }
        const double ratio = img / seg.length;
        CHECK(ratio > lu * (1 - gm) / (1 + gm) * (1 - 1e-6));
        CHECK(ratio < lu * (1 + gm) / (1 - gm) * (1 + 1e-6));
    }
}

TEST_CASE("strip crossing lengths match the tilt of E^u") {
    const auto& g = geo();
    const double ref = g.crossing_length();
    for (double t : {desk_t(), 100.0, 1000.0}) {
        const LeafField f(g, 8, t);
        const auto seg = grow_unstable_segment(f, TorusPoint{0.12, 0.34, 0.56}, 15.0);
        const auto cl = crossing_lengths(seg);
        CHECK(cl.size() >= 20);
        for (double c : cl) {
            CHECK(c > (1 - kEpsilonM) * ref);
            CHECK(c < (1 + kEpsilonM) * ref);
        }
    }
}

TEST_CASE("atom split structure") {
    const auto& g = geo();
    const double t = 100.0;
    const LeafField f(g, 8, t);
    const auto seg = grow_unstable_segment(f, TorusPoint{0.31, 0.41, 0.59}, 30 * g.crossing_length());
    const AtomSplit s = atom_split(f, seg, AtomSpec{0.25});
    CHECK(s.mass_bad + s.mass_plus + s.mass_minus == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(s.bad_strips >= 20);
    const RegionSpec reg{0.25, t};
    for (const auto& c : s.children) {
        CHECK(c.s1 > c.s0);
        bool hits_bad = false;
        for (int k = 0; k <= 200; ++k) {
            const double x = seg.at(c.s0 + (c.s1 - c.s0) * k / 200.0)(0);
            const Region r = classify_x(x - std::floor(x), reg);
            if (c.label != Region::Bad) CHECK(r == c.label);
            if (r == Region::Bad) hits_bad = true;
        }
        if (c.label == Region::Bad && c.s1 - c.s0 > 1e-3) CHECK(hits_bad);
    }
}

TEST_CASE("short atoms are refused") {
    const auto& g = geo();
    const LeafField f(g, 8, 100.0);
    const auto seg = grow_unstable_segment(f, TorusPoint{0.31, 0.41, 0.59}, 12 * g.crossing_length());
    CHECK_THROWS_AS(atom_split(f, seg, AtomSpec{0.25}), TooFewStrips);
}

TEST_CASE("bad mass on a straight leaf equals the bad share of the line") {
    const auto& g = geo();
    const double region_t = 50.0, alpha = 0.25;
    const LeafField f(g, 12, 0.0);
    const TorusPoint p{0.17, 0.29, 0.83};
    const double len = 30 * g.crossing_length();
    const auto seg = grow_unstable_segment(f, p, len);
    AtomSpec spec{alpha};
    spec.region_t = region_t;
    const AtomSplit s = atom_split(f, seg, spec);
    const double oracle = straight_bad_fraction(p.lifted(), g.eig.col(0).normalized(), len, std::pow(region_t, -alpha));
    CHECK(std::abs(s.mass_bad - oracle) < 1e-6);
}

TEST_CASE("good masses at large t") {
    const auto& g = geo();
    const auto rows = mass_scan(g, 8, 100.0, 0.25, 20, 3);
    for (const auto& r : rows) {
        CHECK(r.mass_plus > 1.0 / 3);
        CHECK(r.mass_minus > 1.0 / 3);
        CHECK(r.length > 20 * g.crossing_length());
        CHECK(r.length < 40 * g.crossing_length());
    }
}

TEST_CASE("masses are refinement stable") {
    const auto& g = geo();
    LeafOptions coarse;
    coarse.max_step = g.crossing_length() / 32;
    LeafOptions fine = coarse;
    fine.max_step /= 2;
    const LeafField fc(g, 8, 100.0, coarse), ff(g, 8, 100.0, fine);
    const TorusPoint p{0.6, 0.6, 0.1};
    const auto a = atom_split(fc, grow_unstable_segment(fc, p, 25.0));
    const auto b = atom_split(ff, grow_unstable_segment(ff, p, 25.0));
    CHECK(std::abs(a.mass_bad - b.mass_bad) < 1e-4);
    CHECK(std::abs(a.mass_plus - b.mass_plus) < 1e-4);
}

TEST_CASE("bad mass follows t^-alpha + lam_u^-n") {
    const auto& g = geo();
    std::vector<AtomRow> rows;
    for (double t : {10.0, 100.0, 1000.0, 10000.0}) {
        const auto r = mass_scan(g, 8, t, 0.25, 5, 4);
        rows.insert(rows.end(), r.begin(), r.end());
    }
    const FittedConstant d = fit_delta(rows, g.lam_u);
    CHECK(d.r2 >= 0.9);
    for (const auto& r : rows) CHECK(r.mass_bad <= d.value * (std::pow(r.t, -r.alpha) + std::pow(g.lam_u, -r.n)) * (1 + 1e-12));
}

TEST_CASE("mass scans are deterministic across thread counts") {
    const auto& g = geo();
    const auto a = mass_scan(g, 8, 50.0, 0.25, 6, 8, 1);
    const auto b = mass_scan(g, 8, 50.0, 0.25, 6, 8, 3);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].mass_bad == b[i].mass_bad);
        CHECK(a[i].length == b[i].length);
    }
}
