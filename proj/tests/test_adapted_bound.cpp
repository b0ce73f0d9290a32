#include <cmath>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "shearlyap/adapted_bound.hpp"
#include "shearlyap/errors.hpp"
#include "shearlyap/model_io.hpp"
#include "shearlyap/rng.hpp"

using namespace shearlyap;

namespace {

constexpr double kPi = std::numbers::pi;

Eigen::Matrix2d rot(double a) {
    Eigen::Matrix2d r;
    r << std::cos(a), -std::sin(a), std::sin(a), std::cos(a);
    return r;
}

Eigen::Matrix2d diag(double a, double b) { return Eigen::Vector2d(a, b).asDiagonal(); }

Eigen::Vector2d unit(double a) { return {std::cos(a), std::sin(a)}; }

double proj_angle(const Eigen::Vector2d& v) {
    double a = std::atan2(v(1), v(0));
    if (a < 0) a += kPi;
    if (a >= kPi) a -= kPi;
    return a;
}

// Two atoms, sector |angle| <= 0.3 around the horizontal.  Two strong
// diagonal expanders with kernels a little apart, plus a rotating bad child.
AdaptedFamilyModel hand_model() {
    AdaptedFamilyModel m;
    m.beta = 0.4;
    m.delta = 0.15;
    m.lambda = 6.0;
    m.atoms.resize(2);
    for (int a = 0; a < 2; ++a) {
        auto& atom = m.atoms[a];
        atom.weight = 0.5;
        atom.sector = {kPi - 0.3, 0.6};
        atom.children = {{1 - a, 0.45, diag(8, 0.125), true},
                         {a, 0.45, diag(8, 0.125) * rot(-0.3), true},
                         {1 - a, 0.10, rot(kPi / 2) * diag(2, 0.5), false}};
    }
    return m;
}

bool sector_has(const Arc& s, double angle) {
    double off = std::fmod(angle - s.start, kPi);
    if (off < 0) off += kPi;
    return off <= s.length;
}

// Dense-sampling view of H5: smallest recovering mass over bad directions.
double sampled_recovery(const AdaptedFamilyModel& m, int atom, int samples) {
    double worst = 1e9;
    for (int i = 0; i < samples; ++i) {
        const double a = (i + 0.5) * kPi / samples;
        if (sector_has(m.atoms[atom].sector, a)) continue;
        double mass = 0;
        for (const auto& c : m.atoms[atom].children)
            if (sector_has(m.atoms[c.target].sector, proj_angle(c.matrix * unit(a)))) mass += c.weight;
        worst = std::min(worst, mass);
    }
    return worst;
}

// Path enumeration with an explicit stack, independent of the library walk.
double enumerate_direct(const AdaptedFamilyModel& m, int atom, double angle, int n) {
    struct Node {
        int atom;
        Eigen::Vector2d v;
        double w;
        int depth;
    };
    std::vector<Node> stack{{atom, unit(angle), 1.0, 0}};
    double acc = 0;
    while (!stack.empty()) {
        Node nd = stack.back();
        stack.pop_back();
        if (nd.depth == n) {
            acc += nd.w * std::log(nd.v.norm());
            continue;
        }
        for (const auto& c : m.atoms[nd.atom].children) stack.push_back({c.target, c.matrix * nd.v, nd.w * c.weight, nd.depth + 1});
    }
    return acc;
}

// Long Markov-chain run with per-block growth, for an exponent and its error.
std::pair<double, double> simulate_exponent(const AdaptedFamilyModel& m, long steps, std::uint64_t seed) {
    Rng rng(seed, 77);
    std::vector<double> cum(m.atoms.size());
    double acc = 0;
    for (std::size_t a = 0; a < m.atoms.size(); ++a) cum[a] = acc += m.atoms[a].weight;
    int atom = 0;
    const double u0 = rng.uniform();
    while (cum[atom] < u0 && atom + 1 < static_cast<int>(cum.size())) ++atom;
    Eigen::Vector2d v = unit(0.618);
    const int blocks = 50;
    const long per = steps / blocks;
    std::vector<double> rate;
    for (int b = 0; b < blocks; ++b) {
        double s = 0;
        for (long i = 0; i < per; ++i) {
            const auto& kids = m.atoms[atom].children;
            double u = rng.uniform(), c = 0;
            std::size_t k = 0;
            for (; k + 1 < kids.size(); ++k) {
                c += kids[k].weight;
                if (u < c) break;
            }
            v = kids[k].matrix * v;
            const double nrm = v.norm();
            s += std::log(nrm);
            v /= nrm;
            atom = kids[k].target;
        }
        rate.push_back(s / per);
    }
    double mean = 0, var = 0;
    for (double r : rate) mean += r / blocks;
    for (double r : rate) var += (r - mean) * (r - mean) / (blocks - 1);
    return {mean, std::sqrt(var / blocks)};
}

}  // namespace

// ---------------------------------------------------------------- closed forms

TEST_CASE("both closed forms of the bound agree on a parameter grid") {
    for (double beta : {0.05, 0.2, 1.0 / 3.0, 0.6, 0.95})
        for (double delta : {0.001, 0.05, 0.2, 0.5, 0.9})
            for (double lambda : {0.5, 1.1, 3.0, 40.0})
                for (double m : {0.3, 1.0, 2.5, 100.0}) {
                    if (lambda * m <= 1) continue;
                    const BoundInputs in{beta, delta, lambda, m};
                    CHECK(std::abs(lower_bound(in) - lower_bound_product_form(in)) < 1e-12);
                }
}

TEST_CASE("no bad mass gives log lambda") {
    CHECK(lower_bound({0.3, 0.0, 5.0, 2.0}) == doctest::Approx(std::log(5.0)).epsilon(1e-15));
}

TEST_CASE("beta one third matches the display with exponent four delta") {
    for (double delta : {0.01, 0.1, 0.3})
        for (double lambda : {1.5, 7.0})
            for (double m : {0.8, 3.0}) {
                const double want = std::log(std::pow(lambda, 1 - delta) / std::pow(m, 4 * delta)) / (1 + 3 * delta);
                CHECK(lower_bound({1.0 / 3.0, delta, lambda, m}) == doctest::Approx(want).epsilon(1e-12));
                CHECK(lower_bound_third(delta, lambda, m) == doctest::Approx(want).epsilon(1e-12));
            }
}

TEST_CASE("sector bound is the bound at beta = 1/k") {
    for (int k : {3, 5, 12})
        CHECK(sector_bound(k, 0.05, 4.0, 2.0) == doctest::Approx(lower_bound({1.0 / k, 0.05, 4.0, 2.0})).epsilon(1e-12));
}

TEST_CASE("bound is monotone in each argument") {
    const double h = 1e-6;
    for (double beta : {0.1, 0.4, 0.8})
        for (double delta : {0.02, 0.2, 0.6})
            for (double lambda : {1.2, 4.0})
                for (double m : {0.9, 5.0}) {
                    const BoundInputs in{beta, delta, lambda, m};
                    const double f = lower_bound(in);
                    CHECK(lower_bound({beta + h, delta, lambda, m}) > f);
                    CHECK(lower_bound({beta, delta + h, lambda, m}) < f);
                    CHECK(lower_bound({beta, delta, lambda * (1 + h), m}) > f);
                    CHECK(lower_bound({beta, delta, lambda, m * (1 + h)}) < f);
                }
}

TEST_CASE("bound tends to log lambda as delta vanishes") {
    double prev = 1e9;
    for (double delta : {1e-2, 1e-4, 1e-6, 1e-8}) {
        const double gap = std::abs(lower_bound({0.3, delta, 3.0, 2.0}) - std::log(3.0));
        CHECK(gap < prev);
        prev = gap;
    }
    CHECK(prev < 1e-7);
}

TEST_CASE("bound rejects inputs outside its domain") {
    CHECK_THROWS_AS(lower_bound({0.0, 0.1, 2, 1}), DomainError);
    CHECK_THROWS_AS(lower_bound({1.0, 0.1, 2, 1}), DomainError);
    CHECK_THROWS_AS(lower_bound({0.3, 1.0, 2, 1}), DomainError);
    CHECK_THROWS_AS(lower_bound({0.3, 0.1, -1, 1}), DomainError);
    CHECK_THROWS_AS(lower_bound({0.3, 0.1, 0.5, 1.5}), DomainError);  // lambda m < 1
    CHECK_THROWS_AS(sector_bound(1, 0.1, 2, 1), DomainError);
}

// ---------------------------------------------------------------- recursion

TEST_CASE("recursion without bad mass stays at one") {
    const auto tr = recursion_trace(0.3, 0.0, 100);
    for (std::size_t n = 0; n < tr.g.size(); ++n) {
        CHECK(tr.g[n] == 1.0);
        CHECK(tr.b[n] == 0.0);
    }
    CHECK(tr.above_floor);
}

TEST_CASE("symmetric recursion decreases to one half") {
    const auto tr = recursion_trace(0.2, 0.2, 200);
    for (std::size_t n = 1; n < tr.g.size(); ++n) {
        CHECK(tr.g[n] <= tr.g[n - 1]);
        CHECK(tr.g[n] > 0.5);
    }
    CHECK(tr.g.back() == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("affine solution matches the iteration") {
    for (double beta : {0.01, 0.3, 0.49})
        for (double delta : {0.01, 0.2, 0.49}) {
            const auto tr = recursion_trace(beta, delta, 10000);
            double worst = 0;
            for (int n = 0; n <= 10000; ++n) {
                const double exact = beta / (beta + delta) + std::pow(1 - beta - delta, n) * delta / (beta + delta);
                worst = std::max(worst, std::abs(tr.g[n] - exact));
                CHECK(tr.g[n] + tr.b[n] == doctest::Approx(1.0));
            }
            CHECK(worst < 1e-12);
            // The fixed point attracts at rate |1 - beta - delta|.
            const double e2 = tr.g[2] - tr.floor, e3 = tr.g[3] - tr.floor;
            CHECK(e3 / e2 == doctest::Approx(1 - beta - delta).epsilon(1e-6));
        }
}

TEST_CASE("good fraction stays above the floor on a grid with beta + delta < 1") {
    for (int i = 0; i < 20; ++i)
        for (int j = 0; j < 20; ++j) {
            const double beta = (i + 0.5) / 40, delta = (j + 0.5) / 40;
            const auto tr = recursion_trace(beta, delta, 10000);
            CHECK(tr.above_floor);
            CHECK(tr.min_margin > -1e-15);
        }
}

TEST_CASE("with beta + delta > 1 the worst case dips below the floor but its mean does not") {
    const double beta = 0.7, delta = 0.6;
    const auto tr = recursion_trace(beta, delta, 2000);
    CHECK_FALSE(tr.above_floor);
    CHECK(tr.g[1] == doctest::Approx(0.4));
    CHECK(tr.g[1] < tr.floor);
    double mean = 0;
    for (double g : tr.g) mean += g / tr.g.size();
    CHECK(mean == doctest::Approx(tr.floor).epsilon(1e-3));
}

// ---------------------------------------------------------------- arcs

TEST_CASE("image arcs agree with sampled images") {
    Rng rng(5, 1);
    for (int trial = 0; trial < 200; ++trial) {
        Eigen::Matrix2d m;
        m << rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3);
        if (std::abs(m.determinant()) < 1e-2) continue;
        const Arc a{rng.angle(), rng.uniform(0, 2.5)};
        const Arc img = image_arc(m, a);
        double least = 1e9;
        bool inside = true;
        for (int i = 0; i <= 20000; ++i) {
            const double ang = a.start + a.length * i / 20000;
            inside = inside && sector_has({img.start - 1e-9, img.length + 2e-9}, proj_angle(m * unit(ang)));
            least = std::min(least, (m * unit(ang)).norm());
        }
        CHECK(inside);
        CHECK(min_norm_on_arc(m, a) <= least * (1 + 1e-12));
        CHECK(min_norm_on_arc(m, a) >= least * (1 - 1e-3));
    }
}

// ---------------------------------------------------------------- model verification

TEST_CASE("hand-built diagonal model passes H1 to H5") {
    const auto m = hand_model();
    m.check_structure();
    const auto v = verify_model(m);
    for (const auto& h : v.h) {
        INFO(h.name << " margin " << h.margin);
        CHECK(h.ok);
    }
    CHECK(v.all());
    // Dense sampling agrees with the exact H5 minimum.
    for (int a = 0; a < 2; ++a) CHECK(sampled_recovery(m, a, 200000) == doctest::Approx(0.45));
    CHECK(v.h[4].margin == doctest::Approx(0.45 - m.beta));
    CHECK(v.h[0].margin == doctest::Approx(0.9 - (1 - m.delta)));
}

TEST_CASE("lowering delta below the bad mass breaks H1 with a witness") {
    auto m = hand_model();
    m.delta = 0.05;
    const auto v = verify_model(m);
    CHECK_FALSE(v.h[0].ok);
    CHECK(v.h[0].atom >= 0);
    CHECK(v.h[0].margin == doctest::Approx(-0.05));
    CHECK_FALSE(v.all());
}

TEST_CASE("other hypotheses fail with witnesses") {
    auto m = hand_model();
    m.lambda = 7.0;  // the tilted child only gives 8 cos 0.6
    auto v = verify_model(m);
    CHECK_FALSE(v.h[2].ok);
    CHECK(v.h[2].child == 1);
    CHECK(v.h[2].margin == doctest::Approx(min_norm_on_arc(m.atoms[0].children[1].matrix, m.atoms[0].sector) - 7.0));

    m = hand_model();
    m.beta = 0.5;
    v = verify_model(m);
    CHECK_FALSE(v.h[4].ok);
    // The witness direction really recovers on too little mass.
    const auto& atom = m.atoms[v.h[4].atom];
    double mass = 0;
    for (const auto& c : atom.children)
        if (sector_has(m.atoms[c.target].sector, proj_angle(c.matrix * unit(v.h[4].angle)))) mass += c.weight;
    CHECK(mass <= 0.5);
    CHECK_FALSE(sector_has(atom.sector, v.h[4].angle));

    m = hand_model();
    m.atoms[0].children[0].matrix = diag(8, 8) * rot(0.5);  // carries the sector out of itself
    v = verify_model(m);
    CHECK_FALSE(v.h[3].ok);
    CHECK(v.h[3].atom == 0);
    CHECK(v.h[3].child == 0);

    m = hand_model();
    m.atoms[1].sector.length = -1;
    v = verify_model(m);
    CHECK_FALSE(v.h[1].ok);
    CHECK(v.h[1].atom == 1);
}

TEST_CASE("structure check rejects inconsistent weights") {
    auto m = hand_model();
    m.atoms[0].children[0].weight = 0.5;
    CHECK_THROWS_AS(m.check_structure(), DomainError);
    m = hand_model();
    m.atoms[0].weight = 0.7;
    m.atoms[1].weight = 0.3;
    CHECK_THROWS_AS(m.check_structure(), DomainError);
    m = hand_model();
    m.atoms[0].children[0].target = 5;
    CHECK_THROWS_AS(m.check_structure(), DomainError);
}

TEST_CASE("random models pass verification and are reproducible") {
    for (int i = 0; i < 50; ++i) {
        const auto m = random_adapted_model(11, i);
        CHECK(verify_model(m).all());
        CHECK_NOTHROW(m.check_structure());
        for (int a = 0; a < static_cast<int>(m.atoms.size()); ++a) CHECK(sampled_recovery(m, a, 20000) > m.beta);
        CHECK(model_to_string(m) == model_to_string(random_adapted_model(11, i)));
    }
    CHECK(model_to_string(random_adapted_model(11, 0)) != model_to_string(random_adapted_model(11, 1)));
}

// ---------------------------------------------------------------- energy and I_n

TEST_CASE("energy estimates hold for all fields") {
    Rng rng(3, 3);
    for (int i = 0; i < 40; ++i) {
        const auto m = random_adapted_model(21, i);
        const double logm = std::log(m.inv_norm());
        for (int s = 0; s < 50; ++s) {
            const int atom = rng.integer(0, m.atoms.size() - 1);
            const Field bad{atom, rng.angle()};
            CHECK(field_energy(m, bad) >= -logm - 1e-12);
            const Arc& sec = m.atoms[atom].sector;
            const Field good{atom, sec.start + rng.uniform() * sec.length};
            CHECK(field_energy(m, good) >= (1 - m.delta) * std::log(m.lambda) - m.delta * logm - 1e-12);
        }
    }
}

TEST_CASE("I_n decomposition at depth one is the definition") {
    const auto m = hand_model();
    for (double a : {0.1, 1.0, 2.0}) {
        CHECK(In_decomposition_check(m, {0, a}, 1) <= 1e-12);
        CHECK(I_direct(m, {0, a}, 1) == doctest::Approx(field_energy(m, {0, a})).epsilon(1e-14));
    }
}

TEST_CASE("I_n decomposition on a fifty-atom model") {
    RandomModelSpec spec;
    spec.min_atoms = spec.max_atoms = 50;
    spec.min_children = 3;
    spec.max_children = 3;
    const auto m = random_adapted_model(4, 0, spec);
    REQUIRE(m.atoms.size() == 50);
    for (int atom : {0, 17, 49})
        for (double a : {0.3, 1.4, 2.9}) {
            const double oracle = enumerate_direct(m, atom, a, 8);
            CHECK(std::abs(oracle - I_direct(m, {atom, a}, 8)) <= 1e-9 * std::max(1.0, std::abs(oracle)));
            CHECK(std::abs(oracle - I_decomposed(m, {atom, a}, 8)) <= 1e-9 * std::max(1.0, std::abs(oracle)));
        }
}

TEST_CASE("equal matrices and an invariant field give n log |A v|") {
    AdaptedFamilyModel m = hand_model();
    for (auto& atom : m.atoms)
        for (auto& c : atom.children) c.matrix = diag(3, 0.5);
    for (int n : {1, 4, 9}) CHECK(I_decomposed(m, {0, 0.0}, n) == doctest::Approx(n * std::log(3.0)).epsilon(1e-13));
    CHECK_THROWS_AS(I_direct(m, {0, 0.0}, 13), DomainError);
}

TEST_CASE("good fractions obey the one-step inequality") {
    Rng rng(8, 2);
    for (int i = 0; i < 30; ++i) {
        const auto m = random_adapted_model(31, i);
        const Field x{rng.integer(0, m.atoms.size() - 1), rng.angle()};
        const auto g = good_fractions(m, x, 8);
        for (std::size_t n = 0; n + 1 < g.size(); ++n)
            CHECK(g[n + 1] > (1 - m.delta) * g[n] + m.beta * (1 - g[n]) - 1e-12);
    }
}

// ---------------------------------------------------------------- brute force

TEST_CASE("uniform diagonal cocycle has exponent log 2") {
    for (int i = 0; i < 5; ++i) {
        auto m = random_adapted_model(41, i);
        for (auto& atom : m.atoms)
            for (auto& c : atom.children) c.matrix = diag(2, 0.5);
        CHECK(brute_force_exponent(m) == doctest::Approx(std::log(2.0)).epsilon(1e-4));
    }
}

TEST_CASE("rotations have exponent zero") {
    auto m = random_adapted_model(42, 0);
    Rng rng(1, 1);
    for (auto& atom : m.atoms)
        for (auto& c : atom.children) c.matrix = rot(rng.uniform(0, 2 * kPi));
    CHECK(std::abs(brute_force_exponent(m)) < 1e-12);
}

TEST_CASE("brute force agrees with a long simulation") {
    for (int i = 0; i < 4; ++i) {
        const auto m = random_adapted_model(43, i);
        const double bf = brute_force_exponent(m);
        const auto [mc, se] = simulate_exponent(m, 400000, 9 + i);
        INFO("brute " << bf << " simulated " << mc << " +- " << se);
        CHECK(std::abs(bf - mc) < 5 * se + 1e-3);
    }
}

TEST_CASE("brute force signals missing convergence") {
    auto m = random_adapted_model(44, 0);
    CHECK_THROWS_AS(brute_force_exponent(m, 1, 1e-4), NotConverged);
    m.atoms[0].weight += 0.1;
    CHECK_THROWS_AS(brute_force_exponent(m), DomainError);
}

TEST_CASE("random verified models satisfy the bound") {
    int violations = 0;
    for (int i = 0; i < 200; ++i) {
        const auto m = random_adapted_model(45, i);
        if (brute_force_exponent(m) < lower_bound(m.inputs())) ++violations;
    }
    CHECK(violations == 0);
}

TEST_CASE("disconnected models satisfy the bound per component") {
    for (int i = 0; i < 20; ++i) {
        const auto a = random_adapted_model(46, 2 * i), b = random_adapted_model(46, 2 * i + 1);
        AdaptedFamilyModel m = a;
        const int shift = static_cast<int>(a.atoms.size());
        for (auto atom : b.atoms) {
            for (auto& c : atom.children) c.target += shift;
            m.atoms.push_back(atom);
        }
        for (std::size_t k = 0; k < m.atoms.size(); ++k) m.atoms[k].weight *= 0.5;
        m.beta = std::min(a.beta, b.beta);
        m.delta = std::max(a.delta, b.delta);
        m.lambda = std::min(a.lambda, b.lambda);
        REQUIRE(verify_model(m).all());
        const double bound = lower_bound(m.inputs());
        const double ea = brute_force_exponent(m, 20, 1e-4, 0), eb = brute_force_exponent(m, 20, 1e-4, shift);
        CHECK(ea >= bound);
        CHECK(eb >= bound);
        // Starting inside a component sees only that component.
        CHECK(ea == doctest::Approx(brute_force_exponent(a, 20, 1e-4, 0)).epsilon(1e-3));
    }
}

// ---------------------------------------------------------------- sector recovery and Hoelder fields

TEST_CASE("sector recovery bound sits below the brute force exponent") {
    int used = 0, violations = 0;
    for (int i = 0; used < 60 && i < 400; ++i) {
        const auto m = random_adapted_model(47, i);
        const auto sr = sector_recovery(m, 1e-3);
        if (sr.k == 0 || !sr.good_clearance) continue;
        ++used;
        CHECK(sr.k > sr.pieces);
        CHECK(1.0 / sr.k <= sr.min_mass + 1e-12);
        if (brute_force_exponent(m) < sector_bound(sr.k, m.delta, m.lambda, m.inv_norm())) ++violations;
    }
    CHECK(used == 60);
    CHECK(violations == 0);
}

TEST_CASE("doubling map with constant diagonal matrices never raises the Hoelder constant") {
    ExpandingMapModel m;
    m.d = 2;
    m.cocycle = [](double) { return diag(1.5, 1.0); };
    m.sector = [](double) { return Arc{0, kPi}; };
    const auto r = holder_family_check(m, 1000, 20, 3);
    CHECK(r.q == doctest::Approx(0.75));
    CHECK(r.c_pa < 1e-12);
    CHECK(r.max_growth <= 1.0);
    CHECK(r.max_growth <= r.b_A / 2 + 1e-9);
    CHECK(r.max_output_constant <= r.max_input_constant);
}

TEST_CASE("H6 and H8 violations are rejected") {
    ExpandingMapModel m;
    m.d = 1;
    m.cocycle = [](double) { return diag(1.5, 1.0); };
    m.sector = [](double) { return Arc{0, kPi}; };
    CHECK_THROWS_WITH_AS(holder_family_check(m), doctest::Contains("H6"), HypothesisViolated);
    m.d = 2;
    m.cocycle = [](double) { return diag(2.0, 1.0); };  // q = 1
    CHECK_THROWS_WITH_AS(holder_family_check(m), doctest::Contains("H8"), HypothesisViolated);
    m.cocycle = [](double x) { return Eigen::Matrix2d(diag(1.5, 1.0) * rot(3 * x)); };
    m.alpha = 0.01;
    CHECK_THROWS_WITH_AS(holder_family_check(m), doctest::Contains("H8"), HypothesisViolated);
}

TEST_CASE("proper sector without recovery branches violates H7") {
    ExpandingMapModel m;
    m.d = 8;
    m.cocycle = [](double) { return diag(4.0, 1.0); };
    m.sector = [](double) { return Arc{kPi - 0.4, 0.8}; };
    m.lambda = 3.0;
    CHECK_THROWS_WITH_AS(holder_family_check(m), doctest::Contains("H7"), HypothesisViolated);
}

TEST_CASE("compliant expanding models keep fields within C0") {
    for (int i = 0; i < 8; ++i) {
        const auto model = random_expanding_model(5, i);
        const auto r = holder_family_check(model, 600, 10, i);
        INFO("model " << i << " C0 " << r.c0 << " out " << r.max_output_constant);
        CHECK(r.q < 1);
        CHECK(r.c0 == doctest::Approx(r.c_pa / ((1 - r.q) * model.d)));
        CHECK(r.invariant);
        CHECK(r.max_output_constant <= r.c0 * (1 + 1e-9));
        CHECK(r.step_slack <= 1e-9);
        CHECK(r.recovery_mass >= 1.0 / r.k - 1e-12);
        CHECK(r.recovery_clearance >= model.alpha / 2);
        CHECK(r.bound == doctest::Approx(sector_bound(r.k, r.delta, model.lambda, r.inv_norm)));
    }
}

// ---------------------------------------------------------------- serialization

TEST_CASE("model text round-trips exactly") {
    for (int i = 0; i < 10; ++i) {
        const auto m = random_adapted_model(51, i);
        const std::string text = model_to_string(m);
        const auto back = model_from_string(text);
        CHECK(model_to_string(back) == text);
        REQUIRE(back.atoms.size() == m.atoms.size());
        CHECK(back.beta == m.beta);
        CHECK(back.atoms[0].children[0].matrix == m.atoms[0].children[0].matrix);
        CHECK(brute_force_exponent(back) == brute_force_exponent(m));
    }
}

TEST_CASE("malformed model text is rejected") {
    CHECK_THROWS_AS(model_from_string(""), ValidationError);
    CHECK_THROWS_AS(model_from_string("adapted-model 2\nend\n"), ValidationError);
    CHECK_THROWS_AS(model_from_string("adapted-model 1\natom 0 1 0 1\nend\n"), ValidationError);
    CHECK_THROWS_AS(model_from_string("adapted-model 1\nparams 0.3 0.1 2\natom 0 1 0 1\n"), ValidationError);
    CHECK_THROWS_AS(model_from_string("adapted-model 1\nparams 0.3 0.1 2\natom 0 1 0 1\nchild 0 3 1 1 1 0 0 1\nend\n"),
                    ValidationError);
    CHECK_THROWS_AS(model_from_string("adapted-model 1\nparams 0.3 0.1 2\nwhat 1\nend\n"), ValidationError);
    const auto ok = model_from_string("adapted-model 1\nparams 0.3 0.1 2\natom 0 1 0 1\nchild 0 0 1 1 2 0 0 0.5\nend\n");
    CHECK(ok.atoms.size() == 1);
    CHECK(ok.atoms[0].children[0].good);
}
