#include "shearlyap/adapted_bound.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include <boost/multiprecision/cpp_bin_float.hpp>

#include "shearlyap/errors.hpp"
#include "shearlyap/rng.hpp"

namespace shearlyap {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kInf = std::numeric_limits<double>::infinity();

double wrap_pi(double a) {
    a = std::fmod(a, kPi);
    if (a < 0) a += kPi;
    if (a >= kPi) a -= kPi;
    return a;
}

Eigen::Vector2d unit(double angle) { return {std::cos(angle), std::sin(angle)}; }

Eigen::Matrix2d rotation(double a) {
    Eigen::Matrix2d r;
    r << std::cos(a), -std::sin(a), std::sin(a), std::cos(a);
    return r;
}

// Singular values of a 2x2 matrix, largest first.
std::pair<double, double> singular_values(const Eigen::Matrix2d& m) {
    const double f = m.squaredNorm();
    const double d = std::abs(m.determinant());
    const double disc = std::sqrt(std::max(0.0, f * f - 4 * d * d));
    const double s1 = std::sqrt((f + disc) / 2);
    return {s1, s1 > 0 ? d / s1 : 0.0};
}

double offset_in(const Arc& a, double angle) { return wrap_pi(angle - a.start); }

// Signed clearance of `inner` inside `outer`: positive distance to the boundary
// when contained, minus the overshoot otherwise.
double containment_margin(const Arc& inner, const Arc& outer) {
    if (outer.length >= kPi) return kInf;
    if (inner.length >= kPi) return -kPi;
    const double o = offset_in(outer, inner.start);
    const double tail = outer.length - o - inner.length;
    if (o <= outer.length && tail >= 0) return std::min(o, tail);
    auto outside = [&](double angle) {
        const double off = offset_in(outer, angle);
        return off <= outer.length ? 0.0 : std::min(off - outer.length, kPi - off);
    };
    const double out = std::max(outside(inner.start), outside(inner.start + inner.length));
    return out > 0 ? -out : -(kPi - outer.length);  // inner swallows the complement
}

void validate(const BoundInputs& in) {
    auto bad = [](const std::string& what) { throw DomainError(what); };
    if (!(in.beta > 0 && in.beta < 1)) bad("beta must lie in (0,1)");
    if (!(in.delta >= 0 && in.delta < 1)) bad("delta must lie in [0,1)");
    if (!(in.lambda > 0) || !std::isfinite(in.lambda)) bad("lambda must be positive");
    if (!(in.inv_norm > 0) || !std::isfinite(in.inv_norm)) bad("inv_norm must be positive");
    if (!(in.lambda * in.inv_norm > 1)) bad("lambda must exceed 1/||A^-1||");
}

// Weighted directions per atom, the law of the pushed field Y^k.
struct Mass {
    int atom;
    double angle;
    double weight;
};

std::vector<Mass> merge(std::vector<Mass> v, double bin) {
    std::sort(v.begin(), v.end(), [](const Mass& a, const Mass& b) {
        return a.atom != b.atom ? a.atom < b.atom : a.angle < b.angle;
    });
    std::vector<Mass> out;
    for (const Mass& x : v) {
        if (!out.empty() && out.back().atom == x.atom && x.angle - out.back().angle <= bin) {
            out.back().weight += x.weight;
            continue;
        }
        out.push_back(x);
    }
    return out;
}

struct StepResult {
    std::vector<Mass> next;
    double increment = 0;
    double good = 0;
};

StepResult push(const AdaptedFamilyModel& m, const std::vector<Mass>& cur) {
    StepResult r;
    r.next.reserve(cur.size() * 4);
    for (const Mass& x : cur) {
        const Eigen::Vector2d v = unit(x.angle);
        for (const auto& c : m.atoms[x.atom].children) {
            if (c.weight <= 0) continue;
            const Eigen::Vector2d w = c.matrix * v;
            const double w_mass = x.weight * c.weight;
            r.increment += w_mass * std::log(w.norm());
            const double a = projective_angle(w);
            if (in_sector(m.atoms[c.target].sector, a)) r.good += w_mass;
            r.next.push_back({c.target, a, w_mass});
        }
    }
    return r;
}

double good_mass(const AdaptedFamilyModel& m, const std::vector<Mass>& cur) {
    double g = 0;
    for (const Mass& x : cur)
        if (in_sector(m.atoms[x.atom].sector, x.angle)) g += x.weight;
    return g;
}

}  // namespace

// ---------------------------------------------------------------- closed forms

double lower_bound(const BoundInputs& in) {
    validate(in);
    const double c = (in.beta * in.delta + in.delta) / (in.beta + in.delta);
    return std::log(in.lambda) - c * std::log(in.lambda * in.inv_norm);
}

double lower_bound_product_form(const BoundInputs& in) {
    validate(in);
    const double w = in.beta / (in.beta + in.delta);
    return w * ((1 - in.delta) * std::log(in.lambda) - (in.delta + in.delta / in.beta) * std::log(in.inv_norm));
}

double lower_bound_third(double delta, double lambda, double inv_norm) {
    validate({1.0 / 3.0, delta, lambda, inv_norm});
    return ((1 - delta) * std::log(lambda) - 4 * delta * std::log(inv_norm)) / (1 + 3 * delta);
}

double sector_bound(int k, double delta, double lambda, double inv_norm) {
    if (k < 2) throw DomainError("k must be at least 2");
    validate({1.0 / k, delta, lambda, inv_norm});
    return ((1 - delta) * std::log(lambda) - (k + 1) * delta * std::log(inv_norm)) / (1 + k * delta);
}

GoodBadTrace recursion_trace(double beta, double delta, int n_steps) {
    if (!(beta > 0 && beta < 1) || !(delta >= 0 && delta < 1) || n_steps < 0)
        throw DomainError("recursion needs beta in (0,1), delta in [0,1), N >= 0");
    GoodBadTrace tr;
    tr.floor = beta / (beta + delta);
    tr.g.reserve(n_steps + 1);
    // g_n - floor shrinks below double resolution long before n = 10^4, so its
    // sign is followed through e_{n+1} = (1 - beta - delta) e_n in a float
    // with a wide exponent.
    using Wide = boost::multiprecision::cpp_bin_float_50;
    const Wide rate = Wide(1) - Wide(beta) - Wide(delta);
    Wide dev = Wide(delta) / (Wide(beta) + Wide(delta));
    bool positive = true;
    double g = 1.0;
    tr.min_margin = kInf;
    for (int n = 0; n <= n_steps; ++n) {
        tr.g.push_back(g);
        tr.b.push_back(1 - g);
        tr.min_margin = std::min(tr.min_margin, g - tr.floor);
        positive = positive && dev > 0;
        g = (1 - beta - delta) * g + beta;
        dev *= rate;
    }
    tr.above_floor = positive || delta == 0;
    return tr;
}

double recursion_closed_form(double beta, double delta, int n) {
    return beta / (beta + delta) + std::pow(1 - beta - delta, n) * delta / (beta + delta);
}

// ---------------------------------------------------------------- arcs

bool in_sector(const Arc& sector, double angle) {
    if (sector.length < 0) return false;
    return sector.length >= kPi || offset_in(sector, angle) <= sector.length;
}

Arc image_arc(const Eigen::Matrix2d& m, const Arc& a) {
    if (a.length >= kPi) return {0.0, kPi};
    const double e0 = projective_angle(m * unit(a.start));
    if (a.length <= 0) return {e0, 0.0};
    const double e1 = projective_angle(m * unit(a.start + a.length));
    Arc out;
    if (m.determinant() > 0) {
        out.start = e0;
        out.length = wrap_pi(e1 - e0);
    } else {
        out.start = e1;
        out.length = wrap_pi(e0 - e1);
    }
    return out;
}

double min_norm_on_arc(const Eigen::Matrix2d& m, const Arc& a) {
    // |m u(t)|^2 = p + q cos 2t + r sin 2t
    const Eigen::Matrix2d s = m.transpose() * m;
    const double p = (s(0, 0) + s(1, 1)) / 2, q = (s(0, 0) - s(1, 1)) / 2, r = s(0, 1);
    auto f = [&](double t) { return p + q * std::cos(2 * t) + r * std::sin(2 * t); };
    const double amp = std::hypot(q, r);
    if (a.length >= kPi) return std::sqrt(std::max(0.0, p - amp));
    double best = std::min(f(a.start), f(a.start + a.length));
    const double t_min = wrap_pi((std::atan2(r, q) + kPi) / 2);
    if (in_sector(a, t_min)) best = std::min(best, p - amp);
    return std::sqrt(std::max(0.0, best));
}

// ---------------------------------------------------------------- models

double AdaptedFamilyModel::inv_norm() const {
    double worst = 0;
    for (const auto& a : atoms)
        for (const auto& c : a.children) {
            const auto [s1, s2] = singular_values(c.matrix);
            (void)s1;
            if (s2 <= 0) throw DomainError("singular branch matrix");
            worst = std::max(worst, 1 / s2);
        }
    return worst;
}

void AdaptedFamilyModel::check_structure(double tol) const {
    const int k = static_cast<int>(atoms.size());
    if (k == 0) throw DomainError("model has no atoms");
    std::vector<double> pushed(k, 0.0);
    double total = 0;
    for (int a = 0; a < k; ++a) {
        const auto& atom = atoms[a];
        if (atom.children.empty()) throw DomainError("atom " + std::to_string(a) + " has no children");
        double s = 0;
        for (const auto& c : atom.children) {
            if (c.target < 0 || c.target >= k) throw DomainError("child target out of range");
            if (c.weight < 0) throw DomainError("negative child weight");
            s += c.weight;
            pushed[c.target] += atom.weight * c.weight;
        }
        if (std::abs(s - 1) > tol) throw DomainError("child weights of atom " + std::to_string(a) + " sum to " + std::to_string(s));
        total += atom.weight;
    }
    if (std::abs(total - 1) > tol) throw DomainError("atom weights sum to " + std::to_string(total));
    for (int a = 0; a < k; ++a)
        if (std::abs(pushed[a] - atoms[a].weight) > tol)
            throw DomainError("atom weights are not stationary at atom " + std::to_string(a));
}

bool ModelVerification::all() const {
    return std::all_of(h.begin(), h.end(), [](const HypothesisResult& r) { return r.ok; });
}

namespace {

ModelVerification blank_verification() {
    ModelVerification v;
    for (int i = 0; i < 5; ++i) {
        v.h[i].name = "H" + std::to_string(i + 1);
        v.h[i].margin = kInf;
    }
    return v;
}

void settle(ModelVerification& v) {
    for (auto& r : v.h) r.ok = r.margin > 0;
    // H2 only asks for a nonempty sector; a single direction is enough.
    v.h[1].ok = v.h[1].margin >= 0;
}

void verify_atom(const AdaptedFamilyModel& m, int a, ModelVerification& v) {
    auto record = [](HypothesisResult& r, double margin, int atom, int child, double angle) {
        if (margin < r.margin) {
            r.margin = margin;
            r.atom = atom;
            r.child = child;
            r.angle = angle;
        }
    };
    const ModelAtom& atom = m.atoms[a];
    double good = 0;
    for (const auto& c : atom.children)
        if (c.good) good += c.weight;
    record(v.h[0], good - (1 - m.delta), a, -1, 0);
    record(v.h[1], atom.sector.length, a, -1, atom.sector.start);
    if (atom.sector.length < 0) return;

    for (int ci = 0; ci < static_cast<int>(atom.children.size()); ++ci) {
        const ModelChild& c = atom.children[ci];
        if (!c.good) continue;
        record(v.h[2], min_norm_on_arc(c.matrix, atom.sector) - m.lambda, a, ci, atom.sector.start);
        const Arc img = image_arc(c.matrix, atom.sector);
        record(v.h[3], containment_margin(img, m.atoms[c.target].sector), a, ci, atom.sector.start);
    }

    // H5: the recovering mass is piecewise constant in the bad direction,
    // with breaks at the preimages of the target sector boundaries.
    if (atom.sector.length >= kPi) return;
    const Arc comp{wrap_pi(atom.sector.start + atom.sector.length), kPi - atom.sector.length};
    std::vector<double> cuts{0.0, comp.length};
    std::vector<Arc> pre;
    for (const auto& c : atom.children) {
        const Arc p = image_arc(c.matrix.inverse(), m.atoms[c.target].sector);
        pre.push_back(p);
        if (p.length >= kPi) continue;
        for (double e : {p.start, p.start + p.length}) {
            const double o = offset_in(comp, e);
            if (o > 0 && o < comp.length) cuts.push_back(o);
        }
    }
    std::sort(cuts.begin(), cuts.end());
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        if (cuts[i + 1] - cuts[i] <= 0) continue;
        const double angle = wrap_pi(comp.start + (cuts[i] + cuts[i + 1]) / 2);
        double mass = 0;
        for (std::size_t ci = 0; ci < atom.children.size(); ++ci)
            if (in_sector(pre[ci], angle)) mass += atom.children[ci].weight;
        record(v.h[4], mass - m.beta, a, -1, angle);
    }
}

}  // namespace

ModelVerification verify_model(const AdaptedFamilyModel& m) {
    ModelVerification v = blank_verification();
    for (int a = 0; a < static_cast<int>(m.atoms.size()); ++a) verify_atom(m, a, v);
    settle(v);
    return v;
}

double field_energy(const AdaptedFamilyModel& m, const Field& x) {
    const Eigen::Vector2d v = unit(x.angle);
    double e = 0;
    for (const auto& c : m.atoms.at(x.atom).children) e += c.weight * std::log((c.matrix * v).norm());
    return e;
}

namespace {

void direct_walk(const AdaptedFamilyModel& m, int atom, const Eigen::Vector2d& v, double w, int depth, double& acc) {
    if (depth == 0) {
        acc += w * std::log(v.norm());
        return;
    }
    for (const auto& c : m.atoms[atom].children)
        if (c.weight > 0) direct_walk(m, c.target, c.matrix * v, w * c.weight, depth - 1, acc);
}

void pushed_walk(const AdaptedFamilyModel& m, int atom, double angle, double w, int depth, double& acc) {
    acc += w * field_energy(m, {atom, angle});
    if (depth == 1) return;
    const Eigen::Vector2d v = unit(angle);
    for (const auto& c : m.atoms[atom].children)
        if (c.weight > 0) pushed_walk(m, c.target, projective_angle(c.matrix * v), w * c.weight, depth - 1, acc);
}

}  // namespace

double I_direct(const AdaptedFamilyModel& m, const Field& x, int n) {
    if (n < 1 || n > 12) throw DomainError("I_n enumeration supports 1 <= n <= 12");
    double acc = 0;
    direct_walk(m, x.atom, unit(x.angle), 1.0, n, acc);
    return acc;
}

double I_decomposed(const AdaptedFamilyModel& m, const Field& x, int n) {
    if (n < 1 || n > 12) throw DomainError("I_n enumeration supports 1 <= n <= 12");
    double acc = 0;
    pushed_walk(m, x.atom, wrap_pi(x.angle), 1.0, n, acc);
    return acc;
}

double In_decomposition_check(const AdaptedFamilyModel& m, const Field& x, int n) {
    return std::abs(I_direct(m, x, n) - I_decomposed(m, x, n));
}

std::vector<double> good_fractions(const AdaptedFamilyModel& m, const Field& x, int n_steps) {
    std::vector<Mass> cur{{x.atom, wrap_pi(x.angle), 1.0}};
    std::vector<double> g{good_mass(m, cur)};
    for (int k = 0; k < n_steps; ++k) {
        StepResult s = push(m, cur);
        g.push_back(s.good);
        cur = merge(std::move(s.next), 0.0);
    }
    return g;
}

namespace {

// Limit of the lazy chain (I + P)/2 from w; aperiodic, with the same
// stationary laws as P.
std::vector<double> lazy_stationary(const AdaptedFamilyModel& m, std::vector<double> w) {
    const int k = static_cast<int>(m.atoms.size());
    std::vector<double> nw(k);
    for (int it = 0; it < 100000; ++it) {
        std::fill(nw.begin(), nw.end(), 0.0);
        for (int a = 0; a < k; ++a) {
            nw[a] += 0.5 * w[a];
            for (const auto& c : m.atoms[a].children) nw[c.target] += 0.5 * w[a] * c.weight;
        }
        double diff = 0;
        for (int a = 0; a < k; ++a) diff = std::max(diff, std::abs(nw[a] - w[a]));
        w.swap(nw);
        if (diff < 1e-16) break;
    }
    return w;
}

}  // namespace

double brute_force_exponent(const AdaptedFamilyModel& m, int max_depth, double tol, int start_atom) {
    m.check_structure();
    std::vector<Mass> cur;
    // A fixed irrational direction, generic for every model we build.
    const double start_angle = wrap_pi(1.0 / std::numbers::phi);
    const int k = static_cast<int>(m.atoms.size());
    std::vector<double> law(k);
    if (start_atom >= 0) {
        if (start_atom >= k) throw DomainError("start atom out of range");
        // The component reached from the start atom, in its stationary law,
        // so periodic components do not make the increments oscillate.
        law[start_atom] = 1.0;
        law = lazy_stationary(m, law);
    } else {
        for (int a = 0; a < k; ++a) law[a] = m.atoms[a].weight;
    }
    for (int a = 0; a < k; ++a)
        if (law[a] > 0) cur.push_back({a, start_angle, law[a]});
    // Directions closer than `bin` are merged; the bin coarsens when the
    // support outgrows the budget, which only perturbs the increments at the
    // level of bin times the largest condition number.
    double bin = 1e-12;
    constexpr std::size_t budget = 200000;
    double prev = kInf;
    for (int depth = 1; depth <= max_depth; ++depth) {
        StepResult s = push(m, cur);
        cur = merge(std::move(s.next), bin);
        while (cur.size() > budget) {
            bin *= 10;
            cur = merge(std::move(cur), bin);
        }
        if (depth >= 2 && std::abs(s.increment - prev) < tol) return s.increment;
        prev = s.increment;
    }
    std::ostringstream os;
    os << "depth " << max_depth << " increments still move by more than " << tol;
    throw NotConverged(os.str());
}

// ---------------------------------------------------------------- random models

namespace {

void draw_children(Rng& rng, AdaptedFamilyModel& m, int a, const std::vector<double>& centre,
                   const std::vector<double>& half, const RandomModelSpec& spec) {
    const int k = static_cast<int>(m.atoms.size());
    const int nc = rng.integer(spec.min_children, spec.max_children);
    auto& kids = m.atoms[a].children;
    kids.assign(nc, ModelChild{});
    const double bad_mass = m.delta * rng.uniform(0.5, 0.99);
    double total = 0;
    std::vector<double> raw(nc);
    for (int c = 1; c < nc; ++c) total += raw[c] = rng.uniform(0.5, 1.5);
    for (int c = 0; c < nc; ++c) {
        ModelChild& ch = kids[c];
        // Child 1 always steps to the next atom so the chain is irreducible.
        ch.target = c == 1 ? (a + 1) % k : rng.integer(0, k - 1);
        if (c == 0) {
            ch.good = false;
            ch.weight = bad_mass;
            const Eigen::Matrix2d d = Eigen::Vector2d(rng.log_uniform(0.2, 3.0), rng.log_uniform(0.2, 3.0)).asDiagonal();
            ch.matrix = rotation(rng.angle()) * d * rotation(rng.angle());
            continue;
        }
        ch.good = true;
        ch.weight = (1 - bad_mass) * raw[c] / total;
        const int b = ch.target;
        const double phi = rng.uniform(-1, 1) * 0.9 * (kPi / 2 - half[a]);
        const double reach = half[a] + std::abs(phi);
        const double eps = rng.log_uniform(1e-3, 0.1);
        const double s1 = m.lambda * rng.uniform(1.0, 1.5) / std::cos(reach);
        const double spread = std::atan(eps * std::tan(reach));
        const double room = std::max(0.0, half[b] - spread);
        const double r = rng.uniform(-0.8, 0.8) * room;
        const Eigen::Matrix2d d = Eigen::Vector2d(s1, eps * s1).asDiagonal();
        ch.matrix = rotation(centre[b] + r) * d * rotation(-(centre[a] + phi));
    }
}

// Draws (beta, delta, lambda) and sectors, then rejection-samples the
// children of each atom until that atom passes H1-H5.  Returns false when
// some atom keeps failing, so the caller redraws the parameters.
bool draw_model(Rng& rng, const RandomModelSpec& spec, AdaptedFamilyModel& m) {
    m = AdaptedFamilyModel{};
    m.delta = rng.log_uniform(spec.delta_lo, spec.delta_hi);
    m.beta = rng.log_uniform(spec.beta_lo, spec.beta_hi);
    m.lambda = rng.log_uniform(spec.lambda_lo, spec.lambda_hi);
    const int k = rng.integer(spec.min_atoms, spec.max_atoms);
    m.atoms.resize(k);
    std::vector<double> centre(k), half(k);
    for (int a = 0; a < k; ++a) {
        centre[a] = rng.angle();
        half[a] = rng.uniform(0.15, 0.5);
        m.atoms[a].sector = {wrap_pi(centre[a] - half[a]), 2 * half[a]};
    }
    constexpr int kAtomAttempts = 50;
    for (int a = 0; a < k; ++a) {
        bool ok = false;
        for (int attempt = 0; attempt < kAtomAttempts && !ok; ++attempt) {
            draw_children(rng, m, a, centre, half, spec);
            ModelVerification v = blank_verification();
            verify_atom(m, a, v);
            settle(v);
            ok = v.all();
        }
        if (!ok) return false;
    }
    std::vector<double> w = lazy_stationary(m, std::vector<double>(k, 1.0 / k));
    double s = 0;
    for (double x : w) s += x;
    for (int a = 0; a < k; ++a) m.atoms[a].weight = w[a] / s;
    return true;
}

}  // namespace

AdaptedFamilyModel random_adapted_model(std::uint64_t seed, std::uint64_t index, const RandomModelSpec& spec) {
    Rng rng(seed, 0xad0000000ULL + index);
    for (int attempt = 0; attempt < spec.max_attempts; ++attempt) {
        AdaptedFamilyModel m;
        if (!draw_model(rng, spec, m)) continue;
        if (!(m.lambda * m.inv_norm() > 1)) continue;
        if (!verify_model(m).all()) continue;
        try {
            m.check_structure(1e-9);
        } catch (const DomainError&) {
            continue;
        }
        return m;
    }
    throw NotConverged("no model passed H1-H5 within the attempt budget");
}

SectorRecovery sector_recovery(const AdaptedFamilyModel& m, double clearance, int pieces) {
    if (pieces < 1) throw DomainError("need at least one complement piece");
    SectorRecovery r;
    r.pieces = pieces;
    r.clearance = clearance;
    r.min_mass = kInf;
    for (const auto& atom : m.atoms) {
        for (const auto& c : atom.children)
            if (c.good && containment_margin(image_arc(c.matrix, atom.sector), m.atoms[c.target].sector) < clearance)
                r.good_clearance = false;
        if (atom.sector.length >= kPi) continue;
        const double len = (kPi - atom.sector.length) / pieces;
        for (int i = 0; i < pieces; ++i) {
            const Arc piece{wrap_pi(atom.sector.start + atom.sector.length + i * len), len};
            double mass = 0;
            for (const auto& c : atom.children)
                if (containment_margin(image_arc(c.matrix, piece), m.atoms[c.target].sector) >= clearance) mass += c.weight;
            r.min_mass = std::min(r.min_mass, mass);
        }
    }
    if (!std::isfinite(r.min_mass)) r.min_mass = 1;
    r.k = r.min_mass > 0 ? std::max(pieces + 1, static_cast<int>(std::ceil(1 / r.min_mass - 1e-12))) : 0;
    return r;
}

// ---------------------------------------------------------------- Hoelder construction

namespace {

double angle_gap(double a, double b) { return projective_distance(a, b); }

double holder_constant(const std::vector<double>& xs, const std::vector<double>& angles, double theta) {
    double c = 0;
    for (std::size_t i = 0; i < xs.size(); ++i)
        for (std::size_t j = i + 1; j < xs.size(); ++j)
            c = std::max(c, angle_gap(angles[i], angles[j]) / std::pow(xs[j] - xs[i], theta));
    return c;
}

[[noreturn]] void violated(const std::string& h, const std::string& what, double margin) {
    std::ostringstream os;
    os << h << ": " << what << " (margin " << margin << ")";
    throw HypothesisViolated(os.str());
}

}  // namespace

HolderReport holder_family_check(const ExpandingMapModel& model, int grid, int fields, std::uint64_t seed) {
    if (!(model.d > 1)) violated("H6", "expansion factor must exceed 1", model.d - 1.0);
    if (!(model.theta > 0 && model.theta <= 1)) throw DomainError("theta must lie in (0,1]");
    if (!model.cocycle || !model.sector) throw DomainError("cocycle and sector must be set");
    if (grid < 10) throw DomainError("grid too small");
    const int d = model.d;
    std::vector<bool> good = model.good_branch;
    if (good.empty()) good.assign(d, true);
    if (static_cast<int>(good.size()) != d) throw DomainError("good_branch needs one flag per branch");

    std::vector<double> xs(grid);
    for (int i = 0; i < grid; ++i) xs[i] = (i + 0.5) / grid;
    HolderReport r;
    for (int i = 0; i < grid; ++i) {
        const auto [s1, s2] = singular_values(model.cocycle(xs[i]));
        if (s2 <= 0) throw DomainError("singular cocycle value");
        r.b_A = std::max(r.b_A, s1 / s2);
        r.inv_norm = std::max(r.inv_norm, 1 / s2);
    }
    const double dt = std::pow(static_cast<double>(d), model.theta);
    r.q = r.b_A / dt;
    if (r.q >= 1) violated("H8", "q = b(A)/d^theta must be below 1", 1 - r.q);

    // Projective Hoelder constant in the base point inside each branch, over
    // neighbouring grid points and a fan of directions.
    constexpr int kDirs = 32;
    for (int j = 0; j < d; ++j) {
        Eigen::Matrix2d prev = model.cocycle((xs[0] + j) / d);
        for (int i = 0; i + 1 < grid; ++i) {
            const Eigen::Matrix2d next = model.cocycle((xs[i + 1] + j) / d);
            const double step = std::pow((xs[i + 1] - xs[i]) / d, model.theta);
            for (int k = 0; k < kDirs; ++k) {
                const Eigen::Vector2d v = unit(kPi * k / kDirs);
                r.c_pa = std::max(r.c_pa, angle_gap(projective_angle(prev * v), projective_angle(next * v)) / step);
            }
            prev = next;
        }
    }
    const double diam = 1.0;
    r.c0 = r.c_pa / ((1 - r.q) * dt);
    r.h8_second = r.c_pa * r.c_pa * std::pow(diam, model.theta) / ((1 - r.q) * dt);
    if (!(r.h8_second < model.alpha / 2))
        violated("H8", "C^2 r^theta / ((1-q) d^theta) must stay below alpha/2", model.alpha / 2 - r.h8_second);

    // H7 on the grid: good branches keep the sector with clearance alpha and
    // expand it by lambda; recovery branches send their piece inside.
    const int pieces = static_cast<int>(model.recovery_branches.size());
    double bad_mass = 0;
    for (int j = 0; j < d; ++j)
        if (!good[j]) bad_mass += 1.0 / d;
    r.delta = bad_mass;
    auto branch_point = [&](int j, double y) { return (y + j) / d; };
    for (int j = 0; j < d; ++j) {
        if (!good[j]) continue;
        for (int i = 0; i < grid; ++i) {
            const double x = branch_point(j, xs[i]);
            const Eigen::Matrix2d a = model.cocycle(x);
            const Arc s = model.sector(x);
            const double margin = containment_margin(image_arc(a, s), model.sector(xs[i])) - model.alpha;
            if (margin < 0) violated("H7", "good branch " + std::to_string(j) + " loses the sector clearance", margin);
            const double expansion = min_norm_on_arc(a, s) - model.lambda;
            if (expansion < 0) violated("H7", "good branch " + std::to_string(j) + " expands less than lambda", expansion);
        }
    }
    int smallest = d;
    bool full_sector = true;
    for (int i = 0; i < grid; ++i) full_sector = full_sector && model.sector(xs[i]).length >= kPi;
    if (!full_sector && pieces == 0) violated("H7", "no recovery branches for a proper sector", -1);
    for (int p = 0; p < pieces; ++p) {
        const auto& branches = model.recovery_branches[p];
        smallest = std::min<int>(smallest, branches.size());
        for (int j : branches) {
            if (j < 0 || j >= d) throw DomainError("recovery branch out of range");
            for (int i = 0; i < grid; ++i) {
                const double x = branch_point(j, xs[i]);
                const Arc s = model.sector(x);
                const double len = (kPi - s.length) / pieces;
                const Arc piece{wrap_pi(s.start + s.length + p * len), len};
                const double margin =
                    containment_margin(image_arc(model.cocycle(x), piece), model.sector(xs[i])) - model.alpha;
                if (margin < 0)
                    violated("H7", "recovery branch " + std::to_string(j) + " misses the sector", margin);
            }
        }
    }
    if (pieces > 0) {
        if (smallest == 0) violated("H7", "a complement piece has no recovery branch", -1);
        r.k = std::max(pieces + 1, (d + smallest - 1) / smallest);
    } else {
        r.k = 2;
    }

    // Pushforward of random (C_X, theta)-Hoelder fields with C_X <= C0.
    Rng rng(seed, 0x401de7);
    constexpr int kModes = 4;
    const int sub = std::min(grid, 200);  // pair sums are quadratic in the grid
    std::vector<double> ys(sub);
    for (int i = 0; i < sub; ++i) ys[i] = (i + 0.5) / sub;
    r.recovery_mass = pieces > 0 ? 1.0 : 0.0;
    r.step_slack = -kInf;
    r.recovery_clearance = kInf;
    for (int f = 0; f < fields; ++f) {
        double amp[kModes], phase[kModes], norm = 0;
        for (int k = 0; k < kModes; ++k) {
            amp[k] = rng.uniform(-1, 1);
            phase[k] = rng.uniform(0, 2 * kPi);
            norm += 2 * kPi * (k + 1) * std::abs(amp[k]);
        }
        const double cx = (r.c0 > 0 ? r.c0 : 1.0) * rng.uniform(0.2, 1.0);
        const double base = rng.angle();
        auto field = [&](double x) {
            double h = 0;
            for (int k = 0; k < kModes; ++k) h += amp[k] * std::sin(2 * kPi * (k + 1) * x + phase[k]);
            return wrap_pi(base + cx * h / norm);
        };
        std::vector<double> in(sub);
        for (int i = 0; i < sub; ++i) in[i] = field(ys[i]);
        const double c_in = holder_constant(ys, in, model.theta);
        r.max_input_constant = std::max(r.max_input_constant, c_in);
        std::vector<int> recovered_pieces;
        for (int j = 0; j < d; ++j) {
            std::vector<double> out(sub);
            for (int i = 0; i < sub; ++i) {
                const double x = branch_point(j, ys[i]);
                out[i] = projective_angle(model.cocycle(x) * unit(field(x)));
            }
            const double c_out = holder_constant(ys, out, model.theta);
            r.max_output_constant = std::max(r.max_output_constant, c_out);
            // cx bounds the true constant; the grid value c_in can only undershoot it.
            r.max_growth = std::max(r.max_growth, c_out / cx);
            r.step_slack = std::max(r.step_slack, c_out - (r.b_A * cx + r.c_pa) / dt);
            if (cx <= r.c0 && c_out > r.c0 * (1 + 1e-9)) r.invariant = false;
        }
        // Transitions: a field that leaves the sector somewhere recovers on
        // the branches of the piece it falls in.
        if (pieces == 0) continue;
        for (int i = 0; i < grid; i += std::max(1, grid / 50)) {
            const double x0 = xs[i];
            const Arc s = model.sector(x0);
            const double a0 = field(x0);
            if (in_sector(s, a0)) continue;
            const double len = (kPi - s.length) / pieces;
            const int p = std::min(pieces - 1, static_cast<int>(offset_in({wrap_pi(s.start + s.length), 0}, a0) / len));
            double mass = 0;
            for (int j : model.recovery_branches[p]) {
                double worst = kInf;
                for (int yi = 0; yi < sub; ++yi) {
                    const double x = branch_point(j, ys[yi]);
                    const double img = projective_angle(model.cocycle(x) * unit(field(x)));
                    worst = std::min(worst, containment_margin({img, 0.0}, model.sector(ys[yi])));
                }
                r.recovery_clearance = std::min(r.recovery_clearance, worst);
                if (worst >= model.alpha / 2) mass += 1.0 / d;
            }
            r.recovery_mass = std::min(r.recovery_mass, mass);
            break;
        }
    }
    if (!std::isfinite(r.recovery_clearance)) r.recovery_clearance = 0;
    r.bound = r.delta > 0 ? sector_bound(r.k, r.delta, model.lambda, r.inv_norm) : std::log(model.lambda);
    return r;
}

ExpandingMapModel random_expanding_model(std::uint64_t seed, std::uint64_t index) {
    Rng rng(seed, 0xe70000000ULL + index);
    ExpandingMapModel m;
    m.d = rng.integer(12, 20);
    const int d = m.d;
    const double c0 = rng.angle();
    const double wobble = rng.uniform(0.0, 2e-3);
    const double half = rng.uniform(0.3, 0.5);
    // Contraction strong enough to squeeze a complement half, and the sector
    // itself, inside the sector with room for the clearance.
    const double piece_half = (kPi / 2 - half) / 2;
    const double kappa_min = std::tan(std::max(piece_half, half)) / std::tan(half - 0.1 - 0.02);
    const double kappa = rng.uniform(kappa_min, kappa_min + 2.0);
    const double scale = rng.log_uniform(2.0, 10.0);
    const double ripple = rng.uniform(0.0, 0.01);
    auto centre = [=](double x) { return c0 + wobble * std::sin(2 * kPi * x); };
    m.sector = [=](double x) { return Arc{wrap_pi(centre(x) - half), 2 * half}; };
    // Relative angles of the two complement halves' midpoints.
    const double mid1 = (half + kPi / 2) / 2, mid2 = (kPi / 2 + kPi - half) / 2;
    m.cocycle = [=](double x) {
        const int j = std::min(d - 1, static_cast<int>(x * d));
        const double y = x * d - j;
        const double s = scale * (1 + ripple * std::sin(2 * kPi * y));
        const Eigen::Matrix2d dm = Eigen::Vector2d(s, s / kappa).asDiagonal();
        const double turn = j == 0 ? mid1 : j == 1 ? mid2 : 0.0;
        return Eigen::Matrix2d(rotation(centre(y)) * dm * rotation(-(centre(x) + turn)));
    };
    m.good_branch.assign(d, true);
    m.good_branch[0] = m.good_branch[1] = false;
    m.recovery_branches = {{0}, {1}};
    m.lambda = scale * (1 - ripple) * std::cos(half) * 0.99;
    m.alpha = 0.1;
    return m;
}

}  // namespace shearlyap
