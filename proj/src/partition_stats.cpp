#include "shearlyap/partition_stats.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "shearlyap/errors.hpp"
#include "shearlyap/parallel.hpp"
#include "shearlyap/rng.hpp"
#include "shearlyap/stats.hpp"

namespace shearlyap {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double angle_between(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    const double c = std::abs(a.dot(b)) / (a.norm() * b.norm());
    return std::acos(std::min(1.0, c));
}

}  // namespace

LeafField::LeafField(const ShearGeometry& g, int n, double t, const LeafOptions& opt)
    : g_(g), n_(n), t_(t), opt_(opt), sys_(g.system(n, t)), inv_(sys_.inverse()) {
    gamma_ = opt.gamma >= 0 ? opt.gamma : minimal_invariant_cone(g, n, t);
    if (!(gamma_ < 1)) throw ConeLoss("no invariant unstable cone at n = " + std::to_string(n) +
                                      ", t = " + std::to_string(t));
    if (opt_.max_step <= 0) opt_.max_step = g.crossing_length() / 64.0;
}

double LeafField::deviation(const Eigen::VectorXd& dir) const {
    const Eigen::VectorXd z = g_.eig_inv * dir;
    return z.tail(g_.dim - 1).norm() / std::abs(z(0));
}

Eigen::VectorXd LeafField::decomposed(const Eigen::VectorXd& dir) const {
    const Eigen::VectorXd z = g_.eig_inv * dir;
    return dir / z(0);
}

Eigen::VectorXd LeafField::direction(const Eigen::VectorXd& lifted) const {
    const TorusPoint p = TorusPoint::from_lifted(lifted);
    const Eigen::VectorXd vu = g_.eig.col(0);
    std::vector<TorusPoint> back{p};
    Eigen::VectorXd prev;
    for (int depth = 1; depth <= opt_.max_depth; ++depth) {
        back.push_back(inv_.apply(back.back()));
        Eigen::VectorXd v = vu;
        for (int k = depth; k >= 1; --k) {
            v = sys_.derivative(back[k]) * v;
            v.normalize();
            if (deviation(v) > gamma_ + 1e-12)
                throw ConeLoss("unstable direction left the cone of size " + std::to_string(gamma_));
        }
        if (v.dot(vu) < 0) v = -v;
        if (depth > 1 && angle_between(v, prev) < opt_.angle_tol) return v;
        prev = v;
    }
    throw NotConverged("unstable direction did not settle within the depth cap");
}

double LeafField::expansion(const Eigen::VectorXd& lifted, const Eigen::VectorXd& dir) const {
    return (sys_.derivative(TorusPoint::from_lifted(lifted)) * dir).norm() / dir.norm();
}

Eigen::VectorXd UnstableSegment::at(double s) const {
    if (nodes.empty()) throw DomainError("empty segment");
    if (s <= arc.front()) return nodes.front();
    if (s >= arc.back()) return nodes.back();
    const auto it = std::upper_bound(arc.begin(), arc.end(), s);
    const std::size_t j = static_cast<std::size_t>(it - arc.begin());
    const std::size_t i = j - 1;
    const double h = arc[j] - arc[i];
    const double u = (s - arc[i]) / h;
    const double h00 = 2 * u * u * u - 3 * u * u + 1, h10 = u * u * u - 2 * u * u + u;
    const double h01 = -2 * u * u * u + 3 * u * u, h11 = u * u * u - u * u;
    return h00 * nodes[i] + h10 * h * directions[i] + h01 * nodes[j] + h11 * h * directions[j];
}

UnstableSegment grow_unstable_segment(const LeafField& field, const TorusPoint& p0, double target_length) {
    if (!(target_length > 0)) throw DomainError("segment length must be positive");
    const LeafOptions& opt = field.options();
    auto rk4 = [&](const Eigen::VectorXd& y, const Eigen::VectorXd& k1, double h) {
        const Eigen::VectorXd k2 = field.direction(y + 0.5 * h * k1);
        const Eigen::VectorXd k3 = field.direction(y + 0.5 * h * k2);
        const Eigen::VectorXd k4 = field.direction(y + h * k3);
        return Eigen::VectorXd(y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4));
    };

    UnstableSegment seg;
    seg.anchor = p0;
    seg.gamma = field.gamma();
    Eigen::VectorXd y = p0.lifted();
    Eigen::VectorXd d = field.direction(y);
    seg.nodes.push_back(y);
    seg.directions.push_back(d);
    seg.arc.push_back(0.0);
    seg.image_arc.push_back(0.0);
    double prev_expansion = field.expansion(y, d);
    double s = 0, h = opt.max_step;
    while (s < target_length) {
        const double step = std::min(h, target_length - s);
        const Eigen::VectorXd full = rk4(y, d, step);
        const Eigen::VectorXd half = rk4(y, d, 0.5 * step);
        const Eigen::VectorXd two = rk4(half, field.direction(half), 0.5 * step);
        const double err = (two - full).norm() / 15.0;
        if (err > opt.tolerance * step && step > 1e-12) {
            h = 0.5 * step;
            continue;
        }
        y = two + (two - full) / 15.0;
        s += step;
        d = field.direction(y);
        const double e = field.expansion(y, d);
        seg.nodes.push_back(y);
        seg.directions.push_back(d);
        seg.arc.push_back(s);
        seg.image_arc.push_back(seg.image_arc.back() + 0.5 * step * (e + prev_expansion));
        prev_expansion = e;
        h = std::min(opt.max_step, 2 * step);
    }
    seg.length = s;
    return seg;
}

double density_ratio(const LeafField& field, const UnstableSegment& seg, std::size_t i, std::size_t j) {
    return field.decomposed(seg.directions.at(i)).norm() / field.decomposed(seg.directions.at(j)).norm();
}

double max_density_ratio(const LeafField& field, const UnstableSegment& seg) {
    double lo = INFINITY, hi = 0;
    for (const auto& d : seg.directions) {
        const double r = field.decomposed(d).norm();
        lo = std::min(lo, r);
        hi = std::max(hi, r);
    }
    return hi / lo;
}

namespace {

// Arc length where the lifted x coordinate equals `x`, assuming x is monotone
// along the segment (the unstable direction is transverse to the yz-tori).
double arc_at_x(const UnstableSegment& seg, double x) {
    const bool up = seg.nodes.back()(0) > seg.nodes.front()(0);
    auto coord = [&](std::size_t k) { return up ? seg.nodes[k](0) : -seg.nodes[k](0); };
    const double target = up ? x : -x;
    std::size_t lo = 0, hi = seg.nodes.size() - 1;
    while (hi - lo > 1) {
        const std::size_t mid = (lo + hi) / 2;
        (coord(mid) < target ? lo : hi) = mid;
    }
    double a = seg.arc[lo], b = seg.arc[hi];
    for (int it = 0; it < 80 && b - a > 1e-15; ++it) {
        const double m = 0.5 * (a + b);
        ((up ? seg.at(m)(0) : -seg.at(m)(0)) < target ? a : b) = m;
    }
    return 0.5 * (a + b);
}

// Arc length where the image arc length equals S (linear within a node gap).
double arc_at_image(const UnstableSegment& seg, double image) {
    if (image <= 0) return 0;
    if (image >= seg.image_length()) return seg.length;
    const auto it = std::upper_bound(seg.image_arc.begin(), seg.image_arc.end(), image);
    const std::size_t j = static_cast<std::size_t>(it - seg.image_arc.begin()), i = j - 1;
    const double u = (image - seg.image_arc[i]) / (seg.image_arc[j] - seg.image_arc[i]);
    return seg.arc[i] + u * (seg.arc[j] - seg.arc[i]);
}

double image_at_arc(const UnstableSegment& seg, double s) {
    if (s <= 0) return 0;
    if (s >= seg.length) return seg.image_length();
    const auto it = std::upper_bound(seg.arc.begin(), seg.arc.end(), s);
    const std::size_t j = static_cast<std::size_t>(it - seg.arc.begin()), i = j - 1;
    const double u = (s - seg.arc[i]) / (seg.arc[j] - seg.arc[i]);
    return seg.image_arc[i] + u * (seg.image_arc[j] - seg.image_arc[i]);
}

// Density-weighted mass of [s0, s1], trapezoid on the nodes plus interpolation.
class DensityIntegral {
public:
    DensityIntegral(const LeafField& f, const UnstableSegment& seg) : seg_(seg) {
        for (const auto& d : seg.directions) rho_.push_back(f.decomposed(d).norm());
        cum_.push_back(0);
        for (std::size_t k = 1; k < rho_.size(); ++k)
            cum_.push_back(cum_.back() + 0.5 * (seg.arc[k] - seg.arc[k - 1]) * (rho_[k] + rho_[k - 1]));
    }
    double upto(double s) const {
        if (s <= 0) return 0;
        if (s >= seg_.length) return cum_.back();
        const auto it = std::upper_bound(seg_.arc.begin(), seg_.arc.end(), s);
        const std::size_t j = static_cast<std::size_t>(it - seg_.arc.begin()), i = j - 1;
        const double h = s - seg_.arc[i];
        const double r = rho_[i] + (rho_[j] - rho_[i]) * h / (seg_.arc[j] - seg_.arc[i]);
        return cum_[i] + 0.5 * h * (rho_[i] + r);
    }
    double between(double a, double b) const { return upto(b) - upto(a); }
    double total() const { return cum_.back(); }

private:
    const UnstableSegment& seg_;
    std::vector<double> rho_, cum_;
};

}  // namespace

std::vector<double> crossing_lengths(const UnstableSegment& seg, double strip) {
    const double x0 = seg.nodes.front()(0), x1 = seg.nodes.back()(0);
    const double lo = std::min(x0, x1), hi = std::max(x0, x1);
    std::vector<double> cuts;
    for (double k = std::ceil(lo / strip); k * strip <= hi; k += 1) cuts.push_back(arc_at_x(seg, k * strip));
    std::sort(cuts.begin(), cuts.end());
    std::vector<double> out;
    for (std::size_t i = 1; i < cuts.size(); ++i) out.push_back(cuts[i] - cuts[i - 1]);
    return out;
}

AtomSplit atom_split(const LeafField& field, const UnstableSegment& seg, const AtomSpec& spec) {
    const ShearGeometry& g = field.geometry();
    const RegionSpec region{spec.alpha, spec.region_t > 0 ? spec.region_t : field.t()};
    const double w = bad_half_width(region);
    const double ell = spec.atom_length > 0 ? spec.atom_length : 25.0 * g.crossing_length();

    // Region boundaries crossed by the segment, in arc length, with the region
    // each interval between consecutive boundaries belongs to.
    const double x0 = seg.nodes.front()(0), x1 = seg.nodes.back()(0);
    const double lo = std::min(x0, x1), hi = std::max(x0, x1);
    std::vector<double> cuts{0.0, seg.length};
    int strips = 0;
    for (double k = std::floor(lo * 2) - 1; k <= std::ceil(hi * 2) + 1; k += 1) {
        const double centre = 0.25 + 0.5 * k;
        const double a = centre - w, b = centre + w;
        if (b <= lo || a >= hi) continue;
        ++strips;
        if (a > lo) cuts.push_back(arc_at_x(seg, a));
        if (b < hi) cuts.push_back(arc_at_x(seg, b));
    }
    if (strips < spec.min_strips)
        throw TooFewStrips("segment crosses " + std::to_string(strips) + " bad strips, need " +
                           std::to_string(spec.min_strips));
    std::sort(cuts.begin(), cuts.end());

    struct Interval {
        double a, b;
        Region r;
    };
    std::vector<Interval> ivs;
    for (std::size_t i = 1; i < cuts.size(); ++i) {
        if (cuts[i] - cuts[i - 1] <= 0) continue;
        const double mid = seg.at(0.5 * (cuts[i] + cuts[i - 1]))(0);
        ivs.push_back({cuts[i - 1], cuts[i], classify_x(mid - std::floor(mid), region)});
    }

    // Pre-atoms are preimages of image atoms of length ell laid from the
    // segment start.  A good interval keeps only the pre-atoms inside it; the
    // remainder of each pre-atom it cuts is bad.
    AtomSplit out;
    out.length = seg.length;
    out.bad_strips = strips;
    auto push = [&](double a, double b, Region r, long count) {
        if (b <= a) return;
        if (!out.children.empty() && out.children.back().label == r && out.children.back().s1 == a) {
            out.children.back().s1 = b;
            out.children.back().pre_atoms += count;
        } else {
            out.children.push_back({a, b, r, count});
        }
    };
    double cursor = 0;
    for (const auto& iv : ivs) {
        if (iv.r == Region::Bad) continue;
        const double ia = image_at_arc(seg, iv.a), ib = image_at_arc(seg, iv.b);
        // The segment ends are pre-atom boundaries of P itself.
        const double first = iv.a == 0 ? 0.0 : std::ceil(ia / ell) * ell;
        const double last = iv.b == seg.length ? seg.image_length() : std::floor(ib / ell) * ell;
        if (last <= first) continue;
        const double sa = iv.a == 0 ? 0.0 : arc_at_image(seg, first);
        const double sb = iv.b == seg.length ? seg.length : arc_at_image(seg, last);
        const long count = std::lround(std::ceil(last / ell) - std::floor(first / ell));
        if (sa > cursor) {
            const long bad = std::lround(std::ceil(first / ell) - std::floor(image_at_arc(seg, cursor) / ell));
            push(cursor, sa, Region::Bad, std::max(1L, bad));
        }
        push(sa, sb, iv.r, std::max(1L, count));
        cursor = sb;
    }
    if (cursor < seg.length) {
        const long bad = std::lround(std::ceil(seg.image_length() / ell) - std::floor(image_at_arc(seg, cursor) / ell));
        push(cursor, seg.length, Region::Bad, std::max(1L, bad));
    }

    const DensityIntegral dens(field, seg);
    const double total = dens.total();
    for (const auto& c : out.children) {
        const double m = dens.between(c.s0, c.s1) / total;
        (c.label == Region::Bad ? out.mass_bad : c.label == Region::GoodPlus ? out.mass_plus : out.mass_minus) += m;
    }
    out.density_ratio_max = max_density_ratio(field, seg);
    return out;
}

std::vector<AtomRow> mass_scan(const ShearGeometry& g, int n, double t, double alpha, int atoms, std::uint64_t seed,
                               unsigned threads) {
    const LeafField field(g, n, t);
    const double d_l = 10 * g.crossing_length(), big_d = 40 * g.crossing_length();
    // Twenty bad strips need at least 20 crossings; keep a margin of one.
    const double lo = std::max(d_l, 21 * g.crossing_length());
    std::vector<AtomRow> rows(static_cast<std::size_t>(atoms));
    parallel_for(rows.size(), threads, [&](std::size_t i) {
        Rng rng(seed, 0xa70000 + i);
        const double len = rng.uniform(lo, big_d);
        const UnstableSegment seg = grow_unstable_segment(field, random_point(g.dim, seed, 0xa70000 + i), len);
        const AtomSplit split = atom_split(field, seg, AtomSpec{alpha});
        rows[i] = AtomRow{n, t, alpha, split.length, split.mass_bad, split.mass_plus, split.mass_minus,
                          split.density_ratio_max};
    });
    return rows;
}

FittedConstant fit_delta(const std::vector<AtomRow>& rows, double lam_u) {
    std::vector<double> lx, ly;
    FittedConstant c;
    for (const auto& r : rows) {
        const double x = std::pow(r.t, -r.alpha) + std::pow(lam_u, -r.n);
        if (!(r.mass_bad > 0)) continue;
        lx.push_back(std::log(x));
        ly.push_back(std::log(r.mass_bad));
        c.value = std::max(c.value, r.mass_bad / x);
    }
    c.points = static_cast<int>(lx.size());
    if (lx.size() < 3) throw PoorFit("delta_L needs at least three rows with bad mass");
    const LineFit fit = fit_line(lx, ly);
    c.r2 = fit.r2;
    c.rms_log_residual = fit_offset(lx, ly, 1.0).rms_residual;
    return c;
}

}  // namespace shearlyap
