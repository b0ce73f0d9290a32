#include "shearlyap/lattice_linalg.hpp"

#include <algorithm>
#include <boost/multiprecision/cpp_int.hpp>
#include <cmath>
#include <deque>
#include <limits>
#include <numbers>
#include <set>
#include <sstream>

#include "shearlyap/errors.hpp"

namespace shearlyap {

namespace mp = boost::multiprecision;
using BigInt = mp::cpp_int;
using Rational = mp::cpp_rational;

namespace {

using BigMatrix = std::vector<std::vector<BigInt>>;

BigMatrix to_big(const IntMatrix& m) {
    BigMatrix b(m.rows(), std::vector<BigInt>(m.cols()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) b[i][j] = m(i, j);
    return b;
}

std::int64_t checked_narrow(const BigInt& v) {
    if (v > std::numeric_limits<std::int64_t>::max() || v < std::numeric_limits<std::int64_t>::min())
        throw DomainError("integer entry exceeds the 64-bit range");
    return static_cast<std::int64_t>(v);
}

BigInt big_det(BigMatrix a) {
    // Bareiss fraction-free elimination.
    const std::size_t n = a.size();
    BigInt sign = 1, prev = 1;
    for (std::size_t k = 0; k + 1 < n; ++k) {
        if (a[k][k] == 0) {
            std::size_t p = k + 1;
            while (p < n && a[p][k] == 0) ++p;
            if (p == n) return 0;
            std::swap(a[k], a[p]);
            sign = -sign;
        }
        for (std::size_t i = k + 1; i < n; ++i)
            for (std::size_t j = k + 1; j < n; ++j) a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) / prev;
        prev = a[k][k];
    }
    return sign * a[n - 1][n - 1];
}

// ---- rational polynomials, lowest degree first ----

using Poly = std::vector<Rational>;

void trim(Poly& p) {
    while (!p.empty() && p.back() == 0) p.pop_back();
}

int degree(const Poly& p) { return static_cast<int>(p.size()) - 1; }

Rational eval(const Poly& p, const Rational& x) {
    Rational r = 0;
    for (auto it = p.rbegin(); it != p.rend(); ++it) r = r * x + *it;
    return r;
}

int sign_of(const Rational& r) { return r > 0 ? 1 : (r < 0 ? -1 : 0); }

Poly derivative(const Poly& p) {
    Poly d;
    for (std::size_t i = 1; i < p.size(); ++i) d.push_back(p[i] * static_cast<int>(i));
    trim(d);
    return d;
}

void divmod(const Poly& num, const Poly& den, Poly& quot, Poly& rem) {
    rem = num;
    trim(rem);
    quot.assign(std::max(0, degree(rem) - degree(den) + 1), Rational(0));
    while (!rem.empty() && degree(rem) >= degree(den)) {
        int shift = degree(rem) - degree(den);
        Rational c = rem.back() / den.back();
        quot[shift] = c;
        for (std::size_t i = 0; i < den.size(); ++i) rem[i + shift] -= c * den[i];
        rem.pop_back();
        trim(rem);
    }
    trim(quot);
}

Poly make_monic(Poly p) {
    trim(p);
    if (p.empty()) return p;
    Rational lc = p.back();
    for (auto& c : p) c /= lc;
    return p;
}

Poly poly_gcd(Poly a, Poly b) {
    trim(a);
    trim(b);
    while (!b.empty()) {
        Poly q, r;
        divmod(a, b, q, r);
        a = std::move(b);
        b = std::move(r);
    }
    return make_monic(a);
}

Poly exact_div(const Poly& a, const Poly& b) {
    Poly q, r;
    divmod(a, b, q, r);
    return q;
}

Poly subtract(const Poly& a, const Poly& b) {
    Poly r(std::max(a.size(), b.size()), Rational(0));
    for (std::size_t i = 0; i < a.size(); ++i) r[i] += a[i];
    for (std::size_t i = 0; i < b.size(); ++i) r[i] -= b[i];
    trim(r);
    return r;
}

// Yun's square-free factorisation: p = prod factors[i]^(i+1) up to a constant.
std::vector<Poly> squarefree_factors(const Poly& p) {
    std::vector<Poly> out;
    Poly a = make_monic(p);
    Poly b = derivative(a);
    Poly c = poly_gcd(a, b);
    Poly w = exact_div(a, c);
    Poly y = exact_div(b, c);
    Poly z = subtract(y, derivative(w));
    while (degree(w) > 0) {
        Poly g = poly_gcd(w, z);
        out.push_back(g);
        w = exact_div(w, g);
        y = exact_div(z, g);
        z = subtract(y, derivative(w));
    }
    return out;
}

struct Sturm {
    std::vector<Poly> seq;
    explicit Sturm(const Poly& p) {
        seq.push_back(p);
        seq.push_back(derivative(p));
        while (!seq.back().empty() && degree(seq.back()) > 0) {
            Poly q, r;
            divmod(seq[seq.size() - 2], seq.back(), q, r);
            if (r.empty()) break;
            for (auto& c : r) c = -c;
            seq.push_back(r);
        }
    }
    int variations(const Rational& x) const {
        int count = 0, last = 0;
        for (const auto& s : seq) {
            int sg = sign_of(eval(s, x));
            if (sg == 0) continue;
            if (last != 0 && sg != last) ++count;
            last = sg;
        }
        return count;
    }
};

struct RationalInterval {
    Rational lo, hi;
};

// Isolates and refines the real roots of a square-free polynomial.
std::vector<RationalInterval> isolate_roots(const Poly& p, const Rational& width) {
    std::vector<RationalInterval> roots;
    if (degree(p) <= 0) return roots;
    Rational bound = 0;
    for (std::size_t i = 0; i + 1 < p.size(); ++i) bound = std::max(bound, Rational(mp::abs(p[i] / p.back())));
    bound += 1;
    Rational lo = -bound, hi = bound;
    Sturm st(p);
    std::vector<RationalInterval> stack{{lo, hi}};
    std::vector<RationalInterval> isolated;
    while (!stack.empty()) {
        RationalInterval iv = stack.back();
        stack.pop_back();
        int n = st.variations(iv.lo) - st.variations(iv.hi);
        if (n == 0) continue;
        if (n == 1) {
            isolated.push_back(iv);
            continue;
        }
        Rational mid = (iv.lo + iv.hi) / 2;
        if (eval(p, mid) == 0) {
            // Nudge the split point off the rational root.
            mid += (iv.hi - iv.lo) / 1024;
        }
        stack.push_back({iv.lo, mid});
        stack.push_back({mid, iv.hi});
    }
    for (auto iv : isolated) {
        // Sturm counts roots in (lo, hi]; tighten by sign-change bisection.
        if (eval(p, iv.hi) == 0) {
            roots.push_back({iv.hi, iv.hi});
            continue;
        }
        int s_hi = sign_of(eval(p, iv.hi));
        while (iv.hi - iv.lo > width) {
            Rational mid = (iv.lo + iv.hi) / 2;
            int s_mid = sign_of(eval(p, mid));
            if (s_mid == 0) {
                iv.lo = iv.hi = mid;
                break;
            }
            if (s_mid == s_hi)
                iv.hi = mid;
            else
                iv.lo = mid;
        }
        roots.push_back(iv);
    }
    return roots;
}

double down(const Rational& r) {
    double d = static_cast<double>(r);
    return Rational(d) > r ? std::nextafter(d, -std::numeric_limits<double>::infinity()) : d;
}
double up(const Rational& r) {
    double d = static_cast<double>(r);
    return Rational(d) < r ? std::nextafter(d, std::numeric_limits<double>::infinity()) : d;
}

}  // namespace

// ---------------------------------------------------------------- integers

std::int64_t integer_det(const IntMatrix& m) {
    if (m.rows() != m.cols()) throw DomainError("determinant of a non-square matrix");
    return checked_narrow(big_det(to_big(m)));
}

IntMatrix integer_product(const IntMatrix& a, const IntMatrix& b) {
    IntMatrix r(a.rows(), b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < b.cols(); ++j) {
            BigInt s = 0;
            for (Eigen::Index k = 0; k < a.cols(); ++k) s += BigInt(a(i, k)) * b(k, j);
            r(i, j) = checked_narrow(s);
        }
    return r;
}

IntMatrix integer_inverse(const IntMatrix& m) {
    const auto n = m.rows();
    BigInt det = big_det(to_big(m));
    if (det != 1 && det != -1) throw NotUnimodular("determinant is not +-1");
    IntMatrix inv(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
            BigMatrix minor;
            for (Eigen::Index r = 0; r < n; ++r) {
                if (r == j) continue;
                std::vector<BigInt> row;
                for (Eigen::Index c = 0; c < n; ++c)
                    if (c != i) row.push_back(m(r, c));
                minor.push_back(row);
            }
            BigInt cof = (n == 1) ? BigInt(1) : big_det(minor);
            if ((i + j) % 2) cof = -cof;
            inv(i, j) = checked_narrow(cof * det);
        }
    return inv;
}

std::vector<std::int64_t> characteristic_polynomial(const IntMatrix& m) {
    // Faddeev-LeVerrier in exact integers; the divisions by k are exact.
    const auto n = static_cast<int>(m.rows());
    BigMatrix a = to_big(m);
    std::vector<BigInt> c(n + 1);
    c[n] = 1;
    BigMatrix mk(n, std::vector<BigInt>(n, 0));
    for (int k = 1; k <= n; ++k) {
        BigMatrix next(n, std::vector<BigInt>(n, 0));
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                BigInt s = 0;
                for (int l = 0; l < n; ++l) s += a[i][l] * mk[l][j];
                next[i][j] = s + (i == j ? c[n - k + 1] : BigInt(0));
            }
        mk = next;
        BigInt tr = 0;
        for (int i = 0; i < n; ++i)
            for (int l = 0; l < n; ++l) tr += a[i][l] * mk[l][i];
        c[n - k] = -tr / k;
    }
    std::vector<std::int64_t> out;
    for (auto& v : c) out.push_back(checked_narrow(v));
    return out;
}

ToralAutomorphism::ToralAutomorphism(IntMatrix entries) : entries_(std::move(entries)) {
    if (entries_.rows() != entries_.cols()) throw ValidationError("automorphism matrix must be square");
    if (entries_.rows() < 2 || entries_.rows() > 4) throw ValidationError("dimension must be 2, 3 or 4");
    det_ = integer_det(entries_);
    if (det_ != 1 && det_ != -1) {
        std::ostringstream os;
        os << "determinant " << det_ << " is not +-1";
        throw NotUnimodular(os.str());
    }
}

ToralAutomorphism ToralAutomorphism::from_rows(int dim, const std::vector<std::int64_t>& row_major) {
    if (static_cast<int>(row_major.size()) != dim * dim)
        throw ValidationError("matrix needs dim*dim entries");
    IntMatrix m(dim, dim);
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j) m(i, j) = row_major[i * dim + j];
    return ToralAutomorphism(m);
}

ToralAutomorphism ToralAutomorphism::inverse() const { return ToralAutomorphism(integer_inverse(entries_)); }

ToralAutomorphism ToralAutomorphism::power(int n) const {
    IntMatrix base = n >= 0 ? entries_ : integer_inverse(entries_);
    IntMatrix result = IntMatrix::Identity(dim(), dim());
    for (int k = 0; k < std::abs(n); ++k) result = integer_product(result, base);
    return ToralAutomorphism(result);
}

ToralAutomorphism ToralAutomorphism::conjugate(const IntMatrix& q) const {
    return ToralAutomorphism(integer_product(integer_product(q, entries_), integer_inverse(q)));
}

// ---------------------------------------------------------------- spectrum

double EigenInterval::abs_value() const { return std::abs(value()); }

bool Spectrum::real_simple() const {
    if (complex_pairs != 0) return false;
    return std::all_of(eigenvalues.begin(), eigenvalues.end(), [](const EigenInterval& e) { return e.multiplicity == 1; });
}

int Spectrum::expanding_count() const {
    int c = 0;
    for (const auto& e : eigenvalues)
        if (e.abs_value() > 1) c += e.multiplicity;
    return c;
}

Spectrum certify_spectrum(const ToralAutomorphism& m) {
    Spectrum s;
    s.charpoly = characteristic_polynomial(m.entries());
    Poly p;
    for (auto c : s.charpoly) p.push_back(Rational(c));
    const Rational width = Rational(1, 1LL << 40);  // ~9.1e-13
    auto factors = squarefree_factors(p);
    int real_count = 0;
    for (std::size_t i = 0; i < factors.size(); ++i) {
        for (const auto& r : isolate_roots(factors[i], width)) {
            EigenInterval e;
            e.lo = down(r.lo);
            e.hi = up(r.hi);
            e.multiplicity = static_cast<int>(i) + 1;
            s.eigenvalues.push_back(e);
            real_count += e.multiplicity;
        }
    }
    std::sort(s.eigenvalues.begin(), s.eigenvalues.end(),
              [](const EigenInterval& a, const EigenInterval& b) { return a.abs_value() > b.abs_value(); });
    s.complex_pairs = (m.dim() - real_count) / 2;

    s.hyperbolic = eval(p, Rational(1)) != 0 && eval(p, Rational(-1)) != 0;
    if (s.complex_pairs > 0) {
        Eigen::EigenSolver<Eigen::MatrixXd> es(m.to_double());
        for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i)
            if (std::abs(std::abs(es.eigenvalues()[i]) - 1.0) < 1e-9) s.hyperbolic = false;
    }
    return s;
}

void require_hyperbolic(const Spectrum& s) {
    if (!s.hyperbolic) throw EigenvalueOnUnitCircle("characteristic polynomial has a root of modulus one");
}

// ---------------------------------------------------------------- frames

std::string to_string(FrameRole role) {
    switch (role) {
        case FrameRole::Unstable: return "unstable";
        case FrameRole::StrongUnstable: return "strong-unstable";
        case FrameRole::WeakUnstable: return "weak-unstable";
        case FrameRole::WeakStable: return "weak-stable";
        case FrameRole::MediumStable: return "medium-stable";
        case FrameRole::StrongStable: return "strong-stable";
        case FrameRole::StablePlane: return "stable-plane";
        case FrameRole::UnstablePlane: return "unstable-plane";
    }
    return "unknown";
}

namespace {

Eigen::VectorXd eigenvector(const Eigen::MatrixXd& m, double lambda, double* residual) {
    const auto n = m.rows();
    Eigen::MatrixXd shifted = m - lambda * Eigen::MatrixXd::Identity(n, n);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(shifted, Eigen::ComputeFullV);
    Eigen::VectorXd v = svd.matrixV().col(n - 1);
    // One step of inverse iteration polishes the null vector.
    Eigen::MatrixXd perturbed = shifted - 1e-14 * Eigen::MatrixXd::Identity(n, n);
    Eigen::VectorXd w = perturbed.fullPivLu().solve(v);
    if (w.allFinite() && w.norm() > 0) v = w.normalized();
    Eigen::Index k;
    v.cwiseAbs().maxCoeff(&k);
    if (v(k) < 0) v = -v;
    *residual = (m * v - lambda * v).norm();
    return v;
}

}  // namespace

std::vector<SubspaceFrame> invariant_frames(const ToralAutomorphism& m, const Spectrum& s) {
    if (s.complex_pairs > 0) throw ComplexSpectrumUnsupported("spectrum has complex conjugate pairs");
    require_hyperbolic(s);
    if (!s.real_simple()) throw ComplexSpectrumUnsupported("repeated eigenvalues are not supported");

    const int d = m.dim();
    const int u = s.expanding_count();
    std::vector<FrameRole> roles;
    if (u == 1 && d == 3)
        roles = {FrameRole::Unstable, FrameRole::WeakStable, FrameRole::StrongStable};
    else if (u == 1 && d == 4)
        roles = {FrameRole::Unstable, FrameRole::WeakStable, FrameRole::MediumStable, FrameRole::StrongStable};
    else if (u == 2 && d == 3)
        roles = {FrameRole::StrongUnstable, FrameRole::WeakUnstable, FrameRole::StrongStable};
    else
        throw DomainError("unsupported splitting: need one expanding direction, or two in dimension 3");

    Eigen::MatrixXd md = m.to_double();
    std::vector<SubspaceFrame> frames;
    for (int i = 0; i < d; ++i) {
        SubspaceFrame f{roles[i], {}, s.value(i), 0.0};
        double res = 0;
        f.basis.push_back(eigenvector(md, f.eigenvalue, &res));
        f.residual = res;
        if (res > 1e-10 * std::max(1.0, std::abs(f.eigenvalue)))
            throw DomainError("eigenvector residual above 1e-10 for " + to_string(roles[i]));
        frames.push_back(f);
    }
    if (u == 1) {
        SubspaceFrame plane{FrameRole::StablePlane, {frames[1].basis[0], frames[2].basis[0]}, 0.0, 0.0};
        plane.residual = std::max(frames[1].residual, frames[2].residual);
        frames.push_back(plane);
    } else {
        SubspaceFrame plane{FrameRole::UnstablePlane, {frames[0].basis[0], frames[1].basis[0]}, 0.0, 0.0};
        plane.residual = std::max(frames[0].residual, frames[1].residual);
        frames.push_back(plane);
    }
    return frames;
}

const SubspaceFrame& find_frame(const std::vector<SubspaceFrame>& frames, FrameRole role) {
    for (const auto& f : frames)
        if (f.role == role) return f;
    throw DomainError("no frame with role " + to_string(role));
}

bool has_frame(const std::vector<SubspaceFrame>& frames, FrameRole role) {
    return std::any_of(frames.begin(), frames.end(), [&](const SubspaceFrame& f) { return f.role == role; });
}

double line_angle(const Eigen::VectorXd& u, const Eigen::VectorXd& v) {
    double c = std::abs(u.dot(v)) / (u.norm() * v.norm());
    return std::acos(std::min(1.0, c));
}

// ---------------------------------------------------------------- normalization

PlaneConditions plane_conditions(const Eigen::VectorXd& weak, const Eigen::VectorXd& strong) {
    PlaneConditions pc;
    const auto d = weak.size();
    Eigen::MatrixXd w(d, 2);
    w.col(0) = weak;
    w.col(1) = strong;
    Eigen::Matrix2d top = w.topRows(2);
    if (std::abs(top.determinant()) < 1e-12 * w.colwise().norm().prod()) return pc;
    pc.graph = true;
    Eigen::MatrixXd g = w * top.inverse();
    g.topRows(2).setIdentity();
    pc.a_bar = g.col(0);
    pc.b_bar = g.col(1);
    pc.coefficients_in_unit_interval = true;
    for (Eigen::Index i = 2; i < d; ++i)
        for (int j = 0; j < 2; ++j)
            if (!(g(i, j) > 0.0 && g(i, j) < 1.0)) pc.coefficients_in_unit_interval = false;
    pc.angle_ab = std::acos(std::clamp(pc.a_bar.dot(pc.b_bar) / (pc.a_bar.norm() * pc.b_bar.norm()), -1.0, 1.0));
    pc.angle_ab_ok = pc.angle_ab > std::numbers::pi / 3 && pc.angle_ab < std::numbers::pi / 2;
    pc.angle_a_weak = line_angle(pc.a_bar, weak);
    pc.weak_close_to_a = pc.angle_a_weak < 0.5 * pc.angle_ab;
    pc.theta0 = line_angle(pc.b_bar, strong);
    pc.theta0_positive = pc.theta0 > 1e-9;
    return pc;
}

NormalizedBasis normalize_basis(const ToralAutomorphism& m, const std::vector<SubspaceFrame>& frames, int max_depth) {
    const int d = m.dim();
    FrameRole strong_role = d == 4 ? FrameRole::MediumStable : FrameRole::StrongStable;
    if (!has_frame(frames, FrameRole::WeakStable) || !has_frame(frames, strong_role))
        throw NormalizationFailed("the automorphism needs a weak stable direction and a stable plane");
    const Eigen::VectorXd weak = find_frame(frames, FrameRole::WeakStable).basis[0];
    const Eigen::VectorXd strong = find_frame(frames, strong_role).basis[0];

    IntMatrix swap = IntMatrix::Identity(d, d);
    swap(0, 0) = swap(1, 1) = 0;
    swap(0, 1) = swap(1, 0) = 1;

    std::vector<IntMatrix> generators;
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) {
            if (i == j) continue;
            for (int s : {1, -1}) {
                IntMatrix e = IntMatrix::Identity(d, d);
                e(i, j) = s;
                generators.push_back(e);
            }
        }

    auto key = [](const IntMatrix& q) { return std::vector<std::int64_t>(q.data(), q.data() + q.size()); };
    std::set<std::vector<std::int64_t>> seen;
    std::deque<std::pair<IntMatrix, int>> queue;
    queue.push_back({IntMatrix::Identity(d, d), 0});
    seen.insert(key(queue.front().first));
    int fail_graph = 0, fail_coeff = 0, fail_angle = 0, fail_weak = 0, fail_theta = 0;
    const std::size_t node_cap = 400000;

    while (!queue.empty()) {
        auto [q, depth] = queue.front();
        queue.pop_front();
        for (bool use_swap : {false, true}) {
            IntMatrix qq = use_swap ? integer_product(swap, q) : q;
            Eigen::MatrixXd qd = qq.cast<double>();
            PlaneConditions pc = plane_conditions(qd * weak, qd * strong);
            if (pc.all()) {
                NormalizedBasis nb;
                nb.a_bar = pc.a_bar;
                nb.b_bar = pc.b_bar;
                nb.theta0 = pc.theta0;
                nb.change_of_basis = qq;
                nb.swapped = use_swap;
                nb.search_depth = depth;
                nb.angle_ab = pc.angle_ab;
                nb.angle_a_weak = pc.angle_a_weak;
                nb.chart_map = m.conjugate(qq);
                return nb;
            }
            if (!pc.graph) ++fail_graph;
            else if (!pc.coefficients_in_unit_interval) ++fail_coeff;
            else if (!pc.angle_ab_ok) ++fail_angle;
            else if (!pc.weak_close_to_a) ++fail_weak;
            else ++fail_theta;
        }
        if (depth >= max_depth) continue;
        for (const auto& g : generators) {
            IntMatrix next = integer_product(g, q);
            if (next.cwiseAbs().maxCoeff() > 16) continue;
            if (!seen.insert(key(next)).second) continue;
            if (seen.size() > node_cap) break;
            queue.push_back({next, depth + 1});
        }
    }
    std::ostringstream os;
    os << "no chart within depth " << max_depth << " and entry bound 16; first failing condition counts: plane not a graph "
       << fail_graph << ", coefficients outside (0,1) " << fail_coeff << ", angle(a,b) outside (pi/3,pi/2) " << fail_angle
       << ", weak direction not close to a " << fail_weak << ", theta0 not positive " << fail_theta;
    throw NormalizationFailed(os.str());
}

}  // namespace shearlyap
