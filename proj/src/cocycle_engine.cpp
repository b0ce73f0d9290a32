#include "shearlyap/cocycle_engine.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <numbers>

#include "shearlyap/errors.hpp"
#include "shearlyap/parallel.hpp"
#include "shearlyap/rng.hpp"
#include "shearlyap/stats.hpp"

namespace shearlyap {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr int kBatches = 50;

Eigen::Matrix4d pad(const Eigen::MatrixXd& m) {
    Eigen::Matrix4d r = Eigen::Matrix4d::Identity();
    r.topLeftCorner(m.rows(), m.cols()) = m;
    return r;
}

std::string sci(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3e", v);
    return buf;
}

double inf_norm(const Eigen::MatrixXd& m) { return m.cwiseAbs().rowwise().sum().maxCoeff(); }

// Largest power whose condition (in the infinity norm) stays below 1e4.
int chunk_power(const ToralAutomorphism& base) {
    const double growth = inf_norm(base.to_double()) * inf_norm(base.inverse().to_double());
    if (growth <= 1.0 + 1e-12) return 64;
    return std::max(1, static_cast<int>(std::floor(std::log(1e4) / std::log(growth))));
}

Eigen::Matrix4d double_power(const ToralAutomorphism& base, int p) {
    return pad(base.power(p).to_double());
}

// Log-norm accumulator that defers std::log until the running product leaves
// a safe range or a batch closes.
struct LogAccumulator {
    std::vector<double> product;
    std::vector<double> logs;

    explicit LogAccumulator(int k) : product(k, 1.0), logs(k, 0.0) {}
    void add(int j, double norm) {
        product[j] *= norm;
        if (product[j] > 1e200 || product[j] < 1e-200) flush(j);
    }
    void flush(int j) {
        logs[j] += std::log(product[j]);
        product[j] = 1.0;
    }
    std::vector<double> take() {
        for (std::size_t j = 0; j < logs.size(); ++j) flush(static_cast<int>(j));
        std::vector<double> out = logs;
        std::fill(logs.begin(), logs.end(), 0.0);
        return out;
    }
};

void check_norms(const Eigen::MatrixXd& v) {
    for (Eigen::Index j = 0; j < v.cols(); ++j) {
        const double n = v.col(j).norm();
        if (!(n >= 1e-300 && n <= 1e300)) throw NumericalBlowup("tangent vector norm " + sci(n) + " left [1e-300, 1e300]");
    }
}

// Modified Gram-Schmidt in place; column norms go to acc when given.
void mgs(Eigen::MatrixXd& v, LogAccumulator* acc) {
    check_norms(v);
    for (Eigen::Index j = 0; j < v.cols(); ++j) {
        for (Eigen::Index i = 0; i < j; ++i) v.col(j) -= v.col(i).dot(v.col(j)) * v.col(i);
        const double n = v.col(j).norm();
        if (!(n > 0) || !std::isfinite(n)) throw NumericalBlowup("degenerate tangent frame");
        v.col(j) /= n;
        if (acc) acc->add(static_cast<int>(j), n);
    }
}

Eigen::MatrixXd generic_frame(int d, int k) {
    Eigen::MatrixXd m(d, k);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < k; ++j) m(i, j) = 1.0 / (i + 2.0 * j + 1.0) + 0.1 * std::sin(1.0 + i + 3.0 * j);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
    return qr.householderQ() * Eigen::MatrixXd::Identity(d, k);
}

void batch_summary(const std::vector<std::vector<double>>& batch_logs, const std::vector<long>& batch_len,
                   long n, std::vector<double>& exponents, std::vector<double>& errors) {
    const std::size_t k = batch_logs.empty() ? 0 : batch_logs.front().size();
    exponents.assign(k, 0.0);
    errors.assign(k, 0.0);
    for (std::size_t j = 0; j < k; ++j) {
        double total = 0;
        std::vector<double> rates;
        for (std::size_t b = 0; b < batch_logs.size(); ++b) {
            total += batch_logs[b][j];
            rates.push_back(batch_logs[b][j] / static_cast<double>(batch_len[b]));
        }
        exponents[j] = total / static_cast<double>(n);
        errors[j] = standard_error(rates);
    }
}

std::vector<long> batch_lengths(long n) {
    const long b = std::min<long>(kBatches, std::max<long>(n, 1));
    std::vector<long> len(b, n / b);
    for (long i = 0; i < n % b; ++i) ++len[i];
    return len;
}

Eigen::Matrix2d shear_restriction(double t, double x) {
    Eigen::Matrix2d s = Eigen::Matrix2d::Identity();
    s(1, 0) = kTwoPi * t * std::cos(kTwoPi * x);
    return s;
}

}  // namespace

Factor Factor::automorphism(const ToralAutomorphism& l, int power) {
    Factor f;
    f.kind = Kind::Automorphism;
    f.base = l;
    f.power = power;
    return f;
}

Factor Factor::shear_by(const ShearMap& s) {
    Factor f;
    f.kind = Kind::Shear;
    f.shear = s;
    return f;
}

Factor Factor::inverse() const {
    Factor f = *this;
    if (kind == Kind::Automorphism)
        f.power = -power;
    else
        f.shear = shear.inverse();
    return f;
}

ComposedSystem::ComposedSystem(int dim, std::vector<Factor> word) : dim_(dim), word_(std::move(word)) {
    if (dim_ < 2 || dim_ > 4) throw DomainError("composed systems live on T^2..T^4");
    for (const Factor& f : word_) {
        Prepared p;
        p.kind = f.kind;
        if (f.kind == Factor::Kind::Automorphism) {
            if (f.base.dim() != dim_) throw DomainError("factor dimension mismatch");
            const ToralAutomorphism base = f.power >= 0 ? f.base : f.base.inverse();
            const int n = std::abs(f.power);
            p.exact = base.power(n).entries();
            p.full = pad(p.exact.cast<double>());
            const int c = std::min(chunk_power(base), std::max(n, 1));
            p.chunk = double_power(base, c);
            p.chunk_count = n / c;
            p.has_remainder = (n % c) != 0;
            p.remainder = double_power(base, n % c);
        } else {
            if (f.shear.dim() != dim_) throw DomainError("shear dimension mismatch");
            p.t = f.shear.t;
            p.direction.head(dim_) = f.shear.direction;
        }
        prepared_.push_back(p);
    }
}

void ComposedSystem::set_stable_plane(const Eigen::VectorXd& a_bar, const Eigen::VectorXd& b_bar) {
    if (a_bar.size() != dim_ || b_bar.size() != dim_) throw DomainError("plane vectors have the wrong dimension");
    Eigen::MatrixXd basis(dim_, 2);
    basis << a_bar, b_bar;
    // Chart coordinates of a plane vector are its first two components.
    const Eigen::Matrix2d top = basis.topRows(2);
    if (std::abs(top.determinant()) < 1e-12) throw DomainError("plane is not a graph over the first two axes");
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(basis);
    const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(dim_, 2);

    for (std::size_t i = 0; i < word_.size(); ++i) {
        Prepared& p = prepared_[i];
        const Factor& f = word_[i];
        if (f.kind == Factor::Kind::Shear) {
            const Eigen::VectorXd dir = p.direction.head(dim_);
            const double off = (dir - q * (q.transpose() * dir)).norm() / dir.norm();
            if (off > 1e-8) throw PlaneNotInvariant("shear direction leaves the plane by " + std::to_string(off));
            continue;
        }
        const ToralAutomorphism base = f.power >= 0 ? f.base : f.base.inverse();
        const Eigen::MatrixXd image = base.to_double() * basis;
        Eigen::MatrixXd iq = image;
        for (int j = 0; j < 2; ++j) iq.col(j).normalize();
        const double off = (iq - q * (q.transpose() * iq)).norm();
        if (off > 1e-8) throw PlaneNotInvariant("automorphism moves the plane by " + std::to_string(off));
        const Eigen::Matrix2d one = top.inverse() * image.topRows(2);
        Eigen::Matrix2d r = Eigen::Matrix2d::Identity();
        for (int k = 0; k < std::abs(f.power); ++k) r = one * r;
        p.restricted = r;
    }
    a_bar_ = a_bar;
    b_bar_ = b_bar;
    has_plane_ = true;
}

TorusPoint ComposedSystem::apply(const TorusPoint& p) const {
    TorusPoint q = p;
    for (const Prepared& f : prepared_) {
        if (f.kind == Factor::Kind::Automorphism) {
            q = apply_integer(f.exact, q);
        } else {
            const double s = f.t * std::sin(kTwoPi * q.x[0]);
            for (int i = 1; i < dim_; ++i) q.x[i] = wrap01(q.x[i] + s * f.direction(i));
        }
    }
    return q;
}

Eigen::VectorXd ComposedSystem::apply_lifted(const Eigen::VectorXd& p) const {
    Eigen::VectorXd q = p;
    for (const Prepared& f : prepared_) {
        if (f.kind == Factor::Kind::Automorphism)
            q = f.exact.cast<double>() * q;
        else
            q += f.t * std::sin(kTwoPi * q(0)) * f.direction.head(dim_);
    }
    return q;
}

Eigen::MatrixXd ComposedSystem::derivative(const TorusPoint& p) const {
    Eigen::MatrixXd d = Eigen::MatrixXd::Identity(dim_, dim_);
    TorusPoint q = p;
    for (const Prepared& f : prepared_) {
        if (f.kind == Factor::Kind::Automorphism) {
            d = f.full.topLeftCorner(dim_, dim_) * d;
            q = apply_integer(f.exact, q);
        } else {
            const double c = kTwoPi * f.t * std::cos(kTwoPi * q.x[0]);
            const Eigen::RowVectorXd first = d.row(0);
            d += c * f.direction.head(dim_) * first;
            const double s = f.t * std::sin(kTwoPi * q.x[0]);
            for (int i = 1; i < dim_; ++i) q.x[i] = wrap01(q.x[i] + s * f.direction(i));
        }
    }
    return d;
}

Eigen::Matrix2d ComposedSystem::restricted(const TorusPoint& p) const {
    if (!has_plane_) throw PlaneNotInvariant("no invariant plane declared");
    Eigen::Matrix2d a = Eigen::Matrix2d::Identity();
    TorusPoint q = p;
    for (const Prepared& f : prepared_) {
        if (f.kind == Factor::Kind::Automorphism) {
            a = f.restricted * a;
            q = apply_integer(f.exact, q);
        } else {
            a = shear_restriction(f.t, q.x[0]) * a;
            const double s = f.t * std::sin(kTwoPi * q.x[0]);
            for (int i = 1; i < dim_; ++i) q.x[i] = wrap01(q.x[i] + s * f.direction(i));
        }
    }
    return a;
}

ComposedSystem ComposedSystem::inverse() const {
    std::vector<Factor> w;
    for (auto it = word_.rbegin(); it != word_.rend(); ++it) w.push_back(it->inverse());
    ComposedSystem inv(dim_, std::move(w));
    if (has_plane_) inv.set_stable_plane(a_bar_, b_bar_);
    return inv;
}

std::vector<TorusPoint> orbit(const ComposedSystem& sys, const TorusPoint& p0, long n) {
    if (n < 1) throw DomainError("orbit length must be at least 1");
    std::vector<TorusPoint> out;
    out.reserve(static_cast<std::size_t>(n) + 1);
    out.push_back(p0);
    for (long i = 0; i < n; ++i) out.push_back(sys.apply(out.back()));
    return out;
}

namespace {

// Tangent propagation with QR after each bounded-condition piece.  The frame
// lives in a fixed 4x4 block (unused rows and columns stay zero) so the inner
// loop never allocates.
class TangentRunner {
public:
    TangentRunner(const ComposedSystem& sys, int k, int period, const Eigen::MatrixXd& frame)
        : sys_(sys), d_(sys.dim()), k_(k), period_(period), acc_(k) {
        v_.setZero();
        v_.topLeftCorner(d_, k_) = frame;
    }

    void step(TorusPoint& q, bool record) {
        LogAccumulator* acc = record ? &acc_ : nullptr;
        for (const auto& f : sys_.prepared()) {
            if (f.kind == Factor::Kind::Automorphism) {
                for (int c = 0; c < f.chunk_count; ++c) {
                    v_ = f.chunk * v_;
                    if (period_ == 1) orthonormalize(acc);
                }
                if (f.has_remainder) {
                    v_ = f.remainder * v_;
                    if (period_ == 1) orthonormalize(acc);
                }
                q = apply_integer(f.exact, q);
            } else {
                const double x = q.x[0];
                const double c = kTwoPi * f.t * std::cos(kTwoPi * x);
                const Eigen::RowVector4d first = v_.row(0);
                v_.noalias() += (c * f.direction) * first;
                if (period_ == 1) orthonormalize(acc);
                const double s = f.t * std::sin(kTwoPi * x);
                for (int i = 1; i < d_; ++i) q.x[i] = wrap01(q.x[i] + s * f.direction(i));
            }
        }
        if (period_ > 1 && ++since_ >= period_) close(record);
    }

    void close(bool record) {
        if (period_ > 1 && since_ > 0) orthonormalize(record ? &acc_ : nullptr);
        since_ = 0;
    }

    std::vector<double> take() { return acc_.take(); }

private:
    void orthonormalize(LogAccumulator* acc) {
        for (int j = 0; j < k_; ++j) {
            for (int i = 0; i < j; ++i) v_.col(j) -= v_.col(i).dot(v_.col(j)) * v_.col(i);
            const double n = v_.col(j).norm();
            if (!(n >= 1e-300 && n <= 1e300)) throw NumericalBlowup("tangent vector norm " + sci(n) + " left [1e-300, 1e300]");
            v_.col(j) /= n;
            if (acc) acc->add(j, n);
        }
    }

    const ComposedSystem& sys_;
    int d_;
    int k_;
    int period_;
    int since_ = 0;
    Eigen::Matrix4d v_;
    LogAccumulator acc_;
};

}  // namespace

LyapunovEstimate lyapunov_spectrum(const ComposedSystem& sys, const TorusPoint& p0, long n, int k,
                                   int reorth_period, long burn_in, std::optional<Eigen::MatrixXd> frame) {
    const int d = sys.dim();
    if (k < 1 || k > d) throw DomainError("k must lie in [1, dim]");
    if (reorth_period < 1 || reorth_period > 64) throw DomainError("reorth_period must lie in [1, 64]");
    if (n < 1) throw DomainError("iteration count must be positive");
    Eigen::MatrixXd v0 = frame ? *frame : generic_frame(d, k);
    if (v0.rows() != d || v0.cols() != k) throw DomainError("initial frame has the wrong shape");
    mgs(v0, nullptr);

    TangentRunner run(sys, k, reorth_period, v0);
    TorusPoint q = p0;
    for (long i = 0; i < burn_in; ++i) run.step(q, false);
    run.close(false);
    run.take();

    const std::vector<long> len = batch_lengths(n);
    std::vector<std::vector<double>> logs;
    for (long b : len) {
        for (long i = 0; i < b; ++i) run.step(q, true);
        run.close(true);
        logs.push_back(run.take());
    }
    LyapunovEstimate est;
    batch_summary(logs, len, n, est.exponents, est.std_errors);
    est.n_iters = n;
    est.n_orbits = 1;
    est.per_orbit = {est.exponents};
    est.per_orbit_se = {est.std_errors};
    est.orbit_ids = {0};
    return est;
}

TorusPoint random_point(int dim, std::uint64_t seed, std::uint64_t stream) {
    Rng rng(seed, stream);
    TorusPoint p;
    p.dim = dim;
    for (int i = 0; i < dim; ++i) p.x[i] = rng.uniform();
    return p;
}

LyapunovEstimate pool(const std::vector<LyapunovEstimate>& runs) {
    LyapunovEstimate out;
    if (runs.empty()) return out;
    const std::size_t k = runs.front().exponents.size();
    out.n_iters = runs.front().n_iters;
    for (const auto& r : runs) {
        out.per_orbit.insert(out.per_orbit.end(), r.per_orbit.begin(), r.per_orbit.end());
        out.per_orbit_se.insert(out.per_orbit_se.end(), r.per_orbit_se.begin(), r.per_orbit_se.end());
        out.orbit_ids.insert(out.orbit_ids.end(), r.orbit_ids.begin(), r.orbit_ids.end());
    }
    out.n_orbits = static_cast<int>(out.per_orbit.size());
    out.exponents.assign(k, 0.0);
    out.std_errors.assign(k, 0.0);
    for (std::size_t j = 0; j < k; ++j) {
        std::vector<double> col;
        for (const auto& row : out.per_orbit) col.push_back(row[j]);
        out.exponents[j] = mean(col);
        if (col.size() >= 2) {
            out.std_errors[j] = standard_error(col);
        } else {
            out.std_errors[j] = out.per_orbit_se.front()[j];
        }
    }
    return out;
}

LyapunovEstimate lyapunov_batch(const ComposedSystem& sys, std::uint64_t seed, int orbits, long n, int k,
                                int reorth_period, unsigned threads, long burn_in) {
    if (orbits < 1) throw DomainError("need at least one orbit");
    std::vector<LyapunovEstimate> runs(static_cast<std::size_t>(orbits));
    parallel_for(runs.size(), threads, [&](std::size_t i) {
        runs[i] = lyapunov_spectrum(sys, random_point(sys.dim(), seed, i), n, k, reorth_period, burn_in);
        runs[i].orbit_ids = {i};
    });
    return pool(runs);
}

Eigen::Vector2d projective_normalize(const Eigen::Vector2d& v) {
    const double n = v.norm();
    if (!(n > 0)) throw ZeroVector("cannot projectivize the zero vector");
    Eigen::Vector2d u = v / n;
    if (u(1) < 0 || (u(1) == 0 && u(0) < 0)) u = -u;
    return u;
}

double projective_angle(const Eigen::Vector2d& v) {
    const Eigen::Vector2d u = projective_normalize(v);
    double a = std::atan2(u(1), u(0));
    if (a >= std::numbers::pi) a -= std::numbers::pi;
    if (a < 0) a += std::numbers::pi;
    return a;
}

double projective_distance(double a, double b) {
    double d = std::fmod(std::abs(a - b), std::numbers::pi);
    return std::min(d, std::numbers::pi - d);
}

ProjectivePoint ProjectivePoint::make(const TorusPoint& base, const Eigen::Vector2d& v) {
    ProjectivePoint q;
    q.base = base;
    q.line = projective_normalize(v);
    return q;
}

double ProjectivePoint::angle() const { return projective_angle(line); }

std::pair<TorusPoint, Eigen::Vector2d> restricted_stable_cocycle(const ComposedSystem& sys, const TorusPoint& p,
                                                                 const Eigen::Vector2d& v) {
    return {sys.apply(p), sys.restricted(p) * v};
}

ProjectivePoint projective_step(const ComposedSystem& sys, const ProjectivePoint& q) {
    return ProjectivePoint::make(sys.apply(q.base), sys.restricted(q.base) * q.line);
}

StableExponent top_stable_exponent(const ComposedSystem& sys, const TorusPoint& p0, const Eigen::Vector2d& v0,
                                   long n, long burn_in) {
    if (n < 1) throw DomainError("iteration count must be positive");
    Eigen::Vector2d u = projective_normalize(v0);
    TorusPoint q = p0;
    for (long i = 0; i < burn_in; ++i) {
        u = (sys.restricted(q) * u).normalized();
        q = sys.apply(q);
    }
    const std::vector<long> len = batch_lengths(n);
    std::vector<std::vector<double>> logs;
    for (long b : len) {
        LogAccumulator acc(1);
        for (long i = 0; i < b; ++i) {
            const Eigen::Vector2d w = sys.restricted(q) * u;
            const double nw = w.norm();
            if (!(nw >= 1e-300 && nw <= 1e300)) throw NumericalBlowup("restricted cocycle norm out of range");
            acc.add(0, nw);
            u = w / nw;
            q = sys.apply(q);
        }
        logs.push_back(acc.take());
    }
    std::vector<double> e, se;
    batch_summary(logs, len, n, e, se);
    return {e[0], se[0]};
}

StableBatch top_stable_batch(const ComposedSystem& sys, std::uint64_t seed, int orbits, long n, unsigned threads,
                             long burn_in) {
    if (orbits < 1) throw DomainError("need at least one orbit");
    std::vector<double> vals(static_cast<std::size_t>(orbits));
    std::vector<double> ses(vals.size());
    parallel_for(vals.size(), threads, [&](std::size_t i) {
        Rng rng(seed, 0x5ab1e000u + i);
        TorusPoint p = random_point(sys.dim(), seed, i);
        const double a = rng.angle();
        auto r = top_stable_exponent(sys, p, Eigen::Vector2d(std::cos(a), std::sin(a)), n, burn_in);
        vals[i] = r.value;
        ses[i] = r.std_error;
    });
    StableBatch out;
    out.per_orbit = vals;
    out.value = mean(vals);
    out.std_error = vals.size() >= 2 ? standard_error(vals) : ses[0];
    return out;
}

double bolicity_sup(const ComposedSystem& sys, int samples, std::uint64_t seed) {
    double best = 0;
    for (int i = 0; i < samples; ++i) {
        const Eigen::Matrix2d a = sys.restricted(random_point(sys.dim(), seed, static_cast<std::uint64_t>(i)));
        Eigen::JacobiSVD<Eigen::Matrix2d> svd(a);
        const auto s = svd.singularValues();
        best = std::max(best, s(0) / s(1));
    }
    return best;
}

}  // namespace shearlyap
