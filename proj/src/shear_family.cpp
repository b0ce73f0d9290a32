#include "shearlyap/shear_family.hpp"

#include <numbers>

#include "shearlyap/errors.hpp"

namespace shearlyap {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

TorusPoint::TorusPoint(std::initializer_list<double> coords) {
    if (coords.size() < 2 || coords.size() > 4) throw DomainError("torus points have 2 to 4 coordinates");
    dim = static_cast<int>(coords.size());
    int i = 0;
    for (double c : coords) x[i++] = wrap01(c);
}

TorusPoint TorusPoint::from_lifted(const Eigen::VectorXd& v) {
    TorusPoint p;
    p.dim = static_cast<int>(v.size());
    for (int i = 0; i < p.dim; ++i) p.x[i] = wrap01(v(i));
    return p;
}

Eigen::VectorXd TorusPoint::lifted() const {
    Eigen::VectorXd v(dim);
    for (int i = 0; i < dim; ++i) v(i) = x[i];
    return v;
}

TorusPoint apply_integer(const IntMatrix& m, const TorusPoint& p) {
    TorusPoint r;
    r.dim = p.dim;
    for (int i = 0; i < p.dim; ++i) {
        double s = 0;
        for (int j = 0; j < p.dim; ++j) s += frac_mul(m(i, j), p.x[j]);
        r.x[i] = wrap01(s);
    }
    return r;
}

ShearMap::ShearMap(double t_, std::vector<double> b) : t(t_) {
    direction = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(b.size()) + 2);
    direction(1) = 1.0;
    for (std::size_t i = 0; i < b.size(); ++i) direction(static_cast<Eigen::Index>(i) + 2) = b[i];
}

ShearMap ShearMap::along(const NormalizedBasis& basis, double t) {
    ShearMap f;
    f.t = t;
    f.direction = basis.b_bar;
    return f;
}

std::vector<double> ShearMap::b_coeffs() const {
    std::vector<double> b;
    for (Eigen::Index i = 2; i < direction.size(); ++i) b.push_back(direction(i));
    return b;
}

ShearMap ShearMap::inverse() const {
    ShearMap f = *this;
    f.t = -t;
    return f;
}

TorusPoint ShearMap::apply(const TorusPoint& p) const {
    const double s = t * std::sin(kTwoPi * p.x[0]);
    TorusPoint r = p;
    for (int i = 1; i < p.dim; ++i) r.x[i] = wrap01(p.x[i] + s * direction(i));
    return r;
}

Eigen::VectorXd ShearMap::apply_lifted(const Eigen::VectorXd& p) const {
    return p + t * std::sin(kTwoPi * p(0)) * direction;
}

Eigen::MatrixXd ShearMap::derivative(double x) const {
    const int d = dim();
    Eigen::MatrixXd m = Eigen::MatrixXd::Identity(d, d);
    m.col(0) += kTwoPi * t * std::cos(kTwoPi * x) * direction;
    return m;
}

TorusPoint apply(const ShearMap& f, const TorusPoint& p) { return f.apply(p); }

Jet jet(const ShearMap& f, const TorusPoint& p) { return Jet{f.apply(p), f.derivative(p.x[0])}; }

double finite_difference_check(const ShearMap& f, const TorusPoint& p, double h) {
    if (!(h > 0 && h <= 1e-3)) throw DomainError("finite difference step must lie in (0, 1e-3]");
    const Eigen::VectorXd base = p.lifted();
    const Eigen::MatrixXd exact = f.derivative(p.x[0]);
    double err = 0;
    for (int j = 0; j < f.dim(); ++j) {
        Eigen::VectorXd e = Eigen::VectorXd::Zero(f.dim());
        e(j) = h;
        Eigen::VectorXd col = (f.apply_lifted(base + e) - f.apply_lifted(base - e)) / (2 * h);
        err = std::max(err, (col - exact.col(j)).cwiseAbs().maxCoeff());
    }
    return err;
}

TorusPoint to_chart(const NormalizedBasis& basis, const TorusPoint& original) {
    return apply_integer(basis.change_of_basis, original);
}

TorusPoint from_chart(const NormalizedBasis& basis, const TorusPoint& chart) {
    return apply_integer(integer_inverse(basis.change_of_basis), chart);
}

TorusPoint apply_original(const ShearMap& f, const NormalizedBasis& basis, const TorusPoint& original) {
    return from_chart(basis, f.apply(to_chart(basis, original)));
}

}  // namespace shearlyap
