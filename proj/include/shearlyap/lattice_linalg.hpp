#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

namespace shearlyap {

using IntMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;

// Integer matrix of determinant +-1 acting on T^d = R^d / Z^d.
class ToralAutomorphism {
public:
    ToralAutomorphism() = default;
    explicit ToralAutomorphism(IntMatrix entries);
    static ToralAutomorphism from_rows(int dim, const std::vector<std::int64_t>& row_major);

    int dim() const { return static_cast<int>(entries_.rows()); }
    const IntMatrix& entries() const { return entries_; }
    std::int64_t det() const { return det_; }

    ToralAutomorphism inverse() const;
    // Throws DomainError when an entry of the power would leave the int64 range.
    ToralAutomorphism power(int n) const;
    ToralAutomorphism conjugate(const IntMatrix& q) const;  // q * M * q^-1
    Eigen::MatrixXd to_double() const { return entries_.cast<double>(); }

private:
    IntMatrix entries_;
    std::int64_t det_ = 0;
};

std::int64_t integer_det(const IntMatrix& m);
IntMatrix integer_inverse(const IntMatrix& m);  // requires det = +-1
IntMatrix integer_product(const IntMatrix& a, const IntMatrix& b);  // overflow-checked

// Coefficients of det(xI - M), lowest degree first.
std::vector<std::int64_t> characteristic_polynomial(const IntMatrix& m);

struct EigenInterval {
    double lo = 0;
    double hi = 0;
    int multiplicity = 1;
    double value() const { return 0.5 * (lo + hi); }
    double abs_value() const;
};

struct Spectrum {
    std::vector<std::int64_t> charpoly;
    std::vector<EigenInterval> eigenvalues;  // real roots, |lambda| descending
    int complex_pairs = 0;
    bool hyperbolic = true;

    bool real_simple() const;
    int expanding_count() const;
    double value(int i) const { return eigenvalues.at(i).value(); }
};

// Real roots isolated by exact Sturm sequences and bisected to width <= 1e-12.
// Hyperbolicity is reported in the flag; use require_hyperbolic to enforce it.
Spectrum certify_spectrum(const ToralAutomorphism& m);
void require_hyperbolic(const Spectrum& s);

enum class FrameRole {
    Unstable,
    StrongUnstable,
    WeakUnstable,
    WeakStable,
    MediumStable,
    StrongStable,
    StablePlane,
    UnstablePlane,
};
std::string to_string(FrameRole role);

struct SubspaceFrame {
    FrameRole role;
    std::vector<Eigen::VectorXd> basis;
    double eigenvalue = 0;  // meaningful for one-dimensional frames
    double residual = 0;
};

std::vector<SubspaceFrame> invariant_frames(const ToralAutomorphism& m, const Spectrum& s);
const SubspaceFrame& find_frame(const std::vector<SubspaceFrame>& frames, FrameRole role);
bool has_frame(const std::vector<SubspaceFrame>& frames, FrameRole role);

// Angle between lines spanned by u and v, in [0, pi/2].
double line_angle(const Eigen::VectorXd& u, const Eigen::VectorXd& v);

struct NormalizedBasis {
    Eigen::VectorXd a_bar;
    Eigen::VectorXd b_bar;
    double theta0 = 0;
    IntMatrix change_of_basis;  // chart coordinates = change_of_basis * original coordinates
    bool swapped = false;
    int search_depth = 0;
    double angle_ab = 0;
    double angle_a_weak = 0;
    ToralAutomorphism chart_map;  // the automorphism written in chart coordinates
};

// Breadth-first search over products of elementary unimodular matrices with
// entries bounded by 16 for a chart in which the shear plane is spanned by
// (1,0,a..) and (0,1,b..) with the three angle conditions satisfied.
NormalizedBasis normalize_basis(const ToralAutomorphism& m, const std::vector<SubspaceFrame>& frames,
                                int max_depth = 8);

struct PlaneConditions {
    bool graph = false;
    bool coefficients_in_unit_interval = false;
    bool angle_ab_ok = false;
    bool weak_close_to_a = false;
    bool theta0_positive = false;
    double angle_ab = 0;
    double angle_a_weak = 0;
    double theta0 = 0;
    Eigen::VectorXd a_bar, b_bar;
    bool all() const {
        return graph && coefficients_in_unit_interval && angle_ab_ok && weak_close_to_a && theta0_positive;
    }
};

// Evaluates the chart conditions for a plane spanned by weak and strong
// eigenvectors already written in chart coordinates.
PlaneConditions plane_conditions(const Eigen::VectorXd& weak, const Eigen::VectorXd& strong);

}  // namespace shearlyap
