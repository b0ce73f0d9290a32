#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "shearlyap/geometry_conditions.hpp"

namespace shearlyap {

struct LeafOptions {
    double tolerance = 1e-8;   // RK4 local error per unit arc length
    double angle_tol = 1e-10;  // convergence of the pulled-forward direction
    int max_depth = 64;
    double max_step = 0;       // 0: a sixty-fourth of a strip crossing
    double gamma = -1;         // cone size for ConeLoss; negative: the minimal invariant cone
};

// Unstable line field of L^n o f_t, evaluated by pulling a vector forward
// along the backward orbit.  Positions are lifted chart coordinates.
class LeafField {
public:
    LeafField(const ShearGeometry& g, int n, double t, const LeafOptions& opt = {});

    // Unit (Euclidean) vector spanning E^u, oriented along v_u.
    Eigen::VectorXd direction(const Eigen::VectorXd& lifted) const;
    // |v'_u| / |v_u| in the adapted norm for a vector in E^u.
    double deviation(const Eigen::VectorXd& dir) const;
    // v_u + v'_u with v_u the fixed (adapted-unit) eigenvector.
    Eigen::VectorXd decomposed(const Eigen::VectorXd& dir) const;
    double expansion(const Eigen::VectorXd& lifted, const Eigen::VectorXd& dir) const;
    Eigen::VectorXd map(const Eigen::VectorXd& lifted) const { return sys_.apply_lifted(lifted); }

    const ShearGeometry& geometry() const { return g_; }
    const LeafOptions& options() const { return opt_; }
    int n() const { return n_; }
    double t() const { return t_; }
    double gamma() const { return gamma_; }

private:
    const ShearGeometry& g_;
    int n_;
    double t_;
    LeafOptions opt_;
    double gamma_;
    ComposedSystem sys_, inv_;
};

struct UnstableSegment {
    TorusPoint anchor;
    std::vector<Eigen::VectorXd> nodes;       // lifted chart coordinates
    std::vector<Eigen::VectorXd> directions;  // unit tangents
    std::vector<double> arc;                  // arc length at each node
    std::vector<double> image_arc;            // arc length of the image under L^n o f_t
    double length = 0;
    double gamma = 0;

    // Cubic Hermite interpolation of the leaf at arc length s.
    Eigen::VectorXd at(double s) const;
    double image_length() const { return image_arc.empty() ? 0.0 : image_arc.back(); }
};

UnstableSegment grow_unstable_segment(const LeafField& field, const TorusPoint& p0, double target_length);

// rho(x) / rho(y) for nodes i, j of the segment.
double density_ratio(const LeafField& field, const UnstableSegment& seg, std::size_t i, std::size_t j);
double max_density_ratio(const LeafField& field, const UnstableSegment& seg);

// Lengths of the complete pieces of the segment between consecutive lines
// x = k * strip in the universal cover.
std::vector<double> crossing_lengths(const UnstableSegment& seg, double strip = 0.5);

struct AtomChild {
    double s0 = 0, s1 = 0;
    Region label = Region::Bad;
    long pre_atoms = 0;
};

struct AtomSplit {
    double length = 0;
    int bad_strips = 0;
    std::vector<AtomChild> children;
    double mass_bad = 0, mass_plus = 0, mass_minus = 0;
    double density_ratio_max = 1;
};

struct AtomSpec {
    double alpha = 0.25;
    double region_t = 0;     // t used for the regions; 0 means the map's t
    double atom_length = 0;  // image atom length; 0 means (d_L + D_L) / 2
    int min_strips = 20;
};

AtomSplit atom_split(const LeafField& field, const UnstableSegment& seg, const AtomSpec& spec = {});

struct AtomRow {
    int n = 0;
    double t = 0;
    double alpha = 0;
    double length = 0;
    double mass_bad = 0, mass_plus = 0, mass_minus = 0;
    double density_ratio_max = 1;
};

// Grows `atoms` segments of random length in (d_L, D_L) with at least the
// required strip count and splits each one.
std::vector<AtomRow> mass_scan(const ShearGeometry& g, int n, double t, double alpha, int atoms, std::uint64_t seed,
                               unsigned threads = 1);

// delta_L as the envelope of mass_B / (t^-alpha + lam_u^-n), with the log-log R^2.
FittedConstant fit_delta(const std::vector<AtomRow>& rows, double lam_u);

}  // namespace shearlyap
