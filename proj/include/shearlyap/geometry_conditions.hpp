#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "shearlyap/cocycle_engine.hpp"
#include "shearlyap/lattice_linalg.hpp"
#include "shearlyap/shear_family.hpp"

namespace shearlyap {

constexpr double kEpsilonM = 1.0 / 20.0;

// Everything derived from the engine automorphism L that the geometric checks
// need, written in the normalized chart.  Norms are taken in the eigen-adapted
// norm (eigenvectors of L orthonormal); angles in the (a_bar, b_bar) chart.
struct ShearGeometry {
    int dim = 3;
    ToralAutomorphism original;
    Spectrum spectrum;
    NormalizedBasis basis;
    ToralAutomorphism chart;
    Eigen::MatrixXd eig;      // chart eigenvectors, columns ordered u, ws, [ms], ss
    Eigen::MatrixXd eig_inv;
    std::vector<double> lambda;  // |eigenvalues| in the same order
    double lam_u = 0, lam_ws = 0, lam_ms = 0, lam_ss = 0;
    Eigen::Matrix2d plane_to_adapted = Eigen::Matrix2d::Identity();  // chart (r,s) -> adapted plane coords
    Eigen::Matrix2d restricted_one = Eigen::Matrix2d::Identity();    // L on the plane, chart coords
    double theta_u = 0;
    double gamma_M = 0;

    // L^n o f_t, the engine orientation.
    ComposedSystem system(int n, double t) const;
    // The orientation of the theorem statements: f_-t o L^-n.
    ComposedSystem statement_system(int n, double t) const;
    Eigen::Matrix2d restricted_power(int n) const;
    // A(x) = L^n Df_t restricted to the shear plane, chart coordinates.
    Eigen::Matrix2d stable_matrix(int n, double t, double x) const;
    Eigen::Matrix2d to_adapted(const Eigen::Matrix2d& chart_matrix) const;
    double plane_norm(const Eigen::Vector2d& chart_vector) const;
    double adapted_norm(const Eigen::VectorXd& v) const { return (eig_inv * v).norm(); }
    double crossing_length() const { return 1.0 / (2.0 * std::sin(theta_u)); }
};

ShearGeometry make_geometry(const ToralAutomorphism& engine_map);

// ---------------------------------------------------------------- regions and cones

enum class Region { GoodPlus, GoodMinus, Bad };
std::string to_string(Region r);

struct RegionSpec {
    double alpha = 0.25;
    double t = 2.0;
};

Region classify_region(const TorusPoint& p, const RegionSpec& r);
Region classify_x(double x, const RegionSpec& r);
// Half-width in x of each bad strip around 1/4 and 3/4.
double bad_half_width(const RegionSpec& r);

struct SectorSpec {
    double ratio = 3.0;  // |s| < ratio |r|
};
bool in_good_cone(const Eigen::Vector2d& v, const SectorSpec& sector = {});

// ---------------------------------------------------------------- cones

// Least gamma with the cone {e + z : |z| <= gamma} around the dominant
// eigendirection invariant; returns +inf when none exists.
double minimal_invariant_cone(const ShearGeometry& g, int n, double t);
// The same for the strong stable direction under L^-n o f_-t, the primed cone.
double minimal_strong_stable_cone(const ShearGeometry& g, int n, double t);

struct ConeTestResult {
    long samples = 0;
    long violations = 0;
    long expansion_violations = 0;
    double min_expansion = 0;
    double max_expansion = 0;
    double max_image_size = 0;  // max |z'| / gamma
};
ConeTestResult unstable_cone_test(const ShearGeometry& g, int n, double t, double gamma, long samples,
                                  std::uint64_t seed);

struct ExpansionResult {
    double min_good_factor = 0;
    double min_global_factor = 0;
    long good_samples = 0;
    long good_cone_escapes = 0;
    double strong_offset = 0;  // log(min good) - [n log lam_ws + (1-alpha) log t]
    double weak_offset = 0;    // log(min global) - [n log lam_weak - log t]
};
ExpansionResult expansion_check(const ShearGeometry& g, int n, double t, double alpha, long samples,
                                std::uint64_t seed);

// ---------------------------------------------------------------- separation

struct Arc {
    double start = 0;  // angle in [0, pi)
    double length = 0;
    bool contains(double angle) const;
};
// Closure of a set of projective angles, as the complement of the widest gap.
Arc arc_hull(std::vector<double> angles);
double arc_distance(const Arc& a, const Arc& b);

struct SeparationPoint {
    double t = 0;
    double gap = 0;
    Arc c_plus, c_minus;
    bool interval_ok = false;
};
struct SeparationScan {
    std::vector<SeparationPoint> points;
    double decay_exponent = 0;
    double s_L = 0;
    double r2 = 0;
};
SeparationPoint separation_at(const ShearGeometry& g, int n, double t, double alpha, int x_samples = 2048);
SeparationScan separation_scan(const ShearGeometry& g, int n, const std::vector<double>& t_grid, double alpha,
                               int x_samples = 2048);

// ---------------------------------------------------------------- Lipschitz

struct LipschitzBounds {
    double kv = 0;           // sup projective Lipschitz constant in the vector
    double kp = 0;           // sup projective Lipschitz constant in the base point
    double min_expansion = 0;
    double scale = 0;        // t^2 lam_ws^2n (times lam_ss^n in dimension four)
    double constant() const { return std::max(kv, kp) / (min_expansion * scale); }
};
LipschitzBounds lipschitz_bounds(const ShearGeometry& g, int n, double t);

struct PushforwardResult {
    double input_lipschitz = 0;
    double measured = 0;
    double predicted = 0;  // C t^2 lam_ws^2n (l + 1)
    double variation = 0;
    double image_length = 0;
};
// Pushes an l-Lipschitz field on a short unstable segment ending at f^-1(p)
// forward once and measures the Lipschitz constant on the image segment.
// slope = 0 gives a constant field.
PushforwardResult lipschitz_pushforward(const ShearGeometry& g, int n, double t, const TorusPoint& p, double l,
                                        double image_length, int nodes, double lipschitz_constant_C);

// ---------------------------------------------------------------- constants and conditions

struct FittedConstant {
    double value = 0;
    double r2 = 1;
    double rms_log_residual = 0;
    int points = 0;
};
using FittedConstants = std::map<std::string, FittedConstant>;

struct FitGrid {
    std::vector<int> n_values;
    std::vector<double> t_values;
    double alpha = 0.25;
};
FitGrid default_fit_grid(int dim);

// Fits gamma_L, a_L, l_L, s_L (and gamma'_L in dimension four) and adds the
// exact gamma_M, d_L, D_L.  delta_L comes from partition statistics.
FittedConstants fit_constants(const ShearGeometry& g, const FitGrid& grid);

struct ConditionReport {
    int n = 0;
    double t = 0;
    double alpha = 0;
    double gamma = 0;
    std::map<std::string, bool> flags;
    std::map<std::string, double> margins;
    std::map<std::string, bool> certified;
    FittedConstants constants;
    bool all(const std::vector<std::string>& names) const;
    std::vector<std::string> failing(const std::vector<std::string>& names) const;
};
ConditionReport condition_report(const ShearGeometry& g, int n, double t, double alpha, const FittedConstants& c);

}  // namespace shearlyap
