#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <vector>

#include "shearlyap/lattice_linalg.hpp"
#include "shearlyap/shear_family.hpp"

namespace shearlyap {

struct Factor {
    enum class Kind { Automorphism, Shear };
    Kind kind = Kind::Automorphism;
    ToralAutomorphism base;
    int power = 0;
    ShearMap shear;

    static Factor automorphism(const ToralAutomorphism& l, int power);
    static Factor shear_by(const ShearMap& f);
    Factor inverse() const;
};

// A word of factors applied in list order: word {a, b} evaluates b(a(p)).
class ComposedSystem {
public:
    struct Prepared {
        Factor::Kind kind = Factor::Kind::Automorphism;
        IntMatrix exact;                                            // automorphism power, used for points
        Eigen::Matrix4d full = Eigen::Matrix4d::Identity();       // the same power as doubles
        Eigen::Matrix4d chunk = Eigen::Matrix4d::Identity();      // base^(+-c), applied chunk_count times
        Eigen::Matrix4d remainder = Eigen::Matrix4d::Identity();  // base^(+-r), r < c
        int chunk_count = 0;
        bool has_remainder = false;
        double t = 0;
        Eigen::Vector4d direction = Eigen::Vector4d::Zero();
        Eigen::Matrix2d restricted = Eigen::Matrix2d::Identity();
    };

    ComposedSystem() = default;
    ComposedSystem(int dim, std::vector<Factor> word);

    // Declares the invariant plane span(a_bar, b_bar); throws PlaneNotInvariant
    // when a factor moves it by more than 1e-8.
    void set_stable_plane(const Eigen::VectorXd& a_bar, const Eigen::VectorXd& b_bar);
    bool has_plane() const { return has_plane_; }
    const Eigen::VectorXd& a_bar() const { return a_bar_; }
    const Eigen::VectorXd& b_bar() const { return b_bar_; }

    int dim() const { return dim_; }
    const std::vector<Factor>& word() const { return word_; }
    const std::vector<Prepared>& prepared() const { return prepared_; }

    TorusPoint apply(const TorusPoint& p) const;
    Eigen::VectorXd apply_lifted(const Eigen::VectorXd& p) const;
    Eigen::MatrixXd derivative(const TorusPoint& p) const;
    // Derivative restricted to the declared plane in (a_bar, b_bar) coordinates.
    Eigen::Matrix2d restricted(const TorusPoint& p) const;
    ComposedSystem inverse() const;

private:
    int dim_ = 3;
    std::vector<Factor> word_;
    std::vector<Prepared> prepared_;
    bool has_plane_ = false;
    Eigen::VectorXd a_bar_, b_bar_;
};

std::vector<TorusPoint> orbit(const ComposedSystem& sys, const TorusPoint& p0, long n);

struct LyapunovEstimate {
    std::vector<double> exponents;   // descending
    std::vector<double> std_errors;
    long n_iters = 0;
    int n_orbits = 0;
    std::vector<std::vector<double>> per_orbit;
    std::vector<std::vector<double>> per_orbit_se;
    std::vector<std::uint64_t> orbit_ids;
};

constexpr long kDefaultBurnIn = 1000;

// Benettin-style QR estimate along one orbit.  reorth_period = 1 re-orthonormalizes
// after every bounded-condition chunk of every factor; larger periods only
// after every reorth_period composed steps.
LyapunovEstimate lyapunov_spectrum(const ComposedSystem& sys, const TorusPoint& p0, long n, int k,
                                   int reorth_period = 1, long burn_in = kDefaultBurnIn,
                                   std::optional<Eigen::MatrixXd> frame = std::nullopt);

// Independent orbits from uniform starting points, reduced in orbit order.
LyapunovEstimate lyapunov_batch(const ComposedSystem& sys, std::uint64_t seed, int orbits, long n, int k,
                                int reorth_period = 1, unsigned threads = 1, long burn_in = kDefaultBurnIn);

// Pools single-orbit estimates: mean over orbits, between-orbit standard error.
LyapunovEstimate pool(const std::vector<LyapunovEstimate>& runs);

TorusPoint random_point(int dim, std::uint64_t seed, std::uint64_t stream);

struct ProjectivePoint {
    TorusPoint base;
    Eigen::Vector2d line = Eigen::Vector2d(1, 0);

    static ProjectivePoint make(const TorusPoint& base, const Eigen::Vector2d& v);
    double angle() const;  // in [0, pi)
};

// Unit representative with angle in [0, pi); throws ZeroVector for v = 0.
Eigen::Vector2d projective_normalize(const Eigen::Vector2d& v);
double projective_angle(const Eigen::Vector2d& v);
// |angle difference| folded into [0, pi/2].
double projective_distance(double angle_a, double angle_b);

std::pair<TorusPoint, Eigen::Vector2d> restricted_stable_cocycle(const ComposedSystem& sys, const TorusPoint& p,
                                                                 const Eigen::Vector2d& v);
ProjectivePoint projective_step(const ComposedSystem& sys, const ProjectivePoint& q);

struct StableExponent {
    double value = 0;
    double std_error = 0;
};

StableExponent top_stable_exponent(const ComposedSystem& sys, const TorusPoint& p0, const Eigen::Vector2d& v0,
                                   long n, long burn_in = kDefaultBurnIn);

struct StableBatch {
    double value = 0;
    double std_error = 0;
    std::vector<double> per_orbit;
};
StableBatch top_stable_batch(const ComposedSystem& sys, std::uint64_t seed, int orbits, long n, unsigned threads = 1,
                             long burn_in = kDefaultBurnIn);

// sup over sampled points of ||A(m)|| * ||A(m)^-1|| for the restricted cocycle.
double bolicity_sup(const ComposedSystem& sys, int samples, std::uint64_t seed);

}  // namespace shearlyap
