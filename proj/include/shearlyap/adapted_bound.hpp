#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "shearlyap/geometry_conditions.hpp"

namespace shearlyap {

// ---------------------------------------------------------------- closed forms

struct BoundInputs {
    double beta = 1.0 / 3.0;
    double delta = 0.1;
    double lambda = 2.0;    // expansion of good fields on the good set
    double inv_norm = 1.0;  // sup ||A^-1||
};

// log lambda - (beta delta + delta)/(beta + delta) log(lambda ||A^-1||).
double lower_bound(const BoundInputs& in);
// beta/(beta+delta) log(lambda^(1-delta) / ||A^-1||^(delta + delta/beta)).
double lower_bound_product_form(const BoundInputs& in);
// The beta = 1/3 instance: 1/(1+3 delta) log(lambda^(1-delta) / ||A^-1||^(4 delta)).
double lower_bound_third(double delta, double lambda, double inv_norm);
// Sector-recovery version with k > s recovery classes: 1/(1+k delta) log(...^((k+1) delta)).
double sector_bound(int k, double delta, double lambda, double inv_norm);

struct GoodBadTrace {
    std::vector<double> g, b;
    double floor = 0;       // beta / (beta + delta)
    double min_margin = 0;  // min_n (g_n - floor) over n >= 0
    bool above_floor = true;
};
// Worst case g_{n+1} = (1 - beta - delta) g_n + beta from g_0 = 1, n = 0..N.
GoodBadTrace recursion_trace(double beta, double delta, int n_steps);
double recursion_closed_form(double beta, double delta, int n);

// ---------------------------------------------------------------- finite models

struct ModelChild {
    int target = 0;
    double weight = 0;  // conditional weight inside the parent atom
    Eigen::Matrix2d matrix = Eigen::Matrix2d::Identity();
    bool good = true;   // child lies in the good set G
};

struct ModelAtom {
    double weight = 0;  // stationary mass
    Arc sector;         // good directions; fields pointing here form X^g
    std::vector<ModelChild> children;
};

// Finite-state stand-in for (M, xi, mu^xi, A): atoms with constant
// cocycle on each branch and constant unit fields.
struct AdaptedFamilyModel {
    std::vector<ModelAtom> atoms;
    double beta = 0.5;
    double delta = 0.1;
    double lambda = 2.0;

    double inv_norm() const;
    BoundInputs inputs() const { return {beta, delta, lambda, inv_norm()}; }
    // Child weights sum to one and atom weights are stationary; throws DomainError.
    void check_structure(double tol = 1e-9) const;
};

struct Field {
    int atom = 0;
    double angle = 0;  // projective angle in [0, pi)
};

struct HypothesisResult {
    std::string name;
    bool ok = true;
    double margin = 0;  // slack of the worst case (negative when violated)
    int atom = -1;
    int child = -1;
    double angle = 0;
};

struct ModelVerification {
    std::array<HypothesisResult, 5> h;
    bool all() const;
};
ModelVerification verify_model(const AdaptedFamilyModel& m);

bool in_sector(const Arc& sector, double angle);
// Image of a projective arc under a 2x2 matrix.
Arc image_arc(const Eigen::Matrix2d& m, const Arc& a);
// Smallest ||m u|| over unit u with direction in the arc.
double min_norm_on_arc(const Eigen::Matrix2d& m, const Arc& a);

// E(X) = sum_children w log ||A X||.
double field_energy(const AdaptedFamilyModel& m, const Field& x);
double I_direct(const AdaptedFamilyModel& m, const Field& x, int n);
double I_decomposed(const AdaptedFamilyModel& m, const Field& x, int n);
double In_decomposition_check(const AdaptedFamilyModel& m, const Field& x, int n);

// g_n of the pushed family of x, n = 0..N.
std::vector<double> good_fractions(const AdaptedFamilyModel& m, const Field& x, int n_steps);

// Top exponent of the Markov cocycle from depth increments of the pushed
// direction distribution.  start_atom < 0 uses the stationary weights.
double brute_force_exponent(const AdaptedFamilyModel& m, int max_depth = 20, double tol = 1e-4, int start_atom = -1);

struct RandomModelSpec {
    int min_atoms = 2, max_atoms = 5;
    int min_children = 3, max_children = 5;
    double delta_lo = 1e-3, delta_hi = 0.3;
    double beta_lo = 0.05, beta_hi = 0.9;
    double lambda_lo = 1.2, lambda_hi = 20.0;
    int max_attempts = 1000;
};
// Rejection-samples a model passing H1-H5; the same (seed, index) gives the same model.
AdaptedFamilyModel random_adapted_model(std::uint64_t seed, std::uint64_t index, const RandomModelSpec& spec = {});

// Finite version of the sector-recovery hypothesis: the complement of each
// sector is split in `pieces` arcs, and for every piece the children that map
// it into the target sector with the given clearance must carry mass >= 1/k.
struct SectorRecovery {
    int pieces = 2;
    double clearance = 0;
    double min_mass = 0;  // smallest recovering mass over atoms and pieces
    int k = 0;            // least integer > pieces with 1/k <= min_mass, 0 if none
    bool good_clearance = true;
};
SectorRecovery sector_recovery(const AdaptedFamilyModel& m, double clearance, int pieces = 2);

// ---------------------------------------------------------------- Hoelder construction

// A piecewise expanding circle map x -> d x mod 1 with one atom [0,1) and d
// branches, carrying a Hoelder matrix cocycle and a sector field.
struct ExpandingMapModel {
    int d = 2;
    double theta = 1.0;
    std::function<Eigen::Matrix2d(double)> cocycle;
    std::function<Arc(double)> sector;
    std::vector<bool> good_branch;                   // branch j = [j/d, (j+1)/d) lies in G
    std::vector<std::vector<int>> recovery_branches;  // per complement piece
    double lambda = 1.0;
    double alpha = 0.1;  // sector clearance
};

struct HolderReport {
    double b_A = 0;   // sup of ||A|| ||A^-1||
    double c_pa = 0;  // Hoelder constant of the projective cocycle
    double q = 0;
    double c0 = 0;
    double h8_second = 0;  // C^2 r^theta / ((1-q) d^theta), must stay below alpha/2
    double max_input_constant = 0;
    double max_output_constant = 0;
    double max_growth = 0;  // max over fields of output / input constant
    double step_slack = 0;  // max of output - (b(A) input + C) / d^theta, at most 0
    bool invariant = true;  // fields with constant <= C0 stay within C0
    double recovery_mass = 0;
    double recovery_clearance = 0;
    int k = 0;
    double inv_norm = 0;
    double delta = 0;
    double bound = 0;
};
// Expanding model with d in [12, 20], a slowly turning sector, two recovery
// branches (one per complement half) and the rest good; compliant with H6-H8.
ExpandingMapModel random_expanding_model(std::uint64_t seed, std::uint64_t index);

HolderReport holder_family_check(const ExpandingMapModel& model, int grid = 1000, int fields = 20,
                                 std::uint64_t seed = 1);

}  // namespace shearlyap
