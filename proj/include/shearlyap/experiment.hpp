#pragma once

#include <cstdint>
#include <vector>

#include "shearlyap/config.hpp"
#include "shearlyap/geometry_conditions.hpp"
#include "shearlyap/partition_stats.hpp"
#include "shearlyap/report.hpp"

namespace shearlyap {

ShearGeometry experiment_geometry(const ExperimentConfig& cfg);

// t = lam_ws^(-n nu), the theorem-a law.
double theorem_a_t(const ShearGeometry& g, int n, double nu);
// t = lam_ws^(-n (1 + nu)), the theorem-b law.
double theorem_b_t(const ShearGeometry& g, int n, double nu);

// Statement-orientation fibre-bunching quantity on the unstable plane:
// sup_x ||A(x)||^2 ||A(x)^-1|| with A = L^n Df_t on the engine's stable plane,
// adapted norm, x on a uniform grid of `samples` cell midpoints.
double bunching_value(const ShearGeometry& g, int n, double t, int samples = 4096);
// Largest t in [0, t_max] with bunching_value < 1 (bisection); 0 if none.
double bunching_threshold(const ShearGeometry& g, int n, double t_max = 1e3, int samples = 4096);

// delta_L from a mass scan of subordinated atoms over the t grid at the given n.
FittedConstant partition_delta(const ShearGeometry& g, int n, const std::vector<double>& t_grid, double alpha,
                               int atoms, std::uint64_t seed, unsigned threads, std::vector<AtomRow>* rows = nullptr);

// The perturbed engine word f_t, g_eps, L^n with g_eps a conservative shear
// sin(2 pi (x + 1/2)) out of the shear plane.
ComposedSystem perturbed_system(const ShearGeometry& g, int n, double t, double eps);

RunReport run_spectrum(const ExperimentConfig& cfg);
RunReport run_conditions(const ExperimentConfig& cfg);
RunReport run_theorem_a(const ExperimentConfig& cfg);
RunReport run_theorem_b(const ExperimentConfig& cfg);
RunReport run_bound_lab(const ExperimentConfig& cfg);
RunReport run_partition(const ExperimentConfig& cfg);
RunReport run_continuity_scan(const ExperimentConfig& cfg);
RunReport run_robustness(const ExperimentConfig& cfg);

// Dispatches on cfg.mode.
RunReport run_experiment(const ExperimentConfig& cfg);

}  // namespace shearlyap
