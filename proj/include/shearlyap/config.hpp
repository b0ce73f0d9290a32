#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "shearlyap/lattice_linalg.hpp"

namespace shearlyap {

enum class Mode { Spectrum, Conditions, TheoremA, TheoremB, BoundLab, Partition, Continuity, Robustness };

std::string to_string(Mode m);
Mode mode_from_string(const std::string& name);  // throws ValidationError

// How the configured matrix becomes the engine map L (one expanding eigenvalue).
enum class Orientation { Auto, Engine, Inverse };

struct ExperimentConfig {
    Mode mode = Mode::TheoremA;

    // [matrix]
    int dim = 3;
    std::vector<std::int64_t> matrix;  // row-major
    Orientation orientation = Orientation::Auto;

    // [params]
    std::vector<int> n_values;
    double nu = 0.1;
    double alpha = 0.25;
    std::vector<double> t_values;  // explicit grid; empty means the mode's law
    std::vector<double> epsilons{0.0, 1e-3, 1e-2};  // multiples of t

    // [run]
    long iterations = 1000000;
    int orbits = 100;
    std::uint64_t seed = 1;
    unsigned threads = 1;
    long burn_in = 1000;
    int models = 1000;
    int atoms = 5;
    long samples = 100000;  // cone and expansion sampling
    bool strict = true;     // refuse to measure rows whose conditions fail
};

// Built-in configuration of a mode: default matrix, desk-scale ranges.
ExperimentConfig default_config(Mode mode);

// Reads an INI file with sections [matrix], [params], [run] on top of the
// mode defaults and validates it.  Throws ValidationError.
ExperimentConfig parse_config(const std::string& path, Mode mode);
ExperimentConfig parse_config_string(const std::string& text, Mode mode);

// Enforces the parameter laws of the mode; throws ValidationError naming the law.
void validate(const ExperimentConfig& cfg);

ToralAutomorphism configured_matrix(const ExperimentConfig& cfg);
// The engine map after applying the orientation rule.
ToralAutomorphism engine_map(const ExperimentConfig& cfg);

// Largest admissible nu for theorem-b:
// min{log lam_u / -log lam_ws, (-log lam_ss / -log lam_ws - 1) / 3}.
double theorem_b_nu_bound(double lam_u, double lam_ws, double lam_ss);

// Statement-orientation defaults: the T^3 matrix with two expanding
// eigenvalues, and the T^4 engine with one.
ToralAutomorphism default_matrix(int dim);
// A T^3 matrix with lam_wu^2 > lam_su, so the bunching region is nonempty.
ToralAutomorphism bunching_matrix();

}  // namespace shearlyap
