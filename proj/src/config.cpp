#include "shearlyap/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "shearlyap/errors.hpp"

namespace shearlyap {

namespace {

namespace pt = boost::property_tree;

const std::map<std::string, Mode>& mode_names() {
    static const std::map<std::string, Mode> names = {
        {"spectrum", Mode::Spectrum},     {"conditions", Mode::Conditions}, {"theorem-a", Mode::TheoremA},
        {"theorem-b", Mode::TheoremB},    {"bound-lab", Mode::BoundLab},    {"partition", Mode::Partition},
        {"continuity", Mode::Continuity}, {"robustness", Mode::Robustness},
    };
    return names;
}

std::vector<int> range(int lo, int hi, int step = 1) {
    std::vector<int> v;
    for (int n = lo; n <= hi; n += step) v.push_back(n);
    return v;
}

// Splits on whitespace, commas and semicolons.
std::vector<std::string> tokens(std::string s) {
    for (char& c : s)
        if (c == ',' || c == ';') c = ' ';
    std::istringstream is(s);
    std::vector<std::string> out;
    for (std::string w; is >> w;) out.push_back(w);
    return out;
}

template <class T>
T number(const std::string& key, const std::string& text) {
    std::istringstream is(text);
    T v{};
    std::string rest;
    if (!(is >> v) || (is >> rest)) throw ValidationError(key + ": cannot read '" + text + "' as a number");
    return v;
}

template <class T>
std::vector<T> numbers(const std::string& key, const std::string& text) {
    std::vector<T> out;
    for (const auto& w : tokens(text)) out.push_back(number<T>(key, w));
    return out;
}

bool boolean(const std::string& key, const std::string& text) {
    if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
    if (text == "false" || text == "0" || text == "no" || text == "off") return false;
    throw ValidationError(key + ": expected true or false, got '" + text + "'");
}

void apply_tree(const pt::ptree& tree, Mode mode, ExperimentConfig& cfg) {
    static const std::map<std::string, std::set<std::string>> known = {
        {"matrix", {"dim", "rows", "orientation"}},
        {"params", {"n", "n_min", "n_max", "nu", "alpha", "t", "epsilon"}},
        {"run", {"mode", "iterations", "orbits", "seed", "threads", "burn_in", "models", "atoms", "samples", "strict"}},
    };
    for (const auto& [section, body] : tree) {
        auto it = known.find(section);
        if (it == known.end()) throw ValidationError("unknown section [" + section + "]");
        for (const auto& [key, value] : body)
            if (!it->second.count(key)) throw ValidationError("unknown key '" + key + "' in [" + section + "]");
    }
    auto get = [&](const std::string& path) { return tree.get_optional<std::string>(pt::ptree::path_type(path, '.')); };

    if (auto v = get("matrix.dim")) cfg.dim = number<int>("matrix.dim", *v);
    if (auto v = get("matrix.rows")) cfg.matrix = numbers<std::int64_t>("matrix.rows", *v);
    if (auto v = get("matrix.orientation")) {
        if (*v == "auto") cfg.orientation = Orientation::Auto;
        else if (*v == "engine") cfg.orientation = Orientation::Engine;
        else if (*v == "inverse") cfg.orientation = Orientation::Inverse;
        else throw ValidationError("matrix.orientation must be auto, engine or inverse");
    }

    if (auto v = get("params.n")) cfg.n_values = numbers<int>("params.n", *v);
    if (get("params.n_min") || get("params.n_max")) {
        if (get("params.n")) throw ValidationError("give either params.n or params.n_min/n_max");
        int lo = cfg.n_values.empty() ? 1 : cfg.n_values.front();
        int hi = cfg.n_values.empty() ? lo : cfg.n_values.back();
        if (auto v = get("params.n_min")) lo = number<int>("params.n_min", *v);
        if (auto v = get("params.n_max")) hi = number<int>("params.n_max", *v);
        if (lo > hi) throw ValidationError("params.n_min must not exceed params.n_max");
        cfg.n_values = range(lo, hi);
    }
    if (auto v = get("params.nu")) cfg.nu = number<double>("params.nu", *v);
    if (auto v = get("params.alpha")) cfg.alpha = number<double>("params.alpha", *v);
    if (auto v = get("params.t")) cfg.t_values = numbers<double>("params.t", *v);
    if (auto v = get("params.epsilon")) cfg.epsilons = numbers<double>("params.epsilon", *v);

    if (auto v = get("run.mode"))
        if (mode_from_string(*v) != mode)
            throw ValidationError("config is for mode '" + *v + "' but '" + to_string(mode) + "' was requested");
    if (auto v = get("run.iterations")) cfg.iterations = number<long>("run.iterations", *v);
    if (auto v = get("run.orbits")) cfg.orbits = number<int>("run.orbits", *v);
    if (auto v = get("run.seed")) cfg.seed = number<std::uint64_t>("run.seed", *v);
    if (auto v = get("run.threads")) cfg.threads = number<unsigned>("run.threads", *v);
    if (auto v = get("run.burn_in")) cfg.burn_in = number<long>("run.burn_in", *v);
    if (auto v = get("run.models")) cfg.models = number<int>("run.models", *v);
    if (auto v = get("run.atoms")) cfg.atoms = number<int>("run.atoms", *v);
    if (auto v = get("run.samples")) cfg.samples = number<long>("run.samples", *v);
    if (auto v = get("run.strict")) cfg.strict = boolean("run.strict", *v);
}

bool needs_matrix(Mode m) { return m != Mode::BoundLab; }

struct EngineLambdas {
    std::vector<double> abs;  // descending
    int expanding = 0;
};

EngineLambdas engine_lambdas(const ExperimentConfig& cfg) {
    const Spectrum s = certify_spectrum(engine_map(cfg));
    if (!s.hyperbolic) throw ValidationError("matrix is not hyperbolic");
    if (s.complex_pairs > 0 || !s.real_simple())
        throw ValidationError("matrix must have real simple eigenvalues");
    EngineLambdas out;
    for (const auto& e : s.eigenvalues) out.abs.push_back(e.abs_value());
    out.expanding = s.expanding_count();
    return out;
}

}  // namespace

std::string to_string(Mode m) {
    for (const auto& [name, mode] : mode_names())
        if (mode == m) return name;
    return "unknown";
}

Mode mode_from_string(const std::string& name) {
    auto it = mode_names().find(name);
    if (it == mode_names().end()) throw ValidationError("unknown mode '" + name + "'");
    return it->second;
}

ToralAutomorphism default_matrix(int dim) {
    if (dim == 3) return ToralAutomorphism::from_rows(3, {2, 1, 0, 1, 2, 1, 0, 1, 1});
    if (dim == 4) {
        // companion matrix of x^4 - x^3 - 4x^2 + 4x + 1
        const auto c = ToralAutomorphism::from_rows(4, {0, 0, 0, -1, 1, 0, 0, -4, 0, 1, 0, 4, 0, 0, 1, 1});
        return c.inverse().power(2);
    }
    throw ValidationError("default matrices exist for dim 3 and 4 only");
}

ToralAutomorphism bunching_matrix() {
    // companion matrix of x^3 - 7x^2 + 12x - 1
    return ToralAutomorphism::from_rows(3, {0, 0, 1, 1, 0, -12, 0, 1, 7});
}

ExperimentConfig default_config(Mode mode) {
    ExperimentConfig c;
    c.mode = mode;
    c.dim = mode == Mode::TheoremB ? 4 : 3;
    const auto m = mode == Mode::Continuity ? bunching_matrix() : default_matrix(c.dim);
    for (int i = 0; i < c.dim; ++i)
        for (int j = 0; j < c.dim; ++j) c.matrix.push_back(m.entries()(i, j));
    switch (mode) {
        case Mode::Spectrum:
            c.n_values = {4, 6, 8};
            c.orbits = 4;
            break;
        case Mode::Conditions:
        case Mode::TheoremA:
            c.n_values = range(4, 12);
            break;
        case Mode::TheoremB:
            c.n_values = {4, 5, 6};
            c.nu = 0.2;
            c.alpha = 0.1;
            break;
        case Mode::Partition:
            c.n_values = {8};
            c.t_values = {10.0, 100.0, 1000.0, 10000.0};
            break;
        case Mode::Continuity:
            c.n_values = {1, 2, 3, 4};
            c.iterations = 10000;
            c.orbits = 20;
            break;
        case Mode::Robustness:
            c.n_values = {11};
            break;
        case Mode::BoundLab:
            c.matrix.clear();
            break;
    }
    return c;
}

ToralAutomorphism configured_matrix(const ExperimentConfig& cfg) {
    if (cfg.dim != 3 && cfg.dim != 4) throw ValidationError("matrix.dim must be 3 or 4");
    if (cfg.matrix.size() != static_cast<std::size_t>(cfg.dim * cfg.dim))
        throw ValidationError("matrix.rows must hold dim^2 = " + std::to_string(cfg.dim * cfg.dim) + " integers, got " +
                              std::to_string(cfg.matrix.size()));
    try {
        return ToralAutomorphism::from_rows(cfg.dim, cfg.matrix);
    } catch (const Error& e) {
        throw ValidationError(std::string("matrix rejected: ") + e.what());
    }
}

ToralAutomorphism engine_map(const ExperimentConfig& cfg) {
    const ToralAutomorphism m = configured_matrix(cfg);
    if (cfg.orientation == Orientation::Engine) return m;
    if (cfg.orientation == Orientation::Inverse) return m.inverse();
    const int expanding = certify_spectrum(m).expanding_count();
    if (expanding == 1) return m;
    if (expanding == cfg.dim - 1) return m.inverse();
    throw ValidationError("cannot orient a matrix with " + std::to_string(expanding) +
                          " expanding eigenvalues; set matrix.orientation");
}

double theorem_b_nu_bound(double lam_u, double lam_ws, double lam_ss) {
    const double w = -std::log(lam_ws);
    return std::min(std::log(lam_u) / w, (-std::log(lam_ss) / w - 1.0) / 3.0);
}

void validate(const ExperimentConfig& cfg) {
    const Mode m = cfg.mode;
    if (cfg.iterations < 1) throw ValidationError("run.iterations must be positive");
    if (cfg.orbits < 2) throw ValidationError("run.orbits must be at least 2 for standard errors");
    if (cfg.threads < 1) throw ValidationError("run.threads must be at least 1");
    if (cfg.burn_in < 0) throw ValidationError("run.burn_in must be non-negative");
    if (cfg.models < 1) throw ValidationError("run.models must be positive");
    if (cfg.atoms < 1) throw ValidationError("run.atoms must be positive");
    if (cfg.samples < 1) throw ValidationError("run.samples must be positive");
    if (m == Mode::BoundLab) return;

    if (cfg.matrix.empty()) throw ValidationError("missing matrix");
    if (cfg.n_values.empty()) throw ValidationError("params.n must list at least one n");
    for (int n : cfg.n_values)
        if (n < 1 || n > 40) throw ValidationError("params.n values must lie in [1, 40]");
    for (double t : cfg.t_values)
        if (!(t >= 0) || !std::isfinite(t)) throw ValidationError("params.t values must be finite and >= 0");
    for (double e : cfg.epsilons)
        if (!(e >= 0) || e > 1) throw ValidationError("params.epsilon values must lie in [0, 1]");
    if (!(cfg.alpha > 0 && cfg.alpha < 0.5)) throw ValidationError("alpha must lie in (0, 1/2)");

    const EngineLambdas lam = engine_lambdas(cfg);
    if (lam.expanding != 1) throw ValidationError("the engine map must have exactly one expanding eigenvalue");

    if (m == Mode::TheoremA || m == Mode::Robustness || m == Mode::Continuity) {
        if (cfg.dim != 3) throw ValidationError(to_string(m) + " needs a dim 3 matrix");
    }
    if (m == Mode::TheoremA || m == Mode::Robustness || (m == Mode::Conditions && cfg.dim == 3)) {
        if (!(cfg.nu > 0 && cfg.nu < 2.0 / 3.0)) throw ValidationError("nu must lie in (0, 2/3) for theorem-a");
    }
    if (m == Mode::TheoremB || (m == Mode::Conditions && cfg.dim == 4)) {
        if (cfg.dim != 4) throw ValidationError("theorem-b needs a dim 4 matrix");
        const double bound = theorem_b_nu_bound(lam.abs[0], lam.abs[1], lam.abs[3]);
        if (!(cfg.nu > 0 && cfg.nu < bound)) {
            std::ostringstream os;
            os << "nu must lie in (0, " << bound
               << ") = (0, min{log lam_u / -log lam_ws, (-log lam_ss / -log lam_ws - 1) / 3}) for theorem-b";
            throw ValidationError(os.str());
        }
        if (!(cfg.nu - cfg.alpha - cfg.nu * cfg.alpha > 0))
            throw ValidationError("theorem-b needs nu - alpha - nu * alpha > 0");
    }
}

ExperimentConfig parse_config_string(const std::string& text, Mode mode) {
    pt::ptree tree;
    std::istringstream is(text);
    try {
        pt::ini_parser::read_ini(is, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ValidationError(std::string("malformed config: ") + e.message() + " (line " +
                              std::to_string(e.line()) + ")");
    }
    ExperimentConfig cfg = default_config(mode);
    if (needs_matrix(mode) && !tree.get_optional<std::string>("matrix.rows"))
        throw ValidationError("missing matrix: [matrix] rows is required");
    apply_tree(tree, mode, cfg);
    validate(cfg);
    return cfg;
}

ExperimentConfig parse_config(const std::string& path, Mode mode) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config_string(buf.str(), mode);
}

}  // namespace shearlyap
