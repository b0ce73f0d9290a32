#include "shearlyap/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace shearlyap {

double mean(const std::vector<double>& x) {
    if (x.empty()) return 0.0;
    return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double stddev(const std::vector<double>& x) {
    if (x.size() < 2) return 0.0;
    double m = mean(x);
    double s = 0.0;
    for (double v : x) s += (v - m) * (v - m);
    return std::sqrt(s / static_cast<double>(x.size() - 1));
}

double standard_error(const std::vector<double>& x) {
    if (x.size() < 2) return 0.0;
    return stddev(x) / std::sqrt(static_cast<double>(x.size()));
}

double quantile(std::vector<double> x, double q) {
    if (x.empty()) throw std::invalid_argument("quantile of empty sample");
    std::sort(x.begin(), x.end());
    double pos = q * static_cast<double>(x.size() - 1);
    auto lo = static_cast<std::size_t>(std::floor(pos));
    auto hi = std::min(lo + 1, x.size() - 1);
    double w = pos - static_cast<double>(lo);
    return x[lo] * (1 - w) + x[hi] * w;
}

double median(std::vector<double> x) { return quantile(std::move(x), 0.5); }

static double r_squared(const std::vector<double>& x, const std::vector<double>& y,
                        double slope, double intercept, double* rms) {
    double my = mean(y);
    double ss_tot = 0, ss_res = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double r = y[i] - (intercept + slope * x[i]);
        ss_res += r * r;
        ss_tot += (y[i] - my) * (y[i] - my);
    }
    *rms = std::sqrt(ss_res / static_cast<double>(x.size()));
    if (ss_tot == 0.0) return ss_res == 0.0 ? 1.0 : 0.0;
    return 1.0 - ss_res / ss_tot;
}

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("fit_line needs >= 2 paired points");
    double mx = mean(x), my = mean(y);
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    LineFit f;
    f.points = static_cast<int>(x.size());
    f.slope = sxx > 0 ? sxy / sxx : 0.0;
    f.intercept = my - f.slope * mx;
    f.r2 = r_squared(x, y, f.slope, f.intercept, &f.rms_residual);
    return f;
}

LineFit fit_offset(const std::vector<double>& x, const std::vector<double>& y, double slope) {
    if (x.size() != y.size() || x.empty()) throw std::invalid_argument("fit_offset needs paired points");
    LineFit f;
    f.points = static_cast<int>(x.size());
    f.slope = slope;
    double s = 0;
    for (std::size_t i = 0; i < x.size(); ++i) s += y[i] - slope * x[i];
    f.intercept = s / static_cast<double>(x.size());
    f.r2 = r_squared(x, y, f.slope, f.intercept, &f.rms_residual);
    return f;
}

}  // namespace shearlyap
