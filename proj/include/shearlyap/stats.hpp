#pragma once

#include <vector>

namespace shearlyap {

double mean(const std::vector<double>& x);
// Sample standard deviation (n-1 denominator); 0 for fewer than two values.
double stddev(const std::vector<double>& x);
double standard_error(const std::vector<double>& x);
double median(std::vector<double> x);
double quantile(std::vector<double> x, double q);

struct LineFit {
    double slope = 0;
    double intercept = 0;
    double r2 = 0;
    double rms_residual = 0;
    int points = 0;
};

// Ordinary least squares y = intercept + slope * x.
LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

// Least squares with the slope pinned: y = intercept + slope * x.
LineFit fit_offset(const std::vector<double>& x, const std::vector<double>& y, double slope);

}  // namespace shearlyap
