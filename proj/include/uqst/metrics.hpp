#pragma once

#include <string>
#include <vector>

#include "uqst/mpp.hpp"
#include "uqst/ndarray.hpp"

namespace uqst::metrics {

struct DeterministicMetrics {
    double mae = 0, rmse = 0, mape = 0;  // mape in percent
};

struct MetricsReport {
    double mae = 0, rmse = 0, mape = 0, kl = 0, mpiw = 0, crps = 0;
    std::vector<std::string> variable_names;
    std::vector<MetricsReport> per_variable;  // leaf reports, per_variable empty
};

struct SelectivePoint {
    double coverage = 0, mae = 0;
};

struct SelectiveCurve {
    std::vector<SelectivePoint> points;
    std::string score_tag;  // "logdet" | "trace" | "random"
};

// MAPE excludes entries with |Y| < eps_mape.
DeterministicMetrics deterministic_metrics(const std::vector<double>& y,
                                           const std::vector<double>& yhat,
                                           double eps_mape = 1e-6);

// Both sides are epsilon-floored and renormalized to sum 1 first.
double kl_divergence(const std::vector<double>& y, const std::vector<double>& yhat,
                     double eps = 1e-9);

// Mean over (tau, n, m) of 1.96 * sqrt(Sigma_mm).
double mpiw(const mpp::DistForecast& f);

// Closed-form CRPS of a Gaussian forecast; |x - mu| at sigma = 0.
double crps_gaussian(double x, double mu, double sigma);

// For each coverage c, keep the c fraction with lowest score (stable
// index tie-break) and report MAE on the kept set.
SelectiveCurve selective_curve(const std::vector<double>& abs_errors,
                               const std::vector<double>& scores,
                               const std::vector<double>& coverages = {});

double gaussian_cdf(double z);
double gaussian_pdf(double z);

}  // namespace uqst::metrics
