#include "uqst/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace uqst::metrics {

DeterministicMetrics deterministic_metrics(const std::vector<double>& y,
                                           const std::vector<double>& yhat,
                                           double eps_mape) {
    if (y.empty() || y.size() != yhat.size())
        throw std::invalid_argument("deterministic_metrics: empty or mismatched inputs");
    DeterministicMetrics m;
    double se = 0;
    std::size_t mape_n = 0;
    double mape_sum = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        double d = y[i] - yhat[i];
        m.mae += std::abs(d);
        se += d * d;
        if (std::abs(y[i]) >= eps_mape) {
            mape_sum += std::abs(d / y[i]);
            ++mape_n;
        }
    }
    m.mae /= double(y.size());
    m.rmse = std::sqrt(se / double(y.size()));
    m.mape = mape_n ? 100.0 * mape_sum / double(mape_n) : 0.0;
    return m;
}

double kl_divergence(const std::vector<double>& y, const std::vector<double>& yhat,
                     double eps) {
    if (y.empty() || y.size() != yhat.size())
        throw std::invalid_argument("kl_divergence: empty or mismatched inputs");
    auto normalize = [eps](const std::vector<double>& v) {
        std::vector<double> out(v.size());
        double sum = 0;
        for (std::size_t i = 0; i < v.size(); ++i) {
            out[i] = std::max(v[i], eps);
            sum += out[i];
        }
        if (sum <= 0) throw std::invalid_argument("kl_divergence: all-zero input");
        for (auto& x : out) x /= sum;
        return out;
    };
    auto p = normalize(y), q = normalize(yhat);
    double kl = 0;
    for (std::size_t i = 0; i < p.size(); ++i) kl += p[i] * std::log(p[i] / q[i]);
    return kl;
}

double mpiw(const mpp::DistForecast& f) {
    if (f.kind == mpp::DistKind::Deterministic)
        throw std::invalid_argument("mpiw: needs a distributional forecast");
    double sum = 0;
    std::size_t count = 0;
    for (std::size_t tau = 0; tau < f.horizon; ++tau)
        for (std::size_t reg = 0; reg < f.n; ++reg)
            for (std::size_t j = 0; j < f.m; ++j) {
                double var = f.sigma[(((tau * f.n) + reg) * f.m + j) * f.m + j];
                sum += 1.96 * std::sqrt(std::max(var, 0.0));
                ++count;
            }
    return sum / double(count);
}

double gaussian_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI); }
double gaussian_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double crps_gaussian(double x, double mu, double sigma) {
    if (sigma < 0) throw std::invalid_argument("crps_gaussian: sigma must be >= 0");
    if (sigma == 0) return std::abs(x - mu);
    double z = (x - mu) / sigma;
    return sigma * (z * (2.0 * gaussian_cdf(z) - 1.0) + 2.0 * gaussian_pdf(z) -
                    1.0 / std::sqrt(M_PI));
}

SelectiveCurve selective_curve(const std::vector<double>& abs_errors,
                               const std::vector<double>& scores,
                               const std::vector<double>& coverages) {
    if (abs_errors.empty() || abs_errors.size() != scores.size())
        throw std::invalid_argument("selective_curve: empty or mismatched inputs");
    std::vector<double> cov = coverages;
    if (cov.empty())
        for (int i = 1; i <= 10; ++i) cov.push_back(0.1 * i);

    const std::size_t n = abs_errors.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    SelectiveCurve curve;
    for (double c : cov) {
        std::size_t keep = (c >= 1.0) ? n : std::size_t(std::llround(c * double(n)));
        keep = std::min(std::max<std::size_t>(keep, 1), n);
        double sum = 0;
        for (std::size_t i = 0; i < keep; ++i) sum += abs_errors[order[i]];
        curve.points.push_back({c, sum / double(keep)});
    }
    return curve;
}

}  // namespace uqst::metrics
