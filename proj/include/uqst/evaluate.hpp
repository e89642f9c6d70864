#pragma once

#include <string>

#include "uqst/dataset.hpp"
#include "uqst/metrics.hpp"
#include "uqst/model.hpp"

namespace uqst::evaluate {

struct EvalOptions {
    bool selective = false;
    std::string score = "logdet";  // "logdet" | "trace" | "random"
    std::uint64_t random_score_seed = 0;
};

struct EvalResult {
    metrics::MetricsReport report;
    metrics::SelectiveCurve curve;  // filled when selective
    double nll = 0;                 // mean NLL on the normalized scale (MAE for deterministic)
};

// Scores all windows of a normalized split; metrics are computed on the
// denormalized (original-unit) scale. Deterministic forecasts are treated
// as sigma = 0 (CRPS reduces to MAE, MPIW 0).
EvalResult evaluate_model(const model::Model& m, const dataset::STTensor& test_norm,
                          const dataset::MinMaxSpec& spec, const EvalOptions& opt = {});

void save_report_json(const EvalResult& r, const std::string& path);
void save_selective_csv(const metrics::SelectiveCurve& curve, const std::string& path);

// Forecast dump for one window: mu and lower-triangle-packed sigma per (tau, n).
void save_forecast_json(const mpp::DistForecast& f, const std::string& path);

}  // namespace uqst::evaluate
