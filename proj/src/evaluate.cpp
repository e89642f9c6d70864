#include "uqst/evaluate.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

#include <json.hpp>

#include "uqst/linalg.hpp"
#include "uqst/training.hpp"

namespace uqst::evaluate {

namespace {

double range_at(const dataset::MinMaxSpec& spec, std::size_t reg, std::size_t var) {
    return spec.max_vals.at2(reg, var) - spec.min_vals.at2(reg, var);
}

double denorm_value(const dataset::MinMaxSpec& spec, std::size_t reg, std::size_t var,
                    double x) {
    return x * range_at(spec, reg, var) + spec.min_vals.at2(reg, var) - spec.offset[var];
}

}  // namespace

EvalResult evaluate_model(const model::Model& m, const dataset::STTensor& test_norm,
                          const dataset::MinMaxSpec& spec, const EvalOptions& opt) {
    const auto& cfg = m.config();
    auto ws = dataset::window(test_norm, cfg.input_len, cfg.horizon);
    const std::size_t n = m.n_regions(), nv = m.n_vars();
    const bool probabilistic = (cfg.variant != model::Variant::NoMPP);

    std::vector<double> y, yhat, sigmas;           // flattened over (sample, tau, n, m)
    std::vector<std::vector<double>> y_v(nv), yhat_v(nv), sig_v(nv);
    std::vector<double> sample_mae(ws.samples.size(), 0.0);
    std::vector<double> sample_score(ws.samples.size(), 0.0);
    double nll_sum = 0;

    std::mt19937_64 rand_rng(opt.random_score_seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    for (std::size_t s = 0; s < ws.samples.size(); ++s) {
        NDArray in = dataset::window_input(test_norm, ws, s);
        NDArray tgt = dataset::window_target(test_norm, ws, s);
        mpp::DistForecast f = m.predict(in);
        {
            ad::Tape tape;
            nll_sum += m.sample_loss(tape, in, tgt, nullptr).data()[0];
        }

        double err_sum = 0;
        std::size_t err_n = 0;
        double score_sum = 0;
        std::size_t score_n = 0;
        for (std::size_t tau = 0; tau < cfg.horizon; ++tau)
            for (std::size_t reg = 0; reg < n; ++reg) {
                for (std::size_t v = 0; v < nv; ++v) {
                    double truth = denorm_value(spec, reg, v, tgt.at3(tau, reg, v));
                    double pred =
                        denorm_value(spec, reg, v, f.mu[(tau * n + reg) * nv + v]);
                    double sd = 0;
                    if (probabilistic) {
                        double var = f.sigma[(((tau * n) + reg) * nv + v) * nv + v];
                        double rr = range_at(spec, reg, v);
                        sd = std::sqrt(std::max(var, 0.0)) * rr;
                    }
                    y.push_back(truth);
                    yhat.push_back(pred);
                    sigmas.push_back(sd);
                    y_v[v].push_back(truth);
                    yhat_v[v].push_back(pred);
                    sig_v[v].push_back(sd);
                    err_sum += std::abs(truth - pred);
                    ++err_n;
                }
                if (probabilistic) {
                    NDArray sig = f.sigma_at(tau, reg);
                    if (opt.score == "trace") {
                        for (std::size_t v = 0; v < nv; ++v) score_sum += sig.at2(v, v);
                    } else {
                        score_sum += linalg::log_det_from_cholesky(linalg::cholesky(sig));
                    }
                    ++score_n;
                }
            }
        sample_mae[s] = err_sum / double(err_n);
        if (opt.score == "random") {
            sample_score[s] = unif(rand_rng);
        } else {
            sample_score[s] = score_n ? score_sum / double(score_n) : 0.0;
        }
    }

    EvalResult res;
    res.nll = nll_sum / double(ws.samples.size());

    auto fill = [&](metrics::MetricsReport& rep, const std::vector<double>& yy,
                    const std::vector<double>& yh, const std::vector<double>& sd) {
        auto det = metrics::deterministic_metrics(yy, yh);
        rep.mae = det.mae;
        rep.rmse = det.rmse;
        rep.mape = det.mape;
        rep.kl = metrics::kl_divergence(yy, yh);
        double crps = 0, width = 0;
        for (std::size_t i = 0; i < yy.size(); ++i) {
            crps += metrics::crps_gaussian(yy[i], yh[i], sd[i]);
            width += 1.96 * sd[i];
        }
        rep.crps = crps / double(yy.size());
        rep.mpiw = width / double(yy.size());
    };

    fill(res.report, y, yhat, sigmas);
    res.report.variable_names = test_norm.variable_names;
    for (std::size_t v = 0; v < nv; ++v) {
        metrics::MetricsReport rep;
        fill(rep, y_v[v], yhat_v[v], sig_v[v]);
        res.report.per_variable.push_back(rep);
    }

    if (opt.selective) {
        res.curve = metrics::selective_curve(sample_mae, sample_score);
        res.curve.score_tag = opt.score;
    }
    return res;
}

namespace {

nlohmann::json metrics_json(const metrics::MetricsReport& r) {
    return {{"mae", r.mae},   {"rmse", r.rmse}, {"mape", r.mape},
            {"kl", r.kl},     {"mpiw", r.mpiw}, {"crps", r.crps}};
}

}  // namespace

void save_report_json(const EvalResult& r, const std::string& path) {
    nlohmann::json j;
    j["overall"] = metrics_json(r.report);
    j["nll"] = r.nll;
    nlohmann::json pv = nlohmann::json::object();
    for (std::size_t v = 0; v < r.report.per_variable.size(); ++v) {
        std::string name = v < r.report.variable_names.size() ? r.report.variable_names[v]
                                                              : "v" + std::to_string(v);
        pv[name] = metrics_json(r.report.per_variable[v]);
    }
    j["per_variable"] = pv;
    if (!r.curve.points.empty()) {
        nlohmann::json sel = nlohmann::json::array();
        for (const auto& p : r.curve.points) sel.push_back({p.coverage, p.mae});
        j["selective"] = sel;
    }
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write report: " + path);
    f << j.dump(2) << "\n";
}

void save_selective_csv(const metrics::SelectiveCurve& curve, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write curve: " + path);
    f << "coverage,mae\n";
    char buf[64];
    for (const auto& p : curve.points) {
        std::snprintf(buf, sizeof buf, "%.6g,%.6g\n", p.coverage, p.mae);
        f << buf;
    }
}

void save_forecast_json(const mpp::DistForecast& f, const std::string& path) {
    nlohmann::json j;
    j["kind"] = f.kind == mpp::DistKind::Gaussian    ? "gaussian"
                : f.kind == mpp::DistKind::Laplace   ? "laplace"
                : f.kind == mpp::DistKind::NegBinom  ? "negbinom"
                                                     : "deterministic";
    j["horizon"] = f.horizon;
    j["n_regions"] = f.n;
    j["n_vars"] = f.m;
    nlohmann::json steps = nlohmann::json::array();
    for (std::size_t tau = 0; tau < f.horizon; ++tau) {
        nlohmann::json regions = nlohmann::json::array();
        for (std::size_t reg = 0; reg < f.n; ++reg) {
            nlohmann::json rj;
            std::vector<double> mu(f.m);
            for (std::size_t v = 0; v < f.m; ++v) mu[v] = f.mu[(tau * f.n + reg) * f.m + v];
            rj["mu"] = mu;
            if (f.kind != mpp::DistKind::Deterministic) {
                std::vector<double> packed;  // lower triangle, row-major
                NDArray sig = f.sigma_at(tau, reg);
                for (std::size_t i = 0; i < f.m; ++i)
                    for (std::size_t k = 0; k <= i; ++k) packed.push_back(sig.at2(i, k));
                rj["sigma_tril"] = packed;
            }
            regions.push_back(rj);
        }
        steps.push_back(regions);
    }
    j["steps"] = steps;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write forecast: " + path);
    out << j.dump(2) << "\n";
}

}  // namespace uqst::evaluate
