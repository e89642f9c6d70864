#include "uqst/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "uqst/linalg.hpp"

namespace uqst::dataset {

void STTensor::validate() const {
    if (values.rank() != 3) throw std::invalid_argument("STTensor: expected rank-3 values");
    if (length() < 1) throw std::invalid_argument("STTensor: empty time axis");
    for (std::size_t i = 0; i < values.size(); ++i)
        if (!std::isfinite(values[i]))
            throw std::invalid_argument("STTensor: non-finite entry at flat index " +
                                        std::to_string(i));
}

std::pair<STTensor, MinMaxSpec> minmax_normalize(const STTensor& x, std::size_t fit_begin,
                                                 std::size_t fit_end,
                                                 const std::vector<double>& offset) {
    if (x.norm_state) throw std::invalid_argument("minmax_normalize: tensor already normalized");
    if (fit_end <= fit_begin || fit_end > x.length())
        throw std::invalid_argument("minmax_normalize: empty or invalid fit range");
    const std::size_t n = x.n(), m = x.m(), len = x.length();
    MinMaxSpec spec;
    spec.n = n;
    spec.m = m;
    spec.min_vals = NDArray({n, m});
    spec.max_vals = NDArray({n, m});
    spec.offset = offset.empty() ? std::vector<double>(m, 0.0) : offset;
    if (spec.offset.size() != m)
        throw std::invalid_argument("minmax_normalize: offset size mismatch");

    STTensor out = x;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            double lo = std::numeric_limits<double>::infinity(), hi = -lo;
            for (std::size_t t = fit_begin; t < fit_end; ++t) {
                double v = x.values.at3(i, j, t) + spec.offset[j];
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
            spec.min_vals.at2(i, j) = lo;
            spec.max_vals.at2(i, j) = hi;
            double range = hi - lo;
            for (std::size_t t = 0; t < len; ++t) {
                double v = x.values.at3(i, j, t) + spec.offset[j];
                out.values.at3(i, j, t) = range > 0 ? (v - lo) / range : 0.0;
            }
        }
    out.norm_state = spec;
    return {out, spec};
}

STTensor denormalize(const STTensor& x, const MinMaxSpec& spec) {
    if (x.n() != spec.n || x.m() != spec.m)
        throw std::invalid_argument("denormalize: spec/tensor shape mismatch");
    STTensor out = x;
    for (std::size_t i = 0; i < x.n(); ++i)
        for (std::size_t j = 0; j < x.m(); ++j) {
            double lo = spec.min_vals.at2(i, j), range = spec.max_vals.at2(i, j) - lo;
            for (std::size_t t = 0; t < x.length(); ++t)
                out.values.at3(i, j, t) =
                    x.values.at3(i, j, t) * range + lo - spec.offset[j];
        }
    out.norm_state.reset();
    return out;
}

namespace {

STTensor time_block(const STTensor& x, std::size_t begin, std::size_t len) {
    STTensor out;
    out.variable_names = x.variable_names;
    out.step_minutes = x.step_minutes;
    out.norm_state = x.norm_state;
    out.values = NDArray({x.n(), x.m(), len});
    for (std::size_t i = 0; i < x.n(); ++i)
        for (std::size_t j = 0; j < x.m(); ++j)
            for (std::size_t t = 0; t < len; ++t)
                out.values.at3(i, j, t) = x.values.at3(i, j, begin + t);
    return out;
}

}  // namespace

SplitResult chronological_split(const STTensor& x) {
    const std::size_t len = x.length();
    if (len < 10) throw std::invalid_argument("chronological_split: need L >= 10");
    std::size_t n_train = std::size_t(std::floor(0.8 * double(len)));
    std::size_t n_val = std::size_t(std::floor(0.1 * double(len)));
    std::size_t n_test = len - n_train - n_val;
    SplitResult res;
    res.train = time_block(x, 0, n_train);
    res.val = time_block(x, n_train, n_val);
    res.test = time_block(x, n_train + n_val, n_test);
    res.val_offset = n_train;
    res.test_offset = n_train + n_val;
    return res;
}

WindowSet window(const STTensor& x, std::size_t input_len, std::size_t horizon) {
    const std::size_t len = x.length();
    if (len < input_len + horizon)
        throw std::invalid_argument("window: series length " + std::to_string(len) +
                                    " < t + T = " + std::to_string(input_len + horizon));
    WindowSet ws;
    ws.input_len = input_len;
    ws.horizon = horizon;
    for (std::size_t s = 0; s + input_len + horizon <= len; ++s)
        ws.samples.push_back({s, s + input_len});
    return ws;
}

NDArray window_input(const STTensor& x, const WindowSet& ws, std::size_t sample) {
    const auto& sm = ws.samples.at(sample);
    NDArray out({x.n(), x.m(), ws.input_len});
    for (std::size_t i = 0; i < x.n(); ++i)
        for (std::size_t j = 0; j < x.m(); ++j)
            for (std::size_t t = 0; t < ws.input_len; ++t)
                out.at3(i, j, t) = x.values.at3(i, j, sm.input_start + t);
    return out;
}

NDArray window_target(const STTensor& x, const WindowSet& ws, std::size_t sample) {
    const auto& sm = ws.samples.at(sample);
    NDArray out({ws.horizon, x.n(), x.m()});
    for (std::size_t h = 0; h < ws.horizon; ++h)
        for (std::size_t i = 0; i < x.n(); ++i)
            for (std::size_t j = 0; j < x.m(); ++j)
                out.at3(h, i, j) = x.values.at3(i, j, sm.target_start + h);
    return out;
}

SyntheticResult generate_synthetic(std::size_t n, std::size_t m, std::size_t length,
                                   const graph::RegionGraph& g, const SyntheticOptions& opt) {
    if (g.n_regions != n) throw std::invalid_argument("generate_synthetic: graph size mismatch");
    if (m < 2 && opt.cross_corr != 0.0)
        throw std::invalid_argument("generate_synthetic: cross_corr needs m >= 2");
    double rho = opt.cross_corr;
    if (rho < -1.0 || rho > 1.0)
        throw std::invalid_argument("generate_synthetic: correlation must be in [-1,1]");
    // Equicorrelated covariance is PD iff rho in (-1/(M-1), 1).
    if (m >= 2 && (rho >= 1.0 || rho <= -1.0 / double(m - 1)))
        throw std::invalid_argument("generate_synthetic: target covariance not PD for rho=" +
                                    std::to_string(rho));

    std::mt19937_64 rng(opt.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    auto ops = graph::diffusion_operators(g);
    const NDArray& w = ops.forward;

    // Latent sinusoid + random walk per (region, variable).
    NDArray amp({n, m}), phase({n, m});
    std::vector<double> period(m);
    for (std::size_t j = 0; j < m; ++j) period[j] = 24.0 + 12.0 * double(j);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            amp.at2(i, j) = 0.5 + unif(rng);
            phase.at2(i, j) = 2.0 * M_PI * unif(rng);
        }

    NDArray latent({n, m, length});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            double walk = 0.0;
            for (std::size_t t = 0; t < length; ++t) {
                walk += 0.03 * gauss(rng);
                latent.at3(i, j, t) =
                    amp.at2(i, j) * std::sin(2.0 * M_PI * double(t) / period[j] +
                                             phase.at2(i, j)) + walk;
            }
        }

    // Diffuse each variable's snapshot over the graph.
    NDArray clean({n, m, length});
    for (std::size_t t = 0; t < length; ++t)
        for (std::size_t j = 0; j < m; ++j)
            for (std::size_t i = 0; i < n; ++i) {
                double acc = 0.0;
                for (std::size_t k = 0; k < n; ++k) acc += w.at2(i, k) * latent.at3(k, j, t);
                clean.at3(i, j, t) = acc;
            }

    if (opt.lag_coupled) {
        // Variables >= 1 follow a one-step-lagged diffusion of variable 0.
        for (std::size_t j = 1; j < m; ++j)
            for (std::size_t t = 0; t < length; ++t)
                for (std::size_t i = 0; i < n; ++i) {
                    if (t == 0) {
                        clean.at3(i, j, 0) = clean.at3(i, 0, 0);
                    } else {
                        double acc = 0.0;
                        for (std::size_t k = 0; k < n; ++k)
                            acc += w.at2(i, k) * clean.at3(k, 0, t - 1);
                        clean.at3(i, j, t) = 0.9 * acc;
                    }
                }
    } else if (m >= 2) {
        // Mild cross-variable mixing so interactions exist to learn.
        NDArray mixed = clean;
        double off = 0.3 / double(m - 1);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t t = 0; t < length; ++t)
                for (std::size_t j = 0; j < m; ++j) {
                    double acc = clean.at3(i, j, t);
                    for (std::size_t j2 = 0; j2 < m; ++j2)
                        if (j2 != j) acc += off * clean.at3(i, j2, t);
                    mixed.at3(i, j, t) = acc;
                }
        clean = mixed;
    }

    // Correlated noise: C = scale^2 * [(1-rho) I + rho J].
    NDArray corr({m, m});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j) corr.at2(i, j) = (i == j) ? 1.0 : rho;
    NDArray lc = linalg::cholesky(corr);

    SyntheticResult res;
    res.base_noise_cov = NDArray({m, m});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j)
            res.base_noise_cov.at2(i, j) = opt.noise_scale * opt.noise_scale * corr.at2(i, j);
    res.scale_factors.assign(length, 1.0);
    if (opt.heteroscedastic) {
        for (std::size_t t = 0; t < length; ++t)
            res.scale_factors[t] = 3.0 + 2.0 * std::sin(2.0 * M_PI * double(t) / 60.0);
    }

    res.data.values = NDArray({n, m, length});
    res.data.step_minutes = 60.0;
    for (std::size_t j = 0; j < m; ++j) res.data.variable_names.push_back("v" + std::to_string(j));
    std::vector<double> z(m), eps(m);
    for (std::size_t t = 0; t < length; ++t)
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < m; ++j) z[j] = gauss(rng);
            for (std::size_t j = 0; j < m; ++j) {
                double acc = 0.0;
                for (std::size_t k = 0; k <= j; ++k) acc += lc.at2(j, k) * z[k];
                eps[j] = opt.noise_scale * res.scale_factors[t] * acc;
            }
            for (std::size_t j = 0; j < m; ++j)
                res.data.values.at3(i, j, t) = clean.at3(i, j, t) + eps[j];
        }
    res.data.validate();
    return res;
}

STTensor load_csv(const std::string& data_path, const std::string& meta_path,
                  const std::string& missing_policy) {
    std::ifstream mf(meta_path);
    if (!mf) throw std::runtime_error("cannot open metadata file: " + meta_path);
    nlohmann::json meta;
    mf >> meta;
    auto regions = meta.at("regions").get<std::vector<std::string>>();
    auto variables = meta.at("variables").get<std::vector<std::string>>();
    double step_minutes = meta.value("step_minutes", 60.0);

    std::map<std::string, std::size_t> rix, vix;
    for (std::size_t i = 0; i < regions.size(); ++i) rix[regions[i]] = i;
    for (std::size_t i = 0; i < variables.size(); ++i) vix[variables[i]] = i;

    std::ifstream f(data_path);
    if (!f) throw std::runtime_error("cannot open data file: " + data_path);
    std::string line;
    std::getline(f, line);  // header
    struct Cell { std::size_t t, r, v; double x; };
    std::vector<Cell> cells;
    std::size_t max_t = 0;
    std::size_t row = 1;
    std::vector<bool> seen;
    while (std::getline(f, line)) {
        ++row;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string tok;
        std::vector<std::string> cols;
        while (std::getline(ss, tok, ',')) cols.push_back(tok);
        if (cols.size() != 4)
            throw std::runtime_error("row " + std::to_string(row) + ": expected 4 columns");
        Cell c;
        try {
            c.t = std::stoul(cols[0]);
            c.x = std::stod(cols[3]);
        } catch (const std::exception&) {
            throw std::runtime_error("row " + std::to_string(row) + ": non-numeric value");
        }
        auto ri = rix.find(cols[1]);
        if (ri == rix.end())
            throw std::runtime_error("row " + std::to_string(row) + ": unknown region " + cols[1]);
        auto vi = vix.find(cols[2]);
        if (vi == vix.end())
            throw std::runtime_error("row " + std::to_string(row) + ": unknown variable " + cols[2]);
        c.r = ri->second;
        c.v = vi->second;
        max_t = std::max(max_t, c.t);
        cells.push_back(c);
    }
    if (cells.empty()) throw std::runtime_error("data file has no rows: " + data_path);

    const std::size_t n = regions.size(), m = variables.size(), len = max_t + 1;
    STTensor out;
    out.values = NDArray({n, m, len});
    out.variable_names = variables;
    out.step_minutes = step_minutes;
    std::vector<bool> filled(n * m * len, false);
    std::size_t row2 = 1;
    for (const auto& c : cells) {
        ++row2;
        std::size_t idx = (c.r * m + c.v) * len + c.t;
        if (filled[idx])
            throw std::runtime_error("row " + std::to_string(row2) + ": duplicate cell (t=" +
                                     std::to_string(c.t) + ", region=" + regions[c.r] +
                                     ", variable=" + variables[c.v] + ")");
        filled[idx] = true;
        out.values[idx] = c.x;
    }
    if (missing_policy == "error") {
        for (std::size_t i = 0; i < filled.size(); ++i)
            if (!filled[i])
                throw std::runtime_error("missing cell at flat index " + std::to_string(i));
    } else if (missing_policy != "zero") {
        throw std::invalid_argument("unknown missing policy: " + missing_policy);
    }
    out.validate();
    return out;
}

void save_csv(const STTensor& x, const std::string& data_path, const std::string& meta_path) {
    std::ofstream f(data_path);
    if (!f) throw std::runtime_error("cannot write data file: " + data_path);
    f << "time_index,region_id,variable,value\n";
    char buf[64];
    for (std::size_t t = 0; t < x.length(); ++t)
        for (std::size_t i = 0; i < x.n(); ++i)
            for (std::size_t j = 0; j < x.m(); ++j) {
                std::snprintf(buf, sizeof buf, "%.10g", x.values.at3(i, j, t));
                f << t << ",r" << i << "," << x.variable_names[j] << "," << buf << "\n";
            }

    nlohmann::json meta;
    std::vector<std::string> regions;
    for (std::size_t i = 0; i < x.n(); ++i) regions.push_back("r" + std::to_string(i));
    meta["regions"] = regions;
    meta["variables"] = x.variable_names;
    meta["step_minutes"] = x.step_minutes;
    std::ofstream mf(meta_path);
    if (!mf) throw std::runtime_error("cannot write metadata file: " + meta_path);
    mf << meta.dump(2) << "\n";
}

void save_truth_cov_json(const SyntheticResult& truth, const std::string& path) {
    nlohmann::json j;
    j["base_noise_cov"] = truth.base_noise_cov.vec();
    j["m"] = truth.base_noise_cov.dim(0);
    j["scale_factors"] = truth.scale_factors;
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write truth file: " + path);
    f << j.dump(2) << "\n";
}

}  // namespace uqst::dataset
