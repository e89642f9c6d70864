#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "uqst/graph.hpp"
#include "uqst/ndarray.hpp"

namespace uqst::dataset {

// Per-(region, variable) min/max fitted on the training block, plus an
// optional per-variable nonnegative offset applied before normalization.
struct MinMaxSpec {
    std::size_t n = 0, m = 0;
    NDArray min_vals;            // (N,M)
    NDArray max_vals;            // (N,M)
    std::vector<double> offset;  // per variable, >= 0
};

struct STTensor {
    NDArray values;  // (N, M, L)
    std::vector<std::string> variable_names;
    double step_minutes = 60.0;
    std::optional<MinMaxSpec> norm_state;

    std::size_t n() const { return values.dim(0); }
    std::size_t m() const { return values.dim(1); }
    std::size_t length() const { return values.dim(2); }

    void validate() const;  // finite entries, L >= 1
};

struct WindowSample {
    std::size_t input_start = 0;  // input covers [input_start, input_start + t)
    std::size_t target_start = 0; // target covers [target_start, target_start + horizon)
};

struct WindowSet {
    std::size_t input_len = 12;
    std::size_t horizon = 1;
    std::vector<WindowSample> samples;
};

struct SplitResult {
    STTensor train, val, test;
    std::size_t val_offset = 0, test_offset = 0;
};

// Fit on [fit_begin, fit_end) along time, apply everywhere. Constant
// series map to 0.
std::pair<STTensor, MinMaxSpec> minmax_normalize(const STTensor& x, std::size_t fit_begin,
                                                 std::size_t fit_end,
                                                 const std::vector<double>& offset = {});
STTensor denormalize(const STTensor& x, const MinMaxSpec& spec);

SplitResult chronological_split(const STTensor& x);

WindowSet window(const STTensor& x, std::size_t input_len = 12, std::size_t horizon = 1);

// (N, M, input_len) slice of x for one sample.
NDArray window_input(const STTensor& x, const WindowSet& ws, std::size_t sample);
// (horizon, N, M) target values.
NDArray window_target(const STTensor& x, const WindowSet& ws, std::size_t sample);

struct SyntheticOptions {
    double cross_corr = 0.0;
    double noise_scale = 0.1;
    std::uint64_t seed = 0;
    bool heteroscedastic = false;      // noise scale cycles over a 1:5 range
    bool lag_coupled = false;          // variables >= 1 follow a lagged diffusion of variable 0
};

struct SyntheticResult {
    STTensor data;
    NDArray base_noise_cov;            // (M,M) covariance at unit scale factor
    std::vector<double> scale_factors; // per-time multiplier on the noise std (all 1 if homoscedastic)
};

SyntheticResult generate_synthetic(std::size_t n, std::size_t m, std::size_t length,
                                   const graph::RegionGraph& g, const SyntheticOptions& opt);

// CSV columns: time_index, region_id, variable, value.
// Metadata JSON: {"regions": [...], "variables": [...], "step_minutes": x}.
STTensor load_csv(const std::string& data_path, const std::string& meta_path,
                  const std::string& missing_policy = "zero");
void save_csv(const STTensor& x, const std::string& data_path, const std::string& meta_path);

void save_truth_cov_json(const SyntheticResult& truth, const std::string& path);

}  // namespace uqst::dataset
