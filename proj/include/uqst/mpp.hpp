#pragma once

#include <vector>

#include "uqst/autodiff.hpp"
#include "uqst/params.hpp"

namespace uqst::mpp {

enum class DistKind { Gaussian, Laplace, NegBinom, Deterministic };

struct MppConfig {
    double v_min = 1e-4;
    DistKind kind = DistKind::Gaussian;
    std::size_t conv_channels = 8;
    std::size_t hidden = 32;
    std::size_t horizon = 1;
    bool diagonal = false;  // force diagonal covariance (independent univariate head)
};

// Per (tau, n): mean vector and PD covariance over the M phenomena.
struct DistForecast {
    std::size_t horizon = 0, n = 0, m = 0;
    NDArray mu;     // (T, N, M)
    NDArray sigma;  // (T, N, M, M)
    DistKind kind = DistKind::Gaussian;
    NDArray nb_r;   // (T, N, M) for NegBinom, else empty
    NDArray nb_p;

    NDArray sigma_at(std::size_t tau, std::size_t region) const;
};

struct Interval {
    double lower = 0, upper = 0;
};

// Symmetric PD projection: eigendecompose, clamp eigenvalues at v_min,
// reconstruct. Differentiable through eig_sym and clamp_min.
ad::Value clamp_to_pd(ad::Value w, double v_min);

void register_params(model::ParamStore& store, const MppConfig& cfg, std::size_t m,
                     std::size_t embed_dim);

// Call after ParamStore::initialize: biases the covariance head toward a
// PD start so the eigenvalue clamp has gradient at step 0.
void init_z_bias(model::ParamStore& store, const MppConfig& cfg, std::size_t m);

// In-graph outputs of the prediction head for one sample.
struct MppOutputs {
    std::size_t horizon = 0, n = 0, m = 0;
    DistKind kind = DistKind::Gaussian;
    ad::Value mu;                  // (T, N, M)
    std::vector<ad::Value> sigma;  // per tau*N + n, each (M, M); empty for Deterministic
    std::vector<ad::Value> nb_r;   // per tau*N + n, each (M)
    std::vector<ad::Value> nb_p;
};

// e: fused embedding (N, M, embed_dim).
MppOutputs forward(ad::Tape& tape, const model::ParamLeaves& params, const MppConfig& cfg,
                   std::size_t m, ad::Value e);

// Batch-mean loss over (tau, n): NLL for distributional kinds, MAE for
// Deterministic. target: (T, N, M).
ad::Value loss(ad::Tape& tape, const MppOutputs& out, const NDArray& target);

DistForecast extract(const MppOutputs& out);

// mu +- 1.96 * sqrt(diag(Sigma)) per (tau, n, m).
std::vector<Interval> prediction_interval(const DistForecast& f, double z = 1.96);

}  // namespace uqst::mpp
