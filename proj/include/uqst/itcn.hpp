#pragma once

#include <random>
#include <vector>

#include "uqst/autodiff.hpp"
#include "uqst/params.hpp"

namespace uqst::itcn {

// Dilated causal temporal convolution over all phenomena jointly,
// in residual blocks with weight normalization, ReLU, and dropout.
struct ItcnConfig {
    std::size_t blocks = 2;
    std::size_t kernel = 2;
    std::vector<std::size_t> dilations;  // empty: 2^(b-1)
    std::size_t channels_per_var = 8;
    double dropout = 0.1;
    std::size_t embed_dim = 8;
    bool cross_vars = true;   // false: grouped conv, one group per phenomenon (ablation)
    bool mean_pool = false;   // temporal summary: mean over time instead of last step

    std::size_t dilation(std::size_t b) const {
        if (!dilations.empty()) return dilations.at(b);
        return std::size_t{1} << b;
    }
    // Per block: one dilated conv (kernel k) plus one pointwise conv, so
    // the reach is 1 + (k-1) * sum of dilations.
    std::size_t receptive_field() const {
        std::size_t sum = 0;
        for (std::size_t b = 0; b < blocks; ++b) sum += dilation(b);
        return 1 + (kernel - 1) * sum;
    }
};

void register_params(model::ParamStore& store, const ItcnConfig& cfg, std::size_t m);

// One residual block: h (B, C_in, L) -> (B, C_out, L).
ad::Value block(ad::Tape& tape, const model::ParamLeaves& params, const ItcnConfig& cfg,
                std::size_t block_idx, std::size_t m, ad::Value h,
                std::mt19937_64* dropout_rng);

// Full stack: x (N, M, t) -> temporal embedding (N, M, e).
// dropout_rng null means eval mode (no dropout).
ad::Value forward(ad::Tape& tape, const model::ParamLeaves& params, const ItcnConfig& cfg,
                  std::size_t m, ad::Value x, std::mt19937_64* dropout_rng);

// Hadamard fusion of spatial and temporal embeddings.
ad::Value fuse_embeddings(ad::Value e_s, ad::Value e_t);

}  // namespace uqst::itcn
