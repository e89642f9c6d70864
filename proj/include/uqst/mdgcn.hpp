#pragma once

#include <vector>

#include "uqst/autodiff.hpp"
#include "uqst/params.hpp"

namespace uqst::mdgcn {

// Cross-layer diffusion graph convolution. Each target phenomenon
// aggregates Chebyshev-filtered states of every source phenomenon in
// both diffusion directions, each pair with its own weights.
struct MdgcnConfig {
    std::size_t cheb_order = 2;
    std::vector<std::size_t> dims;  // {f_in, hidden..., embed_dim}; ReLU between, last Linear
    bool cross_pairs = true;        // false: per-phenomenon diffusion GCN (ablation)
    bool shared_theta = false;      // one Theta per (k, dir, layer) shared across pairs
};

void register_params(model::ParamStore& store, const MdgcnConfig& cfg, std::size_t m);

// One layer: h (N, M, f_in) -> (N, M, f_out). basis_f/basis_b hold the
// Chebyshev matrices T_1..T_K as tape constants.
ad::Value layer(ad::Tape& tape, const model::ParamLeaves& params, const MdgcnConfig& cfg,
                std::size_t layer_idx, std::size_t m, const std::vector<ad::Value>& basis_f,
                const std::vector<ad::Value>& basis_b, ad::Value h);

// Full stack: x (N, M, t) -> spatial embedding (N, M, e).
ad::Value forward(ad::Tape& tape, const model::ParamLeaves& params, const MdgcnConfig& cfg,
                  std::size_t m, const std::vector<ad::Value>& basis_f,
                  const std::vector<ad::Value>& basis_b, ad::Value x);

}  // namespace uqst::mdgcn
