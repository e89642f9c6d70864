#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "uqst/graph.hpp"
#include "uqst/itcn.hpp"
#include "uqst/mdgcn.hpp"
#include "uqst/mpp.hpp"
#include "uqst/params.hpp"

namespace uqst::model {

enum class Variant { Full, NoMDGCN, NoITCN, NoMPP, IndepUnivariate };

Variant variant_from_string(const std::string& s);
std::string to_string(Variant v);
mpp::DistKind dist_from_string(const std::string& s);
std::string to_string(mpp::DistKind k);

struct ModelConfig {
    std::size_t input_len = 12;
    std::size_t horizon = 1;
    std::size_t cheb_order = 2;
    std::vector<std::size_t> mdgcn_hidden = {16};
    std::size_t embed_dim = 8;
    std::size_t itcn_blocks = 2;
    std::size_t itcn_kernel = 2;
    std::size_t channels_per_var = 8;
    double dropout = 0.1;
    std::size_t mpp_conv_channels = 8;
    std::size_t mpp_hidden = 32;
    double v_min = 1e-4;
    Variant variant = Variant::Full;
    mpp::DistKind dist = mpp::DistKind::Gaussian;
    bool shared_theta = false;
    bool mean_pool_temporal = false;
};

// Full UQ prediction model: MDGCN spatial branch and ITCN temporal branch
// in parallel from the raw window, Hadamard fusion, MPP head.
class Model {
public:
    Model(ModelConfig cfg, std::size_t n, std::size_t m, graph::DiffusionOps ops,
          std::uint64_t init_seed);

    // Loss for one sample; dropout_rng null means eval mode.
    ad::Value sample_loss(ad::Tape& tape, const NDArray& input, const NDArray& target,
                          std::mt19937_64* dropout_rng, ParamLeaves* leaves_out = nullptr) const;

    mpp::DistForecast predict(const NDArray& input) const;

    const ModelConfig& config() const { return cfg_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    std::size_t n_regions() const { return n_; }
    std::size_t n_vars() const { return m_; }

private:
    mpp::MppOutputs forward(ad::Tape& tape, const ParamLeaves& leaves, const NDArray& input,
                            std::mt19937_64* dropout_rng) const;

    ModelConfig cfg_;
    std::size_t n_ = 0, m_ = 0;
    graph::DiffusionOps ops_;
    graph::ChebBasis basis_f_, basis_b_;
    mdgcn::MdgcnConfig mdgcn_cfg_;
    itcn::ItcnConfig itcn_cfg_;
    mpp::MppConfig mpp_cfg_;
    ParamStore params_;
};

}  // namespace uqst::model
