#include "uqst/model.hpp"

#include <stdexcept>

namespace uqst::model {

Variant variant_from_string(const std::string& s) {
    if (s == "full") return Variant::Full;
    if (s == "no-mdgcn") return Variant::NoMDGCN;
    if (s == "no-itcn") return Variant::NoITCN;
    if (s == "no-mpp") return Variant::NoMPP;
    if (s == "indep-univariate") return Variant::IndepUnivariate;
    throw std::invalid_argument("unknown variant: " + s);
}

std::string to_string(Variant v) {
    switch (v) {
        case Variant::Full: return "full";
        case Variant::NoMDGCN: return "no-mdgcn";
        case Variant::NoITCN: return "no-itcn";
        case Variant::NoMPP: return "no-mpp";
        case Variant::IndepUnivariate: return "indep-univariate";
    }
    return "?";
}

mpp::DistKind dist_from_string(const std::string& s) {
    if (s == "gaussian") return mpp::DistKind::Gaussian;
    if (s == "laplace") return mpp::DistKind::Laplace;
    if (s == "negbinom") return mpp::DistKind::NegBinom;
    throw std::invalid_argument("unknown distribution: " + s);
}

std::string to_string(mpp::DistKind k) {
    switch (k) {
        case mpp::DistKind::Gaussian: return "gaussian";
        case mpp::DistKind::Laplace: return "laplace";
        case mpp::DistKind::NegBinom: return "negbinom";
        case mpp::DistKind::Deterministic: return "deterministic";
    }
    return "?";
}

Model::Model(ModelConfig cfg, std::size_t n, std::size_t m, graph::DiffusionOps ops,
             std::uint64_t init_seed)
    : cfg_(cfg), n_(n), m_(m), ops_(std::move(ops)) {
    basis_f_ = graph::chebyshev_basis(ops_.forward, cfg_.cheb_order);
    basis_b_ = graph::chebyshev_basis(ops_.backward, cfg_.cheb_order);

    mdgcn_cfg_.cheb_order = cfg_.cheb_order;
    mdgcn_cfg_.dims.push_back(cfg_.input_len);
    for (auto h : cfg_.mdgcn_hidden) mdgcn_cfg_.dims.push_back(h);
    mdgcn_cfg_.dims.push_back(cfg_.embed_dim);
    mdgcn_cfg_.cross_pairs = (cfg_.variant != Variant::NoMDGCN);
    mdgcn_cfg_.shared_theta = cfg_.shared_theta;

    itcn_cfg_.blocks = cfg_.itcn_blocks;
    itcn_cfg_.kernel = cfg_.itcn_kernel;
    itcn_cfg_.channels_per_var = cfg_.channels_per_var;
    itcn_cfg_.dropout = cfg_.dropout;
    itcn_cfg_.embed_dim = cfg_.embed_dim;
    itcn_cfg_.cross_vars = (cfg_.variant != Variant::NoITCN);
    itcn_cfg_.mean_pool = cfg_.mean_pool_temporal;

    mpp_cfg_.v_min = cfg_.v_min;
    mpp_cfg_.conv_channels = cfg_.mpp_conv_channels;
    mpp_cfg_.hidden = cfg_.mpp_hidden;
    mpp_cfg_.horizon = cfg_.horizon;
    mpp_cfg_.diagonal = (cfg_.variant == Variant::IndepUnivariate);
    mpp_cfg_.kind =
        (cfg_.variant == Variant::NoMPP) ? mpp::DistKind::Deterministic : cfg_.dist;

    mdgcn::register_params(params_, mdgcn_cfg_, m_);
    itcn::register_params(params_, itcn_cfg_, m_);
    mpp::register_params(params_, mpp_cfg_, m_, cfg_.embed_dim);
    params_.initialize(init_seed);
    mpp::init_z_bias(params_, mpp_cfg_, m_);
}

mpp::MppOutputs Model::forward(ad::Tape& tape, const ParamLeaves& leaves, const NDArray& input,
                               std::mt19937_64* dropout_rng) const {
    if (input.rank() != 3 || input.dim(0) != n_ || input.dim(1) != m_ ||
        input.dim(2) != cfg_.input_len)
        throw std::invalid_argument("Model::forward: input shape " + input.shape_str());

    std::vector<ad::Value> bf, bb;
    for (std::size_t k = 1; k <= cfg_.cheb_order; ++k) {
        bf.push_back(tape.leaf(basis_f_.t[k]));
        bb.push_back(tape.leaf(basis_b_.t[k]));
    }
    ad::Value x = tape.leaf(input);
    ad::Value e_s = mdgcn::forward(tape, leaves, mdgcn_cfg_, m_, bf, bb, x);
    ad::Value e_t = itcn::forward(tape, leaves, itcn_cfg_, m_, x, dropout_rng);
    ad::Value fused = itcn::fuse_embeddings(e_s, e_t);
    return mpp::forward(tape, leaves, mpp_cfg_, m_, fused);
}

ad::Value Model::sample_loss(ad::Tape& tape, const NDArray& input, const NDArray& target,
                             std::mt19937_64* dropout_rng, ParamLeaves* leaves_out) const {
    ParamLeaves leaves = make_leaves(tape, params_);
    mpp::MppOutputs out = forward(tape, leaves, input, dropout_rng);
    if (leaves_out) *leaves_out = leaves;
    return mpp::loss(tape, out, target);
}

mpp::DistForecast Model::predict(const NDArray& input) const {
    ad::Tape tape;
    ParamLeaves leaves = make_leaves(tape, params_);
    mpp::MppOutputs out = forward(tape, leaves, input, nullptr);
    return mpp::extract(out);
}

}  // namespace uqst::model
