#include "uqst/itcn.hpp"

#include <stdexcept>
#include <string>

namespace uqst::itcn {

namespace {

std::string pname(std::size_t b, const char* part) {
    return "itcn.b" + std::to_string(b) + "." + part;
}

ad::Value dropout(ad::Tape& tape, ad::Value x, double p, std::mt19937_64* rng) {
    if (!rng || p <= 0.0) return x;
    NDArray mask(x.shape());
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double keep = 1.0 - p;
    for (std::size_t i = 0; i < mask.size(); ++i)
        mask[i] = (u(*rng) < keep) ? 1.0 / keep : 0.0;  // inverted dropout
    return ad::mul(x, tape.leaf(std::move(mask)));
}

}  // namespace

void register_params(model::ParamStore& store, const ItcnConfig& cfg, std::size_t m) {
    if (cfg.kernel < 1) throw std::invalid_argument("itcn: kernel must be >= 1");
    if (cfg.dropout < 0 || cfg.dropout >= 1)
        throw std::invalid_argument("itcn: dropout must be in [0,1)");
    std::size_t groups = cfg.cross_vars ? 1 : m;
    std::size_t c = m * cfg.channels_per_var;
    std::size_t c_in = m;
    for (std::size_t b = 0; b < cfg.blocks; ++b) {
        store.add(pname(b, "c1.v"), {c, c_in / groups, cfg.kernel}, model::Init::Glorot);
        store.add(pname(b, "c1.g"), {c}, model::Init::One);
        store.add(pname(b, "c1.bias"), {c}, model::Init::Zero);
        store.add(pname(b, "c2.v"), {c, c / groups, 1}, model::Init::Glorot);
        store.add(pname(b, "c2.g"), {c}, model::Init::One);
        store.add(pname(b, "c2.bias"), {c}, model::Init::Zero);
        if (c_in != c)
            store.add(pname(b, "res"), {c, c_in / groups, 1}, model::Init::Glorot);
        c_in = c;
    }
    store.add("itcn.proj.w", {cfg.channels_per_var, cfg.embed_dim}, model::Init::Glorot);
    store.add("itcn.proj.bias", {cfg.embed_dim}, model::Init::Zero);
}

ad::Value block(ad::Tape& tape, const model::ParamLeaves& params, const ItcnConfig& cfg,
                std::size_t b, std::size_t m, ad::Value h, std::mt19937_64* rng) {
    using namespace ad;
    std::size_t groups = cfg.cross_vars ? 1 : m;
    std::size_t d = cfg.dilation(b);

    Value w1 = weight_norm(params.at(pname(b, "c1.v")), params.at(pname(b, "c1.g")));
    Value a1 = add_channel_bias(dilated_causal_conv(h, w1, d, groups),
                                params.at(pname(b, "c1.bias")));
    Value h1 = dropout(tape, relu(a1), cfg.dropout, rng);

    Value w2 = weight_norm(params.at(pname(b, "c2.v")), params.at(pname(b, "c2.g")));
    Value a2 = add_channel_bias(dilated_causal_conv(h1, w2, 1, groups),
                                params.at(pname(b, "c2.bias")));
    Value h2 = dropout(tape, relu(a2), cfg.dropout, rng);

    Value res = h;
    if (params.by_name.count(pname(b, "res")))
        res = dilated_causal_conv(h, params.at(pname(b, "res")), 1, groups);
    return add(h2, res);
}

ad::Value forward(ad::Tape& tape, const model::ParamLeaves& params, const ItcnConfig& cfg,
                  std::size_t m, ad::Value x, std::mt19937_64* rng) {
    using namespace ad;
    const std::size_t n = x.shape()[0], t = x.shape()[2];
    if (x.shape()[1] != m)
        throw std::invalid_argument("itcn::forward: input shape " + x.data().shape_str());

    Value h = x;  // (N, M, t): one channel per phenomenon
    for (std::size_t b = 0; b < cfg.blocks; ++b) h = block(tape, params, cfg, b, m, h, rng);

    std::size_t c = m * cfg.channels_per_var;
    Value summary;
    if (cfg.mean_pool) {
        summary = scale(sum_axis(h, 2), 1.0 / double(t));
    } else {
        summary = reshape(slice(h, 2, t - 1, 1), {n, c});
    }
    // Channels are grouped per phenomenon; split back before projecting.
    Value grouped = reshape(summary, {n * m, cfg.channels_per_var});
    Value proj = add_last_axis(matmul(grouped, params.at("itcn.proj.w")),
                               params.at("itcn.proj.bias"));
    return reshape(proj, {n, m, cfg.embed_dim});
}

ad::Value fuse_embeddings(ad::Value e_s, ad::Value e_t) { return ad::mul(e_s, e_t); }

}  // namespace uqst::itcn
