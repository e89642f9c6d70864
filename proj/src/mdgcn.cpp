#include "uqst/mdgcn.hpp"

#include <stdexcept>
#include <string>

namespace uqst::mdgcn {

namespace {

std::string theta_name(const MdgcnConfig& cfg, std::size_t l, char dir, std::size_t k,
                       std::size_t src, std::size_t tgt) {
    std::string base = "mdgcn.l" + std::to_string(l) + "." + dir + ".k" + std::to_string(k);
    if (cfg.shared_theta) return base;
    return base + ".m" + std::to_string(src) + "_" + std::to_string(tgt);
}

}  // namespace

void register_params(model::ParamStore& store, const MdgcnConfig& cfg, std::size_t m) {
    if (cfg.dims.size() < 2) throw std::invalid_argument("mdgcn: need at least one layer");
    if (cfg.cheb_order < 1) throw std::invalid_argument("mdgcn: cheb_order must be >= 1");
    for (std::size_t l = 0; l + 1 < cfg.dims.size(); ++l) {
        std::size_t f_in = cfg.dims[l], f_out = cfg.dims[l + 1];
        for (char dir : {'f', 'b'})
            for (std::size_t k = 1; k <= cfg.cheb_order; ++k) {
                if (cfg.shared_theta) {
                    store.add(theta_name(cfg, l, dir, k, 0, 0), {f_in, f_out},
                              model::Init::Glorot);
                } else {
                    for (std::size_t tgt = 0; tgt < m; ++tgt)
                        for (std::size_t src = 0; src < m; ++src) {
                            if (!cfg.cross_pairs && src != tgt) continue;
                            store.add(theta_name(cfg, l, dir, k, src, tgt), {f_in, f_out},
                                      model::Init::Glorot);
                        }
                }
            }
        store.add("mdgcn.l" + std::to_string(l) + ".bias", {f_out}, model::Init::Zero);
    }
}

ad::Value layer(ad::Tape& tape, const model::ParamLeaves& params, const MdgcnConfig& cfg,
                std::size_t l, std::size_t m, const std::vector<ad::Value>& basis_f,
                const std::vector<ad::Value>& basis_b, ad::Value h) {
    using namespace ad;
    const std::size_t n = h.shape()[0];
    const std::size_t f_in = cfg.dims[l], f_out = cfg.dims[l + 1];
    if (h.shape()[1] != m || h.shape()[2] != f_in)
        throw std::invalid_argument("mdgcn::layer: input shape " + h.data().shape_str());
    const bool last = (l + 2 == cfg.dims.size());

    // Per-source diffused states T_k W H_m are shared by all targets.
    std::vector<Value> h_src;
    for (std::size_t src = 0; src < m; ++src)
        h_src.push_back(reshape(slice(h, 1, src, 1), {n, f_in}));

    Value bias = params.at("mdgcn.l" + std::to_string(l) + ".bias");
    std::vector<Value> targets;
    for (std::size_t tgt = 0; tgt < m; ++tgt) {
        Value acc{};
        bool first = true;
        for (std::size_t src = 0; src < m; ++src) {
            if (!cfg.cross_pairs && src != tgt) continue;
            for (std::size_t k = 1; k <= cfg.cheb_order; ++k) {
                Value tf = matmul(basis_f[k - 1], h_src[src]);
                Value tb = matmul(basis_b[k - 1], h_src[src]);
                Value term = add(
                    matmul(tf, params.at(theta_name(cfg, l, 'f', k, src, tgt))),
                    matmul(tb, params.at(theta_name(cfg, l, 'b', k, src, tgt))));
                acc = first ? term : add(acc, term);
                first = false;
            }
        }
        Value out = add_last_axis(acc, bias);
        if (!last) out = relu(out);
        targets.push_back(reshape(out, {n, 1, f_out}));
    }
    (void)tape;
    return concat(targets, 1);
}

ad::Value forward(ad::Tape& tape, const model::ParamLeaves& params, const MdgcnConfig& cfg,
                  std::size_t m, const std::vector<ad::Value>& basis_f,
                  const std::vector<ad::Value>& basis_b, ad::Value x) {
    ad::Value h = x;
    for (std::size_t l = 0; l + 1 < cfg.dims.size(); ++l)
        h = layer(tape, params, cfg, l, m, basis_f, basis_b, h);
    return h;
}

}  // namespace uqst::mdgcn
