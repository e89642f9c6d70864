#include "uqst/mpp.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace uqst::mpp {

namespace {

constexpr double kNbRFloor = 1e-3;
constexpr double kNbPMargin = 1e-4;

std::size_t half_len(std::size_t m) { return m * (m + 1) / 2; }

std::string hname(const char* head, const char* part) {
    return std::string("mpp.") + head + "." + part;
}

void register_head(model::ParamStore& store, const char* head, const MppConfig& cfg,
                   std::size_t m, std::size_t embed_dim, std::size_t out_dim) {
    store.add(hname(head, "conv"), {cfg.conv_channels, m, 3}, model::Init::Glorot);
    store.add(hname(head, "conv.bias"), {cfg.conv_channels}, model::Init::Zero);
    store.add(hname(head, "w1"), {cfg.conv_channels * embed_dim, cfg.hidden},
              model::Init::Glorot);
    store.add(hname(head, "b1"), {cfg.hidden}, model::Init::Zero);
    store.add(hname(head, "ln.g"), {cfg.hidden}, model::Init::One);
    store.add(hname(head, "ln.b"), {cfg.hidden}, model::Init::Zero);
    store.add(hname(head, "w2"), {cfg.hidden, out_dim}, model::Init::Glorot);
    store.add(hname(head, "b2"), {out_dim}, model::Init::Zero);
}

// Output block: temporal conv, two linear layers, a normalization layer,
// ReLU. e: (N, M, embed_dim) -> (N, out_dim).
ad::Value head_forward(const model::ParamLeaves& params, const char* head, std::size_t n,
                       std::size_t embed_dim, const MppConfig& cfg, ad::Value e) {
    using namespace ad;
    Value conv = add_channel_bias(dilated_causal_conv(e, params.at(hname(head, "conv")), 1, 1),
                                  params.at(hname(head, "conv.bias")));
    Value flat = reshape(relu(conv), {n, cfg.conv_channels * embed_dim});
    Value h1 = add_last_axis(matmul(flat, params.at(hname(head, "w1"))),
                             params.at(hname(head, "b1")));
    Value hn = relu(layer_norm_rows(h1, params.at(hname(head, "ln.g")),
                                    params.at(hname(head, "ln.b"))));
    return add_last_axis(matmul(hn, params.at(hname(head, "w2"))),
                         params.at(hname(head, "b2")));
}

}  // namespace

ad::Value clamp_to_pd(ad::Value w, double v_min) {
    auto [vals, vecs] = ad::eig_sym(w);
    ad::Value lam = ad::clamp_min(vals, v_min);
    return ad::matmul(ad::scale_columns(vecs, lam), ad::transpose(vecs));
}

void register_params(model::ParamStore& store, const MppConfig& cfg, std::size_t m,
                     std::size_t embed_dim) {
    if (cfg.v_min < 1e-6 || cfg.v_min > 1e-2)
        throw std::invalid_argument("mpp: v_min outside [1e-6, 1e-2]");
    register_head(store, "mu", cfg, m, embed_dim, cfg.horizon * m);
    if (cfg.kind != DistKind::Deterministic) {
        std::size_t zdim = cfg.diagonal ? m : half_len(m);
        register_head(store, "z", cfg, m, embed_dim, cfg.horizon * zdim);
    }
    if (cfg.kind == DistKind::NegBinom)
        register_head(store, "nb", cfg, m, embed_dim, cfg.horizon * 2 * m);
}

// Start the covariance head at a comfortably PD matrix so the eigenvalue
// clamp does not zero all gradients at initialization.
void init_z_bias(model::ParamStore& store, const MppConfig& cfg, std::size_t m) {
    if (cfg.kind == DistKind::Deterministic) return;
    NDArray& b2 = store.at(hname("z", "b2"));
    for (std::size_t tau = 0; tau < cfg.horizon; ++tau) {
        if (cfg.diagonal) {
            for (std::size_t i = 0; i < m; ++i) b2[tau * m + i] = 0.2;
        } else {
            std::size_t off = tau * half_len(m), idx = 0;
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = i; j < m; ++j) {
                    if (i == j) b2[off + idx] = 0.2;
                    ++idx;
                }
        }
    }
}

MppOutputs forward(ad::Tape& tape, const model::ParamLeaves& params, const MppConfig& cfg,
                   std::size_t m, ad::Value e) {
    using namespace ad;
    const std::size_t n = e.shape()[0], embed_dim = e.shape()[2];
    const std::size_t horizon = cfg.horizon;
    MppOutputs out;
    out.horizon = horizon;
    out.n = n;
    out.m = m;
    out.kind = cfg.kind;

    Value mu_flat = head_forward(params, "mu", n, embed_dim, cfg, e);  // (N, T*M)
    std::vector<Value> mu_steps;
    for (std::size_t tau = 0; tau < horizon; ++tau)
        mu_steps.push_back(reshape(slice(mu_flat, 1, tau * m, m), {1, n, m}));
    out.mu = concat(mu_steps, 0);

    if (cfg.kind == DistKind::Deterministic) {
        (void)tape;
        return out;
    }

    std::size_t zdim = cfg.diagonal ? m : half_len(m);
    Value z_flat = head_forward(params, "z", n, embed_dim, cfg, e);  // (N, T*zdim)
    for (std::size_t tau = 0; tau < horizon; ++tau) {
        Value z_tau = slice(z_flat, 1, tau * zdim, zdim);
        for (std::size_t reg = 0; reg < n; ++reg) {
            Value z = reshape(slice(z_tau, 0, reg, 1), {zdim});
            Value sig;
            if (cfg.diagonal) {
                sig = make_diag(clamp_min(z, cfg.v_min));
            } else {
                sig = clamp_to_pd(sym_from_upper(z, m), cfg.v_min);
            }
            out.sigma.push_back(sig);
        }
    }

    if (cfg.kind == DistKind::NegBinom) {
        Value nb_flat = head_forward(params, "nb", n, embed_dim, cfg, e);  // (N, T*2M)
        for (std::size_t tau = 0; tau < horizon; ++tau) {
            Value raw = slice(nb_flat, 1, tau * 2 * m, 2 * m);
            for (std::size_t reg = 0; reg < n; ++reg) {
                Value row = reshape(slice(raw, 0, reg, 1), {2 * m});
                Value r = add_scalar(softplus(slice(row, 0, 0, m)), kNbRFloor);
                Value p = add_scalar(scale(sigmoid(slice(row, 0, m, m)), 1.0 - 2 * kNbPMargin),
                                     kNbPMargin);
                out.nb_r.push_back(r);
                out.nb_p.push_back(p);
            }
        }
    }
    return out;
}

ad::Value loss(ad::Tape& tape, const MppOutputs& out, const NDArray& target) {
    using namespace ad;
    const std::size_t horizon = out.horizon, n = out.n, m = out.m;
    if (target.rank() != 3 || target.dim(0) != horizon || target.dim(1) != n ||
        target.dim(2) != m)
        throw std::invalid_argument("mpp::loss: target shape " + target.shape_str());

    if (out.kind == DistKind::Deterministic) {
        Value tgt = tape.leaf(target);
        return mean_all(abs_val(sub(out.mu, tgt)));
    }

    Value total;
    bool first = true;
    for (std::size_t tau = 0; tau < horizon; ++tau)
        for (std::size_t reg = 0; reg < n; ++reg) {
            std::size_t idx = tau * n + reg;
            NDArray x({m});
            for (std::size_t j = 0; j < m; ++j) x[j] = target.at3(tau, reg, j);
            Value mu_vec = reshape(slice(slice(out.mu, 0, tau, 1), 1, reg, 1), {m});
            Value term = gaussian_nll(x, mu_vec, out.sigma[idx]);
            if (out.kind == DistKind::Laplace) {
                // Appendix form carries the full Gaussian normalizer.
                term = add_scalar(term, 0.5 * double(m) * std::log(2.0 * M_PI));
            } else if (out.kind == DistKind::NegBinom) {
                term = add(term, negbinom_count_terms(x, out.nb_r[idx], out.nb_p[idx]));
            }
            total = first ? term : add(total, term);
            first = false;
        }
    return scale(total, 1.0 / double(horizon * n));
}

DistForecast extract(const MppOutputs& out) {
    DistForecast f;
    f.horizon = out.horizon;
    f.n = out.n;
    f.m = out.m;
    f.kind = out.kind;
    f.mu = out.mu.data();
    const std::size_t m = out.m;
    if (out.kind != DistKind::Deterministic) {
        f.sigma = NDArray({f.horizon, f.n, m, m});
        for (std::size_t idx = 0; idx < out.sigma.size(); ++idx) {
            const NDArray& s = out.sigma[idx].data();
            for (std::size_t i = 0; i < m * m; ++i) f.sigma[idx * m * m + i] = s[i];
        }
    }
    if (out.kind == DistKind::NegBinom) {
        f.nb_r = NDArray({f.horizon, f.n, m});
        f.nb_p = NDArray({f.horizon, f.n, m});
        for (std::size_t idx = 0; idx < out.nb_r.size(); ++idx)
            for (std::size_t j = 0; j < m; ++j) {
                f.nb_r[idx * m + j] = out.nb_r[idx].data()[j];
                f.nb_p[idx * m + j] = out.nb_p[idx].data()[j];
            }
    }
    return f;
}

NDArray DistForecast::sigma_at(std::size_t tau, std::size_t region) const {
    NDArray s({m, m});
    std::size_t base = ((tau * n) + region) * m * m;
    for (std::size_t i = 0; i < m * m; ++i) s[i] = sigma[base + i];
    return s;
}

std::vector<Interval> prediction_interval(const DistForecast& f, double z) {
    if (f.kind == DistKind::Deterministic)
        throw std::invalid_argument("prediction_interval: needs a distributional forecast");
    std::vector<Interval> out;
    out.reserve(f.horizon * f.n * f.m);
    for (std::size_t tau = 0; tau < f.horizon; ++tau)
        for (std::size_t reg = 0; reg < f.n; ++reg)
            for (std::size_t j = 0; j < f.m; ++j) {
                double var = f.sigma[(((tau * f.n) + reg) * f.m + j) * f.m + j];
                double sd = std::sqrt(std::max(var, 0.0));
                double mu = f.mu[(tau * f.n + reg) * f.m + j];
                out.push_back({mu - z * sd, mu + z * sd});
            }
    return out;
}

}  // namespace uqst::mpp
