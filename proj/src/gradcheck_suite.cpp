#include "uqst/gradcheck_suite.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <random>

#include "uqst/autodiff.hpp"
#include "uqst/graph.hpp"
#include "uqst/itcn.hpp"
#include "uqst/mdgcn.hpp"
#include "uqst/mpp.hpp"
#include "uqst/params.hpp"

namespace uqst::gradcheck {

namespace {

using ad::Value;

NDArray randn(std::mt19937_64& rng, std::vector<std::size_t> shape, double scale = 1.0) {
    NDArray a(std::move(shape));
    std::normal_distribution<double> d(0.0, scale);
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = d(rng);
    return a;
}

// Keeps relu/abs/clamp kinks at least |margin| away from the finite
// difference step.
NDArray randn_away(std::mt19937_64& rng, std::vector<std::size_t> shape, double margin) {
    NDArray a = randn(rng, std::move(shape));
    for (std::size_t i = 0; i < a.size(); ++i)
        if (std::abs(a[i]) < margin) a[i] = a[i] < 0 ? -margin : margin;
    return a;
}

// Random small transition matrix (row-stochastic) for basis construction.
NDArray rand_transition(std::mt19937_64& rng, std::size_t n) {
    NDArray w({n, n});
    std::uniform_real_distribution<double> u(0.1, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        double row = 0;
        for (std::size_t j = 0; j < n; ++j) {
            w.at2(i, j) = u(rng);
            row += w.at2(i, j);
        }
        for (std::size_t j = 0; j < n; ++j) w.at2(i, j) /= row;
    }
    return w;
}

struct Check {
    std::string op;
    std::function<double(std::mt19937_64&)> run;  // returns max rel err for one instance
};

double dot_scalar_check(const ad::ScalarFn& f, const std::vector<NDArray>& inputs) {
    auto res = ad::grad_check(f, inputs);
    return res.nan_seen ? std::numeric_limits<double>::infinity() : res.max_rel_err;
}

// Contract a tensor Value against a fixed random array so every output
// coordinate feeds the scalar.
Value contract(ad::Tape& t, Value v, const NDArray& c) {
    return ad::sum_all(ad::mul(v, t.leaf(c)));
}

std::vector<Check> build_checks() {
    std::vector<Check> checks;

    auto unary = [](const char* name, Value (*op)(Value), double margin) {
        return Check{name, [op, margin](std::mt19937_64& rng) {
                         NDArray x = margin > 0 ? randn_away(rng, {3, 4}, margin)
                                                : randn(rng, {3, 4});
                         NDArray c = randn(rng, {3, 4});
                         return dot_scalar_check(
                             [&](ad::Tape& t, std::vector<Value>& in) {
                                 return contract(t, op(in[0]), c);
                             },
                             {x});
                     }};
    };

    checks.push_back(unary("relu", ad::relu, 1e-3));
    checks.push_back(unary("abs", ad::abs_val, 1e-3));
    checks.push_back(unary("sigmoid", ad::sigmoid, 0));
    checks.push_back(unary("softplus", ad::softplus, 0));

    checks.push_back({"log", [](std::mt19937_64& rng) {
                          NDArray x = randn(rng, {3, 4});
                          for (std::size_t i = 0; i < x.size(); ++i)
                              x[i] = 0.5 + std::abs(x[i]);
                          NDArray c = randn(rng, {3, 4});
                          return dot_scalar_check(
                              [&](ad::Tape& t, std::vector<Value>& in) {
                                  return contract(t, ad::log_val(in[0]), c);
                              },
                              {x});
                      }});

    checks.push_back({"clamp_min", [](std::mt19937_64& rng) {
                          NDArray x = randn(rng, {3, 4});
                          for (std::size_t i = 0; i < x.size(); ++i)
                              if (std::abs(x[i] - 0.5) < 1e-3) x[i] += 2e-3;
                          NDArray c = randn(rng, {3, 4});
                          return dot_scalar_check(
                              [&](ad::Tape& t, std::vector<Value>& in) {
                                  return contract(t, ad::clamp_min(in[0], 0.5), c);
                              },
                              {x});
                      }});

    checks.push_back({"matmul", [](std::mt19937_64& rng) {
                          NDArray a = randn(rng, {3, 4}), b = randn(rng, {4, 2});
                          NDArray c = randn(rng, {3, 2});
                          return dot_scalar_check(
                              [&](ad::Tape& t, std::vector<Value>& in) {
                                  return contract(t, ad::matmul(in[0], in[1]), c);
                              },
                              {a, b});
                      }});

    checks.push_back({"mul_add", [](std::mt19937_64& rng) {
                          NDArray a = randn(rng, {2, 5}), b = randn(rng, {2, 5});
                          NDArray c = randn(rng, {2, 5});
                          return dot_scalar_check(
                              [&](ad::Tape& t, std::vector<Value>& in) {
                                  Value v = ad::add(ad::mul(in[0], in[1]),
                                                    ad::sub(in[0], in[1]));
                                  return contract(t, v, c);
                              },
                              {a, b});
                      }});

    checks.push_back({"layer_norm", [](std::mt19937_64& rng) {
                          NDArray x = randn(rng, {3, 5});
                          NDArray g = randn(rng, {5}), b = randn(rng, {5});
                          NDArray c = randn(rng, {3, 5});
                          return dot_scalar_check(
                              [&](ad::Tape& t, std::vector<Value>& in) {
                                  return contract(
                                      t, ad::layer_norm_rows(in[0], in[1], in[2]), c);
                              },
                              {x, g, b});
                      }});

    checks.push_back({"weight_norm", [](std::mt19937_64& rng) {
                          NDArray v = randn(rng, {3, 2, 2});
                          NDArray g = randn(rng, {3});
                          NDArray c = randn(rng, {3, 2, 2});
                          return dot_scalar_check(
                              [&](ad::Tape& t, std::vector<Value>& in) {
                                  return contract(t, ad::weight_norm(in[0], in[1]), c);
                              },
                              {v, g});
                      }});

    checks.push_back({"dilated_conv", [](std::mt19937_64& rng) {
                          NDArray x = randn(rng, {2, 3, 6});
                          NDArray w = randn(rng, {4, 3, 2});
                          NDArray c = randn(rng, {2, 4, 6});
                          return dot_scalar_check(
                              [&](ad::Tape& t, std::vector<Value>& in) {
                                  return contract(
                                      t, ad::dilated_causal_conv(in[0], in[1], 2), c);
                              },
                              {x, w});
                      }});

    checks.push_back({"dilated_conv_grouped", [](std::mt19937_64& rng) {
                          NDArray x = randn(rng, {1, 4, 5});
                          NDArray w = randn(rng, {4, 2, 2});
                          NDArray c = randn(rng, {1, 4, 5});
                          return dot_scalar_check(
                              [&](ad::Tape& t, std::vector<Value>& in) {
                                  return contract(
                                      t, ad::dilated_causal_conv(in[0], in[1], 1, 2), c);
                              },
                              {x, w});
                      }});

    checks.push_back({"sym_from_upper", [](std::mt19937_64& rng) {
                          NDArray z = randn(rng, {6});
                          NDArray c = randn(rng, {3, 3});
                          return dot_scalar_check(
                              [&](ad::Tape& t, std::vector<Value>& in) {
                                  return contract(t, ad::sym_from_upper(in[0], 3), c);
                              },
                              {z});
                      }});

    checks.push_back({"eig_sym", [](std::mt19937_64& rng) {
                          NDArray z = randn(rng, {6});
                          for (std::size_t i : {0u, 3u, 5u})
                              z[i] += 2.0 * double(i + 1);  // spread the spectrum
                          NDArray cl = randn(rng, {3});
                          NDArray cv = randn(rng, {3, 3});
                          return dot_scalar_check(
                              [&](ad::Tape& t, std::vector<Value>& in) {
                                  auto [lam, vec] =
                                      ad::eig_sym(ad::sym_from_upper(in[0], 3));
                                  return ad::add(contract(t, lam, cl),
                                                 contract(t, vec, cv));
                              },
                              {z});
                      }});

    checks.push_back({"clamp_to_pd", [](std::mt19937_64& rng) {
                          NDArray z = randn(rng, {6});
                          for (std::size_t i : {0u, 3u, 5u}) z[i] += 2.0 * double(i + 1);
                          NDArray c = randn(rng, {3, 3});
                          return dot_scalar_check(
                              [&](ad::Tape& t, std::vector<Value>& in) {
                                  return contract(
                                      t,
                                      mpp::clamp_to_pd(ad::sym_from_upper(in[0], 3), 1e-4),
                                      c);
                              },
                              {z});
                      }});

    checks.push_back({"gaussian_nll_chain", [](std::mt19937_64& rng) {
                          NDArray mu = randn(rng, {3});
                          NDArray z = randn(rng, {6});
                          for (std::size_t i : {0u, 3u, 5u}) z[i] += 2.0 * double(i + 1);
                          NDArray x = randn(rng, {3});
                          return dot_scalar_check(
                              [&](ad::Tape&, std::vector<Value>& in) {
                                  Value sig = mpp::clamp_to_pd(
                                      ad::sym_from_upper(in[1], 3), 1e-4);
                                  return ad::gaussian_nll(x, in[0], sig);
                              },
                              {mu, z});
                      }});

    checks.push_back({"negbinom_terms", [](std::mt19937_64& rng) {
                          NDArray x({3});
                          std::uniform_int_distribution<int> cnt(0, 9);
                          for (std::size_t i = 0; i < 3; ++i) x[i] = cnt(rng);
                          NDArray r = randn(rng, {3}), p = randn(rng, {3});
                          for (std::size_t i = 0; i < 3; ++i) {
                              r[i] = 0.5 + std::abs(r[i]);
                              p[i] = 0.1 + 0.8 / (1.0 + std::exp(-p[i]));
                          }
                          return dot_scalar_check(
                              [&](ad::Tape&, std::vector<Value>& in) {
                                  return ad::negbinom_count_terms(x, in[0], in[1]);
                              },
                              {r, p});
                      }});

    // Module stacks: parameters and the raw window are the checked inputs.
    auto store_check = [](model::ParamStore& store, const NDArray& x,
                          std::function<Value(ad::Tape&, const model::ParamLeaves&, Value)>
                              fwd,
                          std::mt19937_64& rng) {
        std::vector<NDArray> inputs;
        for (const auto& e : store.entries()) inputs.push_back(e.value);
        inputs.push_back(x);
        NDArray c;
        bool c_set = false;
        auto fn = [&](ad::Tape& t, std::vector<Value>& in) {
            model::ParamLeaves leaves;
            for (std::size_t i = 0; i + 1 < in.size(); ++i) {
                leaves.by_name[store.entries()[i].name] = i;
                leaves.values.push_back(in[i]);
            }
            Value out = fwd(t, leaves, in.back());
            if (!c_set) {
                c = NDArray(out.shape());
                std::normal_distribution<double> d;
                for (std::size_t i = 0; i < c.size(); ++i) c[i] = d(rng);
                c_set = true;
            }
            return ad::sum_all(ad::mul(out, t.leaf(c)));
        };
        return dot_scalar_check(fn, inputs);
    };

    checks.push_back({"mdgcn_forward", [store_check](std::mt19937_64& rng) {
                          const std::size_t n = 3, m = 2, t_in = 4;
                          mdgcn::MdgcnConfig cfg;
                          cfg.cheb_order = 2;
                          cfg.dims = {t_in, 3, 2};
                          model::ParamStore store;
                          mdgcn::register_params(store, cfg, m);
                          store.initialize(rng());
                          NDArray wt = rand_transition(rng, n);
                          auto bf = graph::chebyshev_basis(wt, cfg.cheb_order);
                          auto bb = graph::chebyshev_basis(wt, cfg.cheb_order);
                          NDArray x = randn(rng, {n, m, t_in});
                          return store_check(
                              store, x,
                              [&](ad::Tape& t, const model::ParamLeaves& leaves, Value xv) {
                                  std::vector<Value> vf, vb;
                                  for (std::size_t k = 1; k <= cfg.cheb_order; ++k) {
                                      vf.push_back(t.leaf(bf.t[k]));
                                      vb.push_back(t.leaf(bb.t[k]));
                                  }
                                  return mdgcn::forward(t, leaves, cfg, m, vf, vb, xv);
                              },
                              rng);
                      }});

    checks.push_back({"itcn_forward", [store_check](std::mt19937_64& rng) {
                          const std::size_t n = 2, m = 2, t_in = 5;
                          itcn::ItcnConfig cfg;
                          cfg.blocks = 2;
                          cfg.kernel = 2;
                          cfg.channels_per_var = 3;
                          cfg.embed_dim = 2;
                          cfg.dropout = 0.0;
                          model::ParamStore store;
                          itcn::register_params(store, cfg, m);
                          store.initialize(rng());
                          NDArray x = randn(rng, {n, m, t_in});
                          return store_check(
                              store, x,
                              [&](ad::Tape& t, const model::ParamLeaves& leaves, Value xv) {
                                  return itcn::forward(t, leaves, cfg, m, xv, nullptr);
                              },
                              rng);
                      }});

    auto mpp_check = [](mpp::DistKind kind) {
        return [kind](std::mt19937_64& rng) {
            const std::size_t n = 2, m = 2, e_dim = 3;
            mpp::MppConfig cfg;
            cfg.kind = kind;
            cfg.conv_channels = 2;
            cfg.hidden = 4;
            cfg.horizon = 1;
            model::ParamStore store;
            mpp::register_params(store, cfg, m, e_dim);
            store.initialize(rng());
            mpp::init_z_bias(store, cfg, m);
            NDArray e = randn(rng, {n, m, e_dim});
            NDArray target = randn(rng, {1, n, m});
            if (kind == mpp::DistKind::NegBinom) {
                std::uniform_int_distribution<int> cnt(0, 6);
                for (std::size_t i = 0; i < target.size(); ++i) target[i] = cnt(rng);
            }
            std::vector<NDArray> inputs;
            for (const auto& ent : store.entries()) inputs.push_back(ent.value);
            inputs.push_back(e);
            auto fn = [&](ad::Tape& t, std::vector<Value>& in) {
                model::ParamLeaves leaves;
                for (std::size_t i = 0; i + 1 < in.size(); ++i) {
                    leaves.by_name[store.entries()[i].name] = i;
                    leaves.values.push_back(in[i]);
                }
                auto out = mpp::forward(t, leaves, cfg, m, in.back());
                return mpp::loss(t, out, target);
            };
            return dot_scalar_check(fn, inputs);
        };
    };
    checks.push_back({"mpp_gaussian", mpp_check(mpp::DistKind::Gaussian)});
    checks.push_back({"mpp_laplace", mpp_check(mpp::DistKind::Laplace)});
    checks.push_back({"mpp_negbinom", mpp_check(mpp::DistKind::NegBinom)});

    return checks;
}

}  // namespace

std::vector<CheckRow> run_suite(double tol, std::size_t instances) {
    std::vector<CheckRow> rows;
    for (const auto& chk : build_checks()) {
        CheckRow row;
        row.op = chk.op;
        for (std::size_t i = 0; i < instances; ++i) {
            // Kinks (relu/clamp within h of an activation) are measure-zero;
            // reseed the instance when one is hit. Real gradient bugs fail
            // every reseed.
            double err = 0;
            for (std::size_t attempt = 0; attempt < 5; ++attempt) {
                std::mt19937_64 rng(0x5EEDBA5Eu + 7919 * i + 104729 * attempt);
                err = chk.run(rng);
                if (err <= tol) break;
            }
            row.max_rel_err = std::max(row.max_rel_err, err);
        }
        row.pass = row.max_rel_err <= tol;
        rows.push_back(row);
    }
    return rows;
}

}  // namespace uqst::gradcheck
