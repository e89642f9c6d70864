#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "uqst/checkpoint.hpp"
#include "uqst/dataset.hpp"
#include "uqst/evaluate.hpp"
#include "uqst/gradcheck_suite.hpp"
#include "uqst/graph.hpp"
#include "uqst/model.hpp"
#include "uqst/mpp.hpp"
#include "uqst/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace uqst;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string fmt6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

// Config file + flag overrides, flags winning; unknown keys rejected.
struct ConfigBinder {
    std::map<std::string, std::function<void(const json&)>> setters;

    template <typename T>
    void bind(CLI::Option* opt, const std::string& key, T& var) {
        setters[key] = [opt, &var](const json& v) {
            if (opt->count() == 0) var = v.get<T>();
        };
    }

    void apply(const std::string& path) const {
        if (path.empty()) return;
        std::ifstream f(path);
        if (!f) throw std::runtime_error("cannot open config file: " + path);
        json j;
        f >> j;
        if (!j.is_object()) throw UsageError("config file must hold a JSON object");
        for (const auto& [key, value] : j.items()) {
            auto it = setters.find(key);
            if (it == setters.end()) throw UsageError("unknown config key: " + key);
            it->second(value);
        }
    }
};

struct ModelFlags {
    model::ModelConfig cfg;
    std::string variant = "full";
    std::string dist = "gaussian";

    void add(CLI::App* cmd, ConfigBinder& bind) {
        auto* o1 = cmd->add_option("--variant", variant,
                                   "full | no-mdgcn | no-itcn | no-mpp | indep-univariate")
                       ->default_val("full");
        auto* o2 = cmd->add_option("--dist", dist, "gaussian | laplace | negbinom")
                       ->default_val("gaussian");
        auto* o3 = cmd->add_option("--input-len", cfg.input_len, "input window length")
                       ->default_val(12);
        auto* o4 = cmd->add_option("--horizon", cfg.horizon, "forecast steps")->default_val(1);
        auto* o5 = cmd->add_option("--cheb-order", cfg.cheb_order, "Chebyshev order K")
                       ->default_val(2);
        auto* o6 = cmd->add_option("--mdgcn-hidden", cfg.mdgcn_hidden,
                                   "hidden widths of the spatial stack");
        auto* o7 = cmd->add_option("--embed-dim", cfg.embed_dim, "fused embedding width")
                       ->default_val(8);
        auto* o8 = cmd->add_option("--itcn-blocks", cfg.itcn_blocks, "temporal residual blocks")
                       ->default_val(2);
        auto* o9 = cmd->add_option("--kernel", cfg.itcn_kernel, "temporal kernel size")
                       ->default_val(2);
        auto* o10 = cmd->add_option("--channels-per-var", cfg.channels_per_var,
                                    "temporal channels per phenomenon")
                        ->default_val(8);
        auto* o11 = cmd->add_option("--dropout", cfg.dropout, "dropout rate")->default_val(0.1);
        auto* o12 = cmd->add_option("--mpp-conv-channels", cfg.mpp_conv_channels,
                                    "output-block conv channels")
                        ->default_val(8);
        auto* o13 = cmd->add_option("--mpp-hidden", cfg.mpp_hidden, "output-block hidden width")
                        ->default_val(32);
        auto* o14 = cmd->add_option("--v-min", cfg.v_min, "covariance eigenvalue floor")
                        ->default_val(1e-4);
        auto* o15 = cmd->add_flag("--shared-theta", cfg.shared_theta,
                                  "share diffusion weights across phenomenon pairs");
        auto* o16 = cmd->add_flag("--mean-pool", cfg.mean_pool_temporal,
                                  "mean-pool the temporal summary instead of last step");
        bind.bind(o1, "variant", variant);
        bind.bind(o2, "dist", dist);
        bind.bind(o3, "input_len", cfg.input_len);
        bind.bind(o4, "horizon", cfg.horizon);
        bind.bind(o5, "cheb_order", cfg.cheb_order);
        bind.bind(o6, "mdgcn_hidden", cfg.mdgcn_hidden);
        bind.bind(o7, "embed_dim", cfg.embed_dim);
        bind.bind(o8, "itcn_blocks", cfg.itcn_blocks);
        bind.bind(o9, "itcn_kernel", cfg.itcn_kernel);
        bind.bind(o10, "channels_per_var", cfg.channels_per_var);
        bind.bind(o11, "dropout", cfg.dropout);
        bind.bind(o12, "mpp_conv_channels", cfg.mpp_conv_channels);
        bind.bind(o13, "mpp_hidden", cfg.mpp_hidden);
        bind.bind(o14, "v_min", cfg.v_min);
        bind.bind(o15, "shared_theta", cfg.shared_theta);
        bind.bind(o16, "mean_pool", cfg.mean_pool_temporal);
    }

    model::ModelConfig resolve() const {
        model::ModelConfig c = cfg;
        c.variant = model::variant_from_string(variant);
        c.dist = model::dist_from_string(dist);
        return c;
    }
};

struct TrainFlags {
    training::TrainConfig cfg;

    void add(CLI::App* cmd, ConfigBinder& bind) {
        auto* o1 = cmd->add_option("--batch-size", cfg.batch_size, "minibatch size")
                       ->default_val(64);
        auto* o2 = cmd->add_option("--lr", cfg.lr0, "initial learning rate")->default_val(1e-3);
        auto* o3 = cmd->add_option("--decay", cfg.decay, "learning-rate decay step")
                       ->default_val(5e-4);
        auto* o4 = cmd->add_option("--decay-every", cfg.decay_every, "epochs between decays")
                       ->default_val(10);
        auto* o5 = cmd->add_option("--lr-floor", cfg.lr_floor, "learning-rate floor")
                       ->default_val(1e-5);
        auto* o6 = cmd->add_flag("--multiplicative-decay", cfg.multiplicative_decay,
                                 "decay the rate multiplicatively instead of subtractively");
        auto* o7 = cmd->add_option("--patience", cfg.patience,
                                   "validation evals without improvement before stopping")
                       ->default_val(50);
        auto* o8 = cmd->add_option("--max-epochs", cfg.max_epochs, "epoch cap")->default_val(200);
        auto* o9 = cmd->add_option("--seed", cfg.seed, "run seed")->default_val(0);
        auto* o10 = cmd->add_option("--clip-norm", cfg.clip_norm,
                                    "gradient clip norm, 0 disables")
                        ->default_val(5.0);
        bind.bind(o1, "batch_size", cfg.batch_size);
        bind.bind(o2, "lr0", cfg.lr0);
        bind.bind(o3, "decay", cfg.decay);
        bind.bind(o4, "decay_every", cfg.decay_every);
        bind.bind(o5, "lr_floor", cfg.lr_floor);
        bind.bind(o6, "multiplicative_decay", cfg.multiplicative_decay);
        bind.bind(o7, "patience", cfg.patience);
        bind.bind(o8, "max_epochs", cfg.max_epochs);
        bind.bind(o9, "seed", cfg.seed);
        bind.bind(o10, "clip_norm", cfg.clip_norm);
    }
};

// Normalize with a previously fitted spec (the inverse of denormalize).
dataset::STTensor apply_spec(const dataset::STTensor& x, const dataset::MinMaxSpec& spec) {
    if (x.n() != spec.n || x.m() != spec.m)
        throw std::runtime_error("normalization spec does not match the dataset shape");
    dataset::STTensor out = x;
    for (std::size_t i = 0; i < x.n(); ++i)
        for (std::size_t j = 0; j < x.m(); ++j) {
            double lo = spec.min_vals.at2(i, j);
            double range = spec.max_vals.at2(i, j) - lo;
            for (std::size_t t = 0; t < x.length(); ++t) {
                double v = x.values.at3(i, j, t) + spec.offset[j];
                out.values.at3(i, j, t) = range > 0 ? (v - lo) / range : 0.0;
            }
        }
    out.norm_state = spec;
    return out;
}

mpp::DistForecast denormalize_forecast(const mpp::DistForecast& f,
                                       const dataset::MinMaxSpec& spec) {
    mpp::DistForecast out = f;
    for (std::size_t tau = 0; tau < f.horizon; ++tau)
        for (std::size_t reg = 0; reg < f.n; ++reg) {
            for (std::size_t v = 0; v < f.m; ++v) {
                double lo = spec.min_vals.at2(reg, v);
                double range = spec.max_vals.at2(reg, v) - lo;
                std::size_t idx = (tau * f.n + reg) * f.m + v;
                out.mu[idx] = f.mu[idx] * range + lo - spec.offset[v];
            }
            if (f.kind != mpp::DistKind::Deterministic)
                for (std::size_t i = 0; i < f.m; ++i)
                    for (std::size_t j = 0; j < f.m; ++j) {
                        double ri = spec.max_vals.at2(reg, i) - spec.min_vals.at2(reg, i);
                        double rj = spec.max_vals.at2(reg, j) - spec.min_vals.at2(reg, j);
                        std::size_t idx = (((tau * f.n) + reg) * f.m + i) * f.m + j;
                        out.sigma[idx] = f.sigma[idx] * ri * rj;
                    }
        }
    return out;
}

graph::RegionGraph seeded_graph(std::size_t n, double sigma2, double r, std::uint64_t seed) {
    std::mt19937_64 rng(seed ^ 0xA11CE5ULL);
    std::uniform_real_distribution<double> jitter(-0.2, 0.2);
    std::size_t side = 1;
    while (side * side < n) ++side;
    std::vector<std::array<double, 2>> centroids;
    for (std::size_t i = 0; i < n; ++i) {
        double cx = double(i % side) + jitter(rng);
        double cy = double(i / side) + jitter(rng);
        centroids.push_back({cx, cy});
    }
    return graph::build_adjacency(graph::distances_from_centroids(centroids), sigma2, r);
}

struct SplitNorm {
    dataset::SplitResult splits;
    dataset::MinMaxSpec spec;
};

SplitNorm load_split_normalize(const std::string& data, const std::string& meta) {
    dataset::STTensor x = dataset::load_csv(data, meta);
    std::size_t train_end = std::size_t(std::floor(0.8 * double(x.length())));
    auto [xn, spec] = dataset::minmax_normalize(x, 0, train_end);
    SplitNorm out;
    out.splits = dataset::chronological_split(xn);
    out.spec = spec;
    return out;
}

void check_compat(const checkpoint::Checkpoint& ck, const dataset::STTensor& x) {
    if (ck.n_regions != x.n() || ck.n_vars != x.m() || ck.variable_names != x.variable_names)
        throw UsageError("checkpoint and dataset disagree on regions/variables");
}

int cmd_generate(std::size_t regions, std::size_t variables, std::size_t length,
                 double cross_corr, double noise_scale, std::uint64_t seed, bool hetero,
                 bool lag_coupled, double sigma2, double r, const std::string& out_dir) {
    if (cross_corr < -1.0 || cross_corr > 1.0)
        throw UsageError("correlation must be in [-1,1]");
    fs::create_directories(out_dir);
    graph::RegionGraph g = seeded_graph(regions, sigma2, r, seed);
    dataset::SyntheticOptions opt;
    opt.cross_corr = cross_corr;
    opt.noise_scale = noise_scale;
    opt.seed = seed;
    opt.heteroscedastic = hetero;
    opt.lag_coupled = lag_coupled;
    dataset::SyntheticResult res = dataset::generate_synthetic(regions, variables, length, g, opt);
    fs::path dir(out_dir);
    dataset::save_csv(res.data, (dir / "data.csv").string(), (dir / "meta.json").string());
    dataset::save_truth_cov_json(res, (dir / "truth_cov.json").string());
    graph::save_graph_json(g, (dir / "graph.json").string());
    std::cout << "wrote " << (dir / "data.csv").string() << " (" << regions << " regions, "
              << variables << " variables, " << length << " steps)\n";
    return 0;
}

int cmd_graph(const std::string& in, double alpha, std::size_t kmax) {
    graph::RegionGraph g = graph::load_graph_json(in);
    auto ops = graph::diffusion_operators(g);
    std::cout << "regions: " << g.n_regions << "\n";
    std::cout << "edges: " << g.edge_count() << "\n";
    std::cout << "density: " << fmt6(g.density()) << "\n";
    std::cout << "k,truncation_mass\n";
    for (std::size_t k = 0; k <= kmax; ++k) {
        auto st = graph::stationary_distribution(ops.forward, alpha, k);
        std::cout << k << "," << fmt6(st.truncation_mass) << "\n";
    }
    return 0;
}

int cmd_train(const std::string& data, const std::string& meta, const std::string& graph_path,
              const std::string& out, const std::string& history, const ModelFlags& mf,
              const TrainFlags& tf) {
    graph::RegionGraph g = graph::load_graph_json(graph_path);
    SplitNorm sn = load_split_normalize(data, meta);
    model::ModelConfig mcfg = mf.resolve();
    model::Model m(mcfg, sn.splits.train.n(), sn.splits.train.m(),
                   graph::diffusion_operators(g), tf.cfg.seed);
    training::TrainResult res = training::train(m, tf.cfg, sn.splits.train, sn.splits.val);
    for (const auto& rec : res.history)
        std::cout << "epoch " << rec.epoch << " train " << fmt6(rec.train_loss) << " val "
                  << fmt6(rec.val_loss) << " lr " << fmt6(rec.lr) << "\n";
    training::save_history_csv(res, history);
    checkpoint::Checkpoint ck =
        checkpoint::from_model(m, tf.cfg, sn.spec, sn.splits.train.variable_names,
                               res.best_val_loss, res.best_epoch);
    checkpoint::save(ck, out);
    std::cout << "final val loss: " << fmt6(res.best_val_loss) << "\n";
    std::cout << "checkpoint: " << out << "\n";
    return 0;
}

int cmd_predict(const std::string& ckpt, const std::string& data, const std::string& meta,
                const std::string& graph_path, std::size_t index, const std::string& out) {
    checkpoint::Checkpoint ck = checkpoint::load(ckpt);
    graph::RegionGraph g = graph::load_graph_json(graph_path);
    dataset::STTensor x = dataset::load_csv(data, meta);
    check_compat(ck, x);
    model::Model m = checkpoint::to_model(ck, graph::diffusion_operators(g));
    dataset::STTensor xn = apply_spec(x, ck.norm_spec);
    auto splits = dataset::chronological_split(xn);
    auto ws = dataset::window(splits.test, ck.model_cfg.input_len, ck.model_cfg.horizon);
    if (index >= ws.samples.size())
        throw UsageError("window index " + std::to_string(index) + " out of range (" +
                         std::to_string(ws.samples.size()) + " test windows)");
    mpp::DistForecast f = m.predict(dataset::window_input(splits.test, ws, index));
    evaluate::save_forecast_json(denormalize_forecast(f, ck.norm_spec), out);
    std::cout << "forecast: " << out << "\n";
    return 0;
}

int cmd_evaluate(const std::string& ckpt, const std::string& data, const std::string& meta,
                 const std::string& graph_path, const std::string& out, bool selective,
                 const std::string& score, std::uint64_t score_seed,
                 const std::string& selective_out) {
    checkpoint::Checkpoint ck = checkpoint::load(ckpt);
    graph::RegionGraph g = graph::load_graph_json(graph_path);
    dataset::STTensor x = dataset::load_csv(data, meta);
    check_compat(ck, x);
    model::Model m = checkpoint::to_model(ck, graph::diffusion_operators(g));
    dataset::STTensor xn = apply_spec(x, ck.norm_spec);
    auto splits = dataset::chronological_split(xn);

    evaluate::EvalOptions opt;
    opt.selective = selective;
    opt.score = score;
    opt.random_score_seed = score_seed;
    evaluate::EvalResult res = evaluate::evaluate_model(m, splits.test, ck.norm_spec, opt);
    evaluate::save_report_json(res, out);
    if (selective && !selective_out.empty())
        evaluate::save_selective_csv(res.curve, selective_out);
    std::cout << "mae " << fmt6(res.report.mae) << " rmse " << fmt6(res.report.rmse) << " mape "
              << fmt6(res.report.mape) << " kl " << fmt6(res.report.kl) << " mpiw "
              << fmt6(res.report.mpiw) << " crps " << fmt6(res.report.crps) << "\n";
    std::cout << "report: " << out << "\n";
    return 0;
}

int cmd_ablate(const std::string& data, const std::string& meta, const std::string& graph_path,
               const std::string& out, const ModelFlags& mf, const TrainFlags& tf) {
    graph::RegionGraph g = graph::load_graph_json(graph_path);
    SplitNorm sn = load_split_normalize(data, meta);
    auto ops = graph::diffusion_operators(g);

    std::ofstream f(out);
    if (!f) throw std::runtime_error("cannot write table: " + out);
    f << "variant,mae,rmse,mape,kl,mpiw,crps\n";
    const char* variants[] = {"full", "no-mdgcn", "no-itcn", "no-mpp", "indep-univariate"};
    for (const char* v : variants) {
        model::ModelConfig mcfg = mf.resolve();
        mcfg.variant = model::variant_from_string(v);
        model::Model m(mcfg, sn.splits.train.n(), sn.splits.train.m(), ops, tf.cfg.seed);
        training::train(m, tf.cfg, sn.splits.train, sn.splits.val);
        evaluate::EvalResult res = evaluate::evaluate_model(m, sn.splits.test, sn.spec, {});
        f << v << "," << fmt6(res.report.mae) << "," << fmt6(res.report.rmse) << ","
          << fmt6(res.report.mape) << "," << fmt6(res.report.kl) << ","
          << fmt6(res.report.mpiw) << "," << fmt6(res.report.crps) << "\n";
        std::cout << v << ": mae " << fmt6(res.report.mae) << " crps "
                  << fmt6(res.report.crps) << "\n";
    }
    std::cout << "table: " << out << "\n";
    return 0;
}

int cmd_gradcheck(double tol, bool inject_fault) {
    auto rows = gradcheck::run_suite(tol);
    if (inject_fault) {
        // Test hook: a sum whose adjoint is deliberately doubled.
        auto res = ad::grad_check(
            [](ad::Tape& t, std::vector<ad::Value>& in) {
                std::size_t xi = in[0].id, oi = t.size();
                NDArray s({std::size_t{1}});
                for (std::size_t i = 0; i < in[0].data().size(); ++i) s[0] += in[0].data()[i];
                return t.make_node(std::move(s), [xi, oi](ad::Tape& tt) {
                    double go = tt.grad(oi)[0];
                    NDArray& gx = tt.grad(xi);
                    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += 2.0 * go;
                });
            },
            {NDArray::vector({1.0, -0.5, 2.0})});
        rows.push_back({"injected_fault", res.max_rel_err, res.max_rel_err <= tol});
    }
    std::cout << "op,max_rel_err,status\n";
    std::vector<std::string> failing;
    for (const auto& r : rows) {
        std::cout << r.op << "," << fmt6(r.max_rel_err) << "," << (r.pass ? "pass" : "fail")
                  << "\n";
        if (!r.pass) failing.push_back(r.op);
    }
    if (!failing.empty()) {
        std::cerr << "failing gradients:";
        for (const auto& op : failing) std::cerr << " " << op;
        std::cerr << "\n";
        return 1;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"desk-scale probabilistic spatiotemporal prediction on region graphs"};
    app.require_subcommand(1);

    // generate
    auto* gen = app.add_subcommand("generate", "write a synthetic dataset + region graph");
    std::size_t g_regions = 20, g_vars = 3, g_length = 600;
    double g_cross = 0.0, g_noise = 0.1, g_sigma2 = 1.0, g_r = 0.1;
    std::uint64_t g_seed = 0;
    bool g_hetero = false, g_lag = false;
    std::string g_out = "data";
    gen->add_option("--regions", g_regions, "region count")->default_val(20);
    gen->add_option("--variables", g_vars, "phenomenon count")->default_val(3);
    gen->add_option("--length", g_length, "time steps")->default_val(600);
    gen->add_option("--cross-corr", g_cross, "noise cross-correlation in [-1,1]")
        ->default_val(0.0);
    gen->add_option("--noise-scale", g_noise, "base noise std")->default_val(0.1);
    gen->add_option("--seed", g_seed, "generator seed")->default_val(0);
    gen->add_flag("--heteroscedastic", g_hetero, "cycle the noise scale over a 1:5 range");
    gen->add_flag("--lag-coupled", g_lag,
                  "variables >= 1 follow a lagged diffusion of variable 0");
    gen->add_option("--sigma2", g_sigma2, "adjacency kernel bandwidth")->default_val(1.0);
    gen->add_option("--r", g_r, "adjacency sparsity threshold")->default_val(0.1);
    gen->add_option("--out", g_out, "output directory")->required();

    // graph
    auto* gr = app.add_subcommand("graph", "inspect a region graph file");
    std::string gr_in;
    double gr_alpha = 0.1;
    std::size_t gr_kmax = 10;
    gr->add_option("--in", gr_in, "graph JSON")->required();
    gr->add_option("--alpha", gr_alpha, "restart probability")->default_val(0.1);
    gr->add_option("--kmax", gr_kmax, "truncation orders to tabulate")->default_val(10);

    // train
    auto* tr = app.add_subcommand("train", "train a model and write a checkpoint");
    std::string tr_data, tr_meta, tr_graph, tr_out = "checkpoint.bin",
                tr_history = "history.csv", tr_config;
    tr->add_option("--data", tr_data, "data CSV")->required();
    tr->add_option("--meta", tr_meta, "metadata JSON")->required();
    tr->add_option("--graph", tr_graph, "graph JSON")->required();
    tr->add_option("--out", tr_out, "checkpoint path")->default_val("checkpoint.bin");
    tr->add_option("--history", tr_history, "history CSV path")->default_val("history.csv");
    tr->add_option("--config", tr_config, "JSON config file; flags override its keys");
    ConfigBinder tr_bind;
    ModelFlags tr_mf;
    TrainFlags tr_tf;
    tr_mf.add(tr, tr_bind);
    tr_tf.add(tr, tr_bind);

    // predict
    auto* pr = app.add_subcommand("predict", "forecast one test window from a checkpoint");
    std::string pr_ckpt, pr_data, pr_meta, pr_graph, pr_out = "forecast.json";
    std::size_t pr_index = 0;
    pr->add_option("--checkpoint", pr_ckpt, "checkpoint path")->required();
    pr->add_option("--data", pr_data, "data CSV")->required();
    pr->add_option("--meta", pr_meta, "metadata JSON")->required();
    pr->add_option("--graph", pr_graph, "graph JSON")->required();
    pr->add_option("--index", pr_index, "test window index")->default_val(0);
    pr->add_option("--out", pr_out, "forecast JSON path")->default_val("forecast.json");

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "score a checkpoint on the test split");
    std::string ev_ckpt, ev_data, ev_meta, ev_graph, ev_out = "report.json",
                ev_score = "logdet", ev_sel_out;
    bool ev_selective = false;
    std::uint64_t ev_score_seed = 0;
    ev->add_option("--checkpoint", ev_ckpt, "checkpoint path")->required();
    ev->add_option("--data", ev_data, "data CSV")->required();
    ev->add_option("--meta", ev_meta, "metadata JSON")->required();
    ev->add_option("--graph", ev_graph, "graph JSON")->required();
    ev->add_option("--out", ev_out, "report JSON path")->default_val("report.json");
    ev->add_flag("--selective", ev_selective, "also compute the error-vs-coverage curve");
    ev->add_option("--score", ev_score, "abstention score: logdet | trace | random")
        ->default_val("logdet");
    ev->add_option("--score-seed", ev_score_seed, "seed for the random control score")
        ->default_val(0);
    ev->add_option("--selective-out", ev_sel_out, "also write the curve as CSV");

    // ablate
    auto* ab = app.add_subcommand("ablate", "train and score all five variants");
    std::string ab_data, ab_meta, ab_graph, ab_out = "ablation.csv", ab_config;
    ab->add_option("--data", ab_data, "data CSV")->required();
    ab->add_option("--meta", ab_meta, "metadata JSON")->required();
    ab->add_option("--graph", ab_graph, "graph JSON")->required();
    ab->add_option("--out", ab_out, "table CSV path")->default_val("ablation.csv");
    ab->add_option("--config", ab_config, "JSON config file; flags override its keys");
    ConfigBinder ab_bind;
    ModelFlags ab_mf;
    TrainFlags ab_tf;
    ab_mf.add(ab, ab_bind);
    ab_tf.add(ab, ab_bind);

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every gradient");
    double gc_tol = 1e-4;
    bool gc_fault = false;
    gc->add_option("--tol", gc_tol, "max relative error allowed")->default_val(1e-4);
    gc->add_flag("--inject-fault", gc_fault, "test hook: add a deliberately wrong gradient")
        ->group("");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    }

    try {
        if (gen->parsed())
            return cmd_generate(g_regions, g_vars, g_length, g_cross, g_noise, g_seed, g_hetero,
                                g_lag, g_sigma2, g_r, g_out);
        if (gr->parsed()) return cmd_graph(gr_in, gr_alpha, gr_kmax);
        if (tr->parsed()) {
            tr_bind.apply(tr_config);
            return cmd_train(tr_data, tr_meta, tr_graph, tr_out, tr_history, tr_mf, tr_tf);
        }
        if (pr->parsed()) return cmd_predict(pr_ckpt, pr_data, pr_meta, pr_graph, pr_index, pr_out);
        if (ev->parsed())
            return cmd_evaluate(ev_ckpt, ev_data, ev_meta, ev_graph, ev_out, ev_selective,
                                ev_score, ev_score_seed, ev_sel_out);
        if (ab->parsed()) {
            ab_bind.apply(ab_config);
            return cmd_ablate(ab_data, ab_meta, ab_graph, ab_out, ab_mf, ab_tf);
        }
        if (gc->parsed()) return cmd_gradcheck(gc_tol, gc_fault);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
