#include "uqst/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <thread>

namespace uqst::training {

void adam_step(std::vector<double>& params, const std::vector<double>& grads,
               AdamState& state, double lr) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw std::invalid_argument("adam_step: size mismatch");
    state.step += 1;
    double bc1 = 1.0 - std::pow(state.beta1, double(state.step));
    double bc2 = 1.0 - std::pow(state.beta2, double(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grads[i];
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grads[i] * grads[i];
        double mhat = state.m[i] / bc1;
        double vhat = state.v[i] / bc2;
        params[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
    }
}

double lr_schedule(const TrainConfig& cfg, std::size_t epoch) {
    std::size_t steps = epoch / cfg.decay_every;
    double lr;
    if (cfg.multiplicative_decay) {
        lr = cfg.lr0 * std::pow(1.0 - cfg.decay / cfg.lr0, double(steps));
    } else {
        lr = cfg.lr0 - cfg.decay * double(steps);
    }
    return std::max(lr, cfg.lr_floor);
}

std::size_t worker_threads() {
    if (const char* env = std::getenv("UQSTP_THREADS")) {
        long v = std::atol(env);
        if (v > 0) return std::size_t(v);
    }
    unsigned hc = std::thread::hardware_concurrency();
    return hc ? hc : 1;
}

namespace {

// Run fn(i) for i in [0, n) on up to worker_threads() threads. Results
// must be written to per-index slots so the reduction order is fixed.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    std::size_t workers = std::min(worker_threads(), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> threads;
    std::vector<std::exception_ptr> errors(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        threads.emplace_back([&, w] {
            try {
                for (std::size_t i = w; i < n; i += workers) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : threads) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t epoch, std::uint64_t sample) {
    std::uint64_t h = seed;
    h ^= (epoch + 0x9E3779B97F4A7C15ULL) + (h << 6) + (h >> 2);
    h ^= (sample + 0x9E3779B97F4A7C15ULL) + (h << 6) + (h >> 2);
    return h;
}

void flatten_params(const model::ParamStore& store, std::vector<double>& flat) {
    flat.clear();
    for (const auto& e : store.entries())
        flat.insert(flat.end(), e.value.vec().begin(), e.value.vec().end());
}

void unflatten_params(model::ParamStore& store, const std::vector<double>& flat) {
    std::size_t off = 0;
    for (auto& e : store.entries()) {
        std::copy(flat.begin() + off, flat.begin() + off + e.value.size(),
                  e.value.vec().begin());
        off += e.value.size();
    }
}

}  // namespace

double dataset_loss(const model::Model& m, const dataset::STTensor& data) {
    auto ws = dataset::window(data, m.config().input_len, m.config().horizon);
    std::vector<double> losses(ws.samples.size());
    parallel_for(ws.samples.size(), [&](std::size_t i) {
        ad::Tape tape;
        NDArray in = dataset::window_input(data, ws, i);
        NDArray tgt = dataset::window_target(data, ws, i);
        losses[i] = m.sample_loss(tape, in, tgt, nullptr).data()[0];
    });
    double sum = 0;
    for (double l : losses) sum += l;
    return sum / double(losses.size());
}

TrainResult train(model::Model& m, const TrainConfig& cfg,
                  const dataset::STTensor& train_data, const dataset::STTensor& val_data) {
    auto ws = dataset::window(train_data, m.config().input_len, m.config().horizon);
    const std::size_t n_samples = ws.samples.size();
    const std::size_t n_params = m.params().total_size();

    TrainResult result;
    std::vector<double> best_params;
    flatten_params(m.params(), best_params);
    result.best_val_loss = std::numeric_limits<double>::infinity();

    if (cfg.max_epochs == 0) return result;

    AdamState adam(n_params);
    std::vector<double> flat(n_params);
    flatten_params(m.params(), flat);

    std::size_t since_best = 0;
    for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        double lr = lr_schedule(cfg, epoch);

        std::vector<std::size_t> order(n_samples);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::mt19937_64 shuffle_rng(mix_seed(cfg.seed, epoch, 0xD1CEULL));
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        double epoch_loss = 0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < n_samples; start += cfg.batch_size) {
            std::size_t count = std::min(cfg.batch_size, n_samples - start);
            std::vector<std::vector<double>> sample_grads(count);
            std::vector<double> sample_losses(count);
            parallel_for(count, [&](std::size_t bi) {
                std::size_t sample = order[start + bi];
                ad::Tape tape;
                NDArray in = dataset::window_input(train_data, ws, sample);
                NDArray tgt = dataset::window_target(train_data, ws, sample);
                std::mt19937_64 drop_rng(mix_seed(cfg.seed, epoch, sample));
                model::ParamLeaves leaves;
                ad::Value loss = m.sample_loss(tape, in, tgt, &drop_rng, &leaves);
                tape.backward(loss);
                sample_losses[bi] = loss.data()[0];
                sample_grads[bi].assign(n_params, 0.0);
                model::accumulate_grads(leaves, sample_grads[bi]);
            });

            // Fixed-order reduction keeps the run bit-reproducible.
            std::vector<double> grad(n_params, 0.0);
            double batch_loss = 0;
            for (std::size_t bi = 0; bi < count; ++bi) {
                batch_loss += sample_losses[bi];
                for (std::size_t i = 0; i < n_params; ++i) grad[i] += sample_grads[bi][i];
            }
            batch_loss /= double(count);
            for (auto& g : grad) g /= double(count);

            if (!std::isfinite(batch_loss))
                throw std::runtime_error("training diverged (NaN loss) at epoch " +
                                         std::to_string(epoch) + ", batch " +
                                         std::to_string(batches));
            for (std::size_t i = 0; i < n_params; ++i)
                if (!std::isfinite(grad[i]))
                    throw std::runtime_error("NaN gradient in parameter block at flat index " +
                                             std::to_string(i) + ", epoch " +
                                             std::to_string(epoch));

            if (cfg.clip_norm > 0) {
                double norm = 0;
                for (double g : grad) norm += g * g;
                norm = std::sqrt(norm);
                if (norm > cfg.clip_norm) {
                    double s = cfg.clip_norm / norm;
                    for (auto& g : grad) g *= s;
                }
            }

            adam_step(flat, grad, adam, lr);
            unflatten_params(m.params(), flat);
            epoch_loss += batch_loss;
            ++batches;
        }
        epoch_loss /= double(batches);

        double val_loss = dataset_loss(m, val_data);
        result.history.push_back({epoch, epoch_loss, val_loss, lr});

        if (val_loss < result.best_val_loss) {
            result.best_val_loss = val_loss;
            result.best_epoch = epoch;
            best_params = flat;
            since_best = 0;
        } else {
            ++since_best;
            if (since_best >= cfg.patience) break;
        }
    }

    unflatten_params(m.params(), best_params);
    return result;
}

void save_history_csv(const TrainResult& r, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write history file: " + path);
    f << "epoch,train_loss,val_loss,lr\n";
    char buf[128];
    for (const auto& rec : r.history) {
        std::snprintf(buf, sizeof buf, "%zu,%.6g,%.6g,%.6g\n", rec.epoch, rec.train_loss,
                      rec.val_loss, rec.lr);
        f << buf;
    }
}

}  // namespace uqst::training
