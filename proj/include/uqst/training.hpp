#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "uqst/dataset.hpp"
#include "uqst/model.hpp"

namespace uqst::training {

struct TrainConfig {
    std::size_t batch_size = 64;
    double lr0 = 1e-3;
    double decay = 5e-4;  // subtracted every decay_every epochs (multiplicative optional)
    std::size_t decay_every = 10;
    double lr_floor = 1e-5;
    bool multiplicative_decay = false;
    std::size_t patience = 50;  // validation evaluations without improvement
    std::size_t max_epochs = 200;
    std::uint64_t seed = 0;
    double clip_norm = 5.0;  // 0 disables gradient clipping
};

struct AdamState {
    std::vector<double> m, v;
    std::size_t step = 0;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

    explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

// Bias-corrected Adam update, in place.
void adam_step(std::vector<double>& params, const std::vector<double>& grads,
               AdamState& state, double lr);

double lr_schedule(const TrainConfig& cfg, std::size_t epoch);

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0, val_loss = 0, lr = 0;
};

struct TrainResult {
    std::vector<EpochRecord> history;
    double best_val_loss = 0;
    std::size_t best_epoch = 0;
};

// Trains the model in place on normalized train/val splits, restoring the
// best-validation parameters on return. Fully deterministic given the seed.
TrainResult train(model::Model& m, const TrainConfig& cfg,
                  const dataset::STTensor& train_data, const dataset::STTensor& val_data);

void save_history_csv(const TrainResult& r, const std::string& path);

// Batch-mean loss over all windows of a split, eval mode.
double dataset_loss(const model::Model& m, const dataset::STTensor& data);

std::size_t worker_threads();  // UQSTP_THREADS cap, default hardware concurrency

}  // namespace uqst::training
