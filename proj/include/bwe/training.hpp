#pragma once

#include "bwe/checkpoint.hpp"
#include "bwe/data_pipeline.hpp"
#include "bwe/evaluation.hpp"
#include "bwe/models.hpp"

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace bwe {

enum class Regularization { None, BatchNorm, Dropout, DataAugmentation };

std::string to_string(Regularization r);
Regularization regularization_from_string(const std::string& name);

// Data augmentation is the only setting that switches to the multi-filter
// bank; the other three train single-filter.
AugmentationSetting augmentation_for(Regularization r);

struct TrainConfig {
    int batch_size = 8;
    double lr0 = 5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    int record_interval = 2500;   // iterations between loss recordings
    int plateau_patience = 5;     // recordings without improvement before halving
    std::int64_t max_iterations = 0;
    std::uint64_t seed = 0;
    Regularization regularization = Regularization::None;
    int chunk_len = 8192;
    double val_start_s = 8.0;
    double val_dur_s = 8.0;
    std::string out_dir;            // checkpoints + metrics.csv + train.log
    bool verbose_filter_log = false;  // one audit line per filter draw

    void validate() const;
};

struct LogRow {
    std::int64_t iteration = 0;
    double avg_train_loss = 0.0;
    double snr_seen_db = 0.0;
    double snr_unseen_db = 0.0;
    double lr = 0.0;
};

struct TrainState {
    std::int64_t iteration = 0;
    double lr = 5e-4;
    double best_loss = std::numeric_limits<double>::infinity();
    bool best_valid = false;
    int plateau_count = 0;
    double window_loss_sum = 0.0;
    std::int64_t window_count = 0;
    std::vector<LogRow> log;
};

// Applies the plateau rule to one recorded loss: strict improvement resets
// the counter (and the best), otherwise the counter increments and the lr is
// halved when it reaches the patience.
void plateau_scheduler(TrainState& state, double recorded_loss, int patience);

// Mean SNR over the validation excerpts, seen and unseen filter conditions.
// The network is switched to eval mode and restored afterward.
std::pair<double, double> validate(Network<float>& net,
                                   const std::vector<ValidationExcerpt>& excerpts,
                                   int chunk_len = 8192);

struct TrainResult {
    TrainState state;
    std::string final_checkpoint;
    std::string metrics_csv;
};

// The full loop: batches of `batch_size` sampled pairs, MSE + Adam, loss
// recording / plateau halving / validation / checkpoint every
// `record_interval` iterations, stop at max_iterations. `resume_from`
// restores parameters and loop state for a bitwise-identical continuation.
TrainResult train(Network<float>& net, const DatasetManifest& manifest,
                  const TrainConfig& config, const std::string& resume_from = "");

void write_metrics_csv(const std::vector<LogRow>& log, const std::string& path);

}  // namespace bwe
