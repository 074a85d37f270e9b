#include "bwe/training.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace bwe {

namespace fs = std::filesystem;

std::string to_string(Regularization r) {
    switch (r) {
        case Regularization::None: return "none";
        case Regularization::BatchNorm: return "bn";
        case Regularization::Dropout: return "do";
        case Regularization::DataAugmentation: return "da";
    }
    return "?";
}

Regularization regularization_from_string(const std::string& name) {
    if (name == "none" || name == "baseline") return Regularization::None;
    if (name == "bn" || name == "batchnorm") return Regularization::BatchNorm;
    if (name == "do" || name == "dropout") return Regularization::Dropout;
    if (name == "da" || name == "augmentation") return Regularization::DataAugmentation;
    throw std::invalid_argument("unknown regularization setting '" + name + "'");
}

AugmentationSetting augmentation_for(Regularization r) {
    return r == Regularization::DataAugmentation ? AugmentationSetting::MultiFilter
                                                 : AugmentationSetting::SingleFilter;
}

void TrainConfig::validate() const {
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (record_interval < 1) throw std::invalid_argument("record_interval must be >= 1");
    if (plateau_patience < 1) throw std::invalid_argument("plateau_patience must be >= 1");
    if (max_iterations < 1) throw std::invalid_argument("max_iterations must be >= 1");
    if (!(lr0 > 0.0)) throw std::invalid_argument("lr0 must be positive");
    if (chunk_len < 1) throw std::invalid_argument("chunk_len must be >= 1");
    if (out_dir.empty()) throw std::invalid_argument("out_dir must be set");
}

void plateau_scheduler(TrainState& state, double recorded_loss, int patience) {
    if (!state.best_valid || recorded_loss < state.best_loss) {
        state.best_loss = recorded_loss;
        state.best_valid = true;
        state.plateau_count = 0;
        return;
    }
    if (++state.plateau_count >= patience) {
        state.lr *= 0.5;
        state.plateau_count = 0;
    }
}

std::pair<double, double> validate(Network<float>& net,
                                   const std::vector<ValidationExcerpt>& excerpts,
                                   int chunk_len) {
    if (excerpts.empty()) throw std::invalid_argument("validate: no excerpts");
    const Mode saved = net.mode();
    net.set_mode(Mode::Eval);
    double seen = 0.0, unseen = 0.0;
    for (const auto& ex : excerpts) {
        seen += snr_db(ex.target, chunked_inference(net, ex.input_seen, chunk_len));
        unseen += snr_db(ex.target, chunked_inference(net, ex.input_unseen, chunk_len));
    }
    net.set_mode(saved);
    const double n = double(excerpts.size());
    return {seen / n, unseen / n};
}

void write_metrics_csv(const std::vector<LogRow>& log, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("metrics: cannot create " + path);
    f << "iteration,avg_train_loss,snr_seen_db,snr_unseen_db,lr\n";
    for (const auto& row : log) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%lld,%.9g,%.9g,%.9g,%.9g\n",
                      static_cast<long long>(row.iteration), row.avg_train_loss,
                      row.snr_seen_db, row.snr_unseen_db, row.lr);
        f << buf;
    }
}

TrainResult train(Network<float>& net, const DatasetManifest& manifest,
                  const TrainConfig& config, const std::string& resume_from) {
    config.validate();
    fs::create_directories(config.out_dir);

    const AugmentationPolicy policy =
        AugmentationPolicy::make(augmentation_for(config.regularization));
    DatasetReader reader;
    const auto excerpts = validation_excerpts(manifest, policy, reader,
                                              config.val_start_s, config.val_dur_s);

    Rng data_rng = Rng::derive(config.seed, 101);
    Rng validation_rng = Rng::derive(config.seed, 103);  // reserved; kept isolated
    net.seed_dropout(Rng::derive(config.seed, 102).next_u64());

    TrainState state;
    state.lr = config.lr0;

    if (!resume_from.empty()) {
        auto trainer = load_checkpoint(net, resume_from);
        if (!trainer)
            throw std::runtime_error("resume checkpoint lacks trainer state: " + resume_from);
        state.iteration = static_cast<std::int64_t>(trainer->iteration);
        state.lr = trainer->lr;
        state.best_loss = trainer->best_loss;
        state.best_valid = trainer->best_valid;
        state.plateau_count = static_cast<int>(trainer->plateau_count);
        state.window_loss_sum = trainer->window_loss_sum;
        state.window_count = static_cast<std::int64_t>(trainer->window_count);
        data_rng.set_state(trainer->data_rng);
        net.dropout_rng().set_state(trainer->dropout_rng);
        validation_rng.set_state(trainer->validation_rng);
    }

    std::ofstream audit;
    if (config.verbose_filter_log) {
        audit.open(fs::path(config.out_dir) / "train.log",
                   resume_from.empty() ? std::ios::out : std::ios::app);
        if (!audit) throw std::runtime_error("cannot open train.log in " + config.out_dir);
    }

    auto params = net.parameters();
    net.set_mode(Mode::Train);

    auto snapshot_trainer = [&]() {
        TrainerState t;
        t.iteration = static_cast<std::uint64_t>(state.iteration);
        t.lr = state.lr;
        t.best_loss = state.best_loss;
        t.best_valid = state.best_valid;
        t.plateau_count = static_cast<std::uint32_t>(state.plateau_count);
        t.window_loss_sum = state.window_loss_sum;
        t.window_count = static_cast<std::uint64_t>(state.window_count);
        t.data_rng = data_rng.state();
        t.dropout_rng = net.dropout_rng().state();
        t.validation_rng = validation_rng.state();
        return t;
    };

    const fs::path out(config.out_dir);
    TrainResult result;
    result.metrics_csv = (out / "metrics.csv").string();

    while (state.iteration < config.max_iterations) {
        // assemble one batch
        auto input = make_tensor<float>(config.batch_size, 2, config.chunk_len);
        auto target = make_tensor<float>(config.batch_size, 2, config.chunk_len);
        for (int b = 0; b < config.batch_size; ++b) {
            TrainingPair pair = sample_training_pair(manifest, policy, data_rng,
                                                     reader, config.chunk_len);
            for (int c = 0; c < 2; ++c) {
                std::copy(pair.input->row(0, c), pair.input->row(0, c) + config.chunk_len,
                          input->row(b, c));
                std::copy(pair.target->row(0, c), pair.target->row(0, c) + config.chunk_len,
                          target->row(b, c));
            }
            if (audit.is_open())
                audit << "iter " << (state.iteration + 1) << " draw filter="
                      << policy.specs[pair.filter_index].label() << " file="
                      << pair.file_index << " offset=" << pair.offset << '\n';
        }

        Tape<float> tape;
        net.zero_grads();
        const TensorPtr<float> pred = net.forward(&tape, input);
        const TensorPtr<float> loss = ag::mse_loss(&tape, pred, target);
        const double loss_value = loss->data[0];
        if (!std::isfinite(loss_value))
            throw std::runtime_error("training diverged: non-finite loss at iteration " +
                                     std::to_string(state.iteration + 1));
        tape.backward_from(loss);
        adam_step(params, float(state.lr), float(config.beta1), float(config.beta2),
                  float(config.adam_eps));

        state.iteration++;
        state.window_loss_sum += loss_value;
        state.window_count++;

        if (state.iteration % config.record_interval == 0 ||
            state.iteration == config.max_iterations) {
            const double avg = state.window_loss_sum / double(state.window_count);
            state.window_loss_sum = 0.0;
            state.window_count = 0;
            plateau_scheduler(state, avg, config.plateau_patience);
            const auto [snr_seen, snr_unseen] = validate(net, excerpts, config.chunk_len);
            state.log.push_back({state.iteration, avg, snr_seen, snr_unseen, state.lr});
            write_metrics_csv(state.log, result.metrics_csv);

            char name[64];
            std::snprintf(name, sizeof(name), "checkpoint_%08lld.bin",
                          static_cast<long long>(state.iteration));
            const TrainerState trailer = snapshot_trainer();
            save_checkpoint(net, (out / name).string(), &trailer);
            result.final_checkpoint = (out / name).string();
            std::fprintf(stderr,
                         "iter %lld  loss %.6g  snr_seen %.2f dB  snr_unseen %.2f dB  lr %g\n",
                         static_cast<long long>(state.iteration), avg, snr_seen,
                         snr_unseen, state.lr);
        }
    }

    if (result.final_checkpoint.empty()) {
        const TrainerState trailer = snapshot_trainer();
        result.final_checkpoint = (out / "checkpoint_final.bin").string();
        save_checkpoint(net, result.final_checkpoint, &trailer);
    }
    result.state = std::move(state);
    return result;
}

}  // namespace bwe
