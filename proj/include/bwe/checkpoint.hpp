#pragma once

#include "bwe/models.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>

namespace bwe {

// Optimizer/loop state stored after the parameter block so training resumes
// bit-exactly.
struct TrainerState {
    std::uint64_t iteration = 0;
    double lr = 5e-4;
    double best_loss = 0.0;
    bool best_valid = false;
    std::uint32_t plateau_count = 0;
    double window_loss_sum = 0.0;
    std::uint64_t window_count = 0;
    std::array<std::uint64_t, 4> data_rng{};
    std::array<std::uint64_t, 4> dropout_rng{};
    std::array<std::uint64_t, 4> validation_rng{};
};

// Flat binary checkpoint: 8-byte magic, u32 version, u32 parameter count,
// then per parameter {u32 name_len, name, u32 shape[3], f32 data, f32 adam_m,
// f32 adam_v, u64 step_count}; then the batch-norm running stats block and an
// optional TrainerState block.
void save_checkpoint(Network<float>& net, const std::string& path,
                     const TrainerState* trainer = nullptr);

// Restores into an already-built network with matching parameter names and
// shapes. Returns the trainer block when one is present.
std::optional<TrainerState> load_checkpoint(Network<float>& net,
                                            const std::string& path);

}  // namespace bwe
