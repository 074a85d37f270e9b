#pragma once

#include "bwe/audio.hpp"
#include "bwe/filter_design.hpp"
#include "bwe/rng.hpp"
#include "bwe/tensor.hpp"

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace bwe {

enum class Split { Train, Validation, Test };

std::string to_string(Split split);
Split split_from_string(const std::string& name);

struct ManifestEntry {
    Split split = Split::Train;
    std::string path;
    std::size_t frames = 0;  // filled by scan()
};

// Plain-text manifest: one `split<TAB>path` per line. Splits must be
// disjoint by file path.
struct DatasetManifest {
    std::vector<ManifestEntry> entries;

    std::vector<const ManifestEntry*> split_entries(Split s) const;
    void validate_disjoint() const;

    // Reads frame counts from the WAV headers.
    void scan();

    static DatasetManifest load(const std::string& path);
    void save(const std::string& path) const;
};

// Realized filter bank for one augmentation setting.
struct AugmentationPolicy {
    AugmentationSetting setting = AugmentationSetting::SingleFilter;
    std::vector<FilterSpec> specs;
    std::vector<SosCascade> bank;

    static AugmentationPolicy make(AugmentationSetting setting);
};

// Decoded-clip cache so chunk sampling does not re-parse WAV files.
class DatasetReader {
public:
    const AudioClip& get(const std::string& path);
    void clear() { cache_.clear(); }

private:
    std::map<std::string, AudioClip> cache_;
};

struct TrainingPair {
    TensorPtr<float> input;   // (1, 2, chunk_len), band-limited
    TensorPtr<float> target;  // (1, 2, chunk_len), full bandwidth
    int filter_index = 0;     // index into the policy bank
    std::size_t file_index = 0;
    std::size_t offset = 0;
};

// Uniformly random file (among those long enough), uniformly random offset,
// uniformly random bank filter; the target is the raw chunk and the input is
// the filtered chunk.
TrainingPair sample_training_pair(const DatasetManifest& manifest,
                                  const AugmentationPolicy& policy, Rng& rng,
                                  DatasetReader& reader, int chunk_len = 8192);

struct ValidationExcerpt {
    std::string song;
    AudioClip target;
    AudioClip input_seen;
    AudioClip input_unseen;
    int seen_filter_index = 0;
};

// Per validation song: target = samples [start_s, start_s + dur_s). The seen
// input uses the policy bank (multi-filter: bank filter i for song i, in
// Table order); the unseen input always uses the held-out Butterworth-6.
std::vector<ValidationExcerpt> validation_excerpts(
    const DatasetManifest& manifest, const AugmentationPolicy& policy,
    DatasetReader& reader, double start_s = 8.0, double dur_s = 8.0);

// ---------------------------------------------------------------------------
// synthetic corpus
// ---------------------------------------------------------------------------

struct SynthSpec {
    int train_clips = 100;
    int validation_clips = 8;
    int test_clips = 20;
    double train_dur_s = 3.0;
    double validation_dur_s = 3.0;
    double test_dur_s = 3.0;
    double sample_rate_hz = 44100.0;
};

// Writes `clips/<split>_###.wav` plus `manifest.tsv` under out_dir.
// Deterministic from the seed: each clip is a harmonic mixture whose partial
// set always places energy above 11025 Hz, plus -40 dB pink noise,
// peak-normalized to 0.9.
DatasetManifest generate_synthetic_dataset(const SynthSpec& spec,
                                           std::uint64_t seed,
                                           const std::string& out_dir);

}  // namespace bwe
