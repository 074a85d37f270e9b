#include "bwe/data_pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <stdexcept>

namespace bwe {

namespace fs = std::filesystem;

std::string to_string(Split split) {
    switch (split) {
        case Split::Train: return "train";
        case Split::Validation: return "validation";
        case Split::Test: return "test";
    }
    return "?";
}

Split split_from_string(const std::string& name) {
    if (name == "train") return Split::Train;
    if (name == "validation" || name == "val") return Split::Validation;
    if (name == "test") return Split::Test;
    throw std::invalid_argument("unknown split '" + name + "'");
}

std::vector<const ManifestEntry*> DatasetManifest::split_entries(Split s) const {
    std::vector<const ManifestEntry*> out;
    for (const auto& e : entries)
        if (e.split == s) out.push_back(&e);
    return out;
}

void DatasetManifest::validate_disjoint() const {
    std::map<std::string, Split> seen;
    for (const auto& e : entries) {
        auto [it, inserted] = seen.emplace(e.path, e.split);
        if (!inserted && it->second != e.split)
            throw std::runtime_error("manifest: file in multiple splits: " + e.path);
    }
}

void DatasetManifest::scan() {
    for (auto& e : entries) e.frames = wav_frame_count(e.path);
}

DatasetManifest DatasetManifest::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("manifest: cannot open " + path);
    DatasetManifest m;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw std::runtime_error("manifest: " + path + ":" +
                                     std::to_string(lineno) +
                                     ": expected `split<TAB>path`");
        ManifestEntry e;
        e.split = split_from_string(line.substr(0, tab));
        e.path = line.substr(tab + 1);
        if (e.path.empty())
            throw std::runtime_error("manifest: " + path + ":" +
                                     std::to_string(lineno) + ": empty path");
        m.entries.push_back(std::move(e));
    }
    m.validate_disjoint();
    return m;
}

void DatasetManifest::save(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("manifest: cannot create " + path);
    for (const auto& e : entries) f << to_string(e.split) << '\t' << e.path << '\n';
}

AugmentationPolicy AugmentationPolicy::make(AugmentationSetting setting) {
    AugmentationPolicy p;
    p.setting = setting;
    p.specs = training_filter_bank(setting);
    for (const auto& s : p.specs) p.bank.push_back(design_lowpass(s));
    return p;
}

const AudioClip& DatasetReader::get(const std::string& path) {
    auto it = cache_.find(path);
    if (it == cache_.end()) it = cache_.emplace(path, load_wav(path)).first;
    return it->second;
}

TrainingPair sample_training_pair(const DatasetManifest& manifest,
                                  const AugmentationPolicy& policy, Rng& rng,
                                  DatasetReader& reader, int chunk_len) {
    auto train = manifest.split_entries(Split::Train);
    std::vector<const ManifestEntry*> usable;
    for (const auto* e : train)
        if (e->frames >= static_cast<std::size_t>(chunk_len)) usable.push_back(e);
    if (usable.empty())
        throw std::runtime_error("no training file has at least " +
                                 std::to_string(chunk_len) + " samples");

    TrainingPair pair;
    pair.file_index = rng.uniform_int(usable.size());
    const ManifestEntry* entry = usable[pair.file_index];
    const AudioClip& clip = reader.get(entry->path);
    pair.offset = rng.uniform_int(clip.frames() - chunk_len + 1);
    pair.filter_index = static_cast<int>(rng.uniform_int(policy.bank.size()));

    pair.target = make_tensor<float>(1, 2, chunk_len);
    pair.input = make_tensor<float>(1, 2, chunk_len);
    for (int c = 0; c < 2; ++c) {
        const float* src = clip.ch[c].data() + pair.offset;
        std::copy(src, src + chunk_len, pair.target->row(0, c));
        std::copy(src, src + chunk_len, pair.input->row(0, c));
        apply_filter_inplace(policy.bank[pair.filter_index], pair.input->row(0, c),
                             chunk_len);
    }
    return pair;
}

std::vector<ValidationExcerpt> validation_excerpts(
    const DatasetManifest& manifest, const AugmentationPolicy& policy,
    DatasetReader& reader, double start_s, double dur_s) {
    auto val = manifest.split_entries(Split::Validation);
    if (val.empty()) throw std::runtime_error("validation split is empty");
    const SosCascade unseen = design_lowpass(unseen_filter());

    std::vector<ValidationExcerpt> out;
    for (std::size_t i = 0; i < val.size(); ++i) {
        const AudioClip& song = reader.get(val[i]->path);
        const std::size_t start =
            static_cast<std::size_t>(start_s * song.sample_rate_hz);
        const std::size_t len = static_cast<std::size_t>(dur_s * song.sample_rate_hz);
        if (song.frames() < start + len)
            throw std::runtime_error("validation song too short for excerpt [" +
                                     std::to_string(start_s) + "s, " +
                                     std::to_string(start_s + dur_s) + "s): " +
                                     val[i]->path);
        ValidationExcerpt ex;
        ex.song = val[i]->path;
        ex.target.sample_rate_hz = song.sample_rate_hz;
        for (int c = 0; c < 2; ++c)
            ex.target.ch[c].assign(song.ch[c].begin() + start,
                                   song.ch[c].begin() + start + len);
        ex.seen_filter_index =
            policy.setting == AugmentationSetting::MultiFilter
                ? static_cast<int>(i % policy.bank.size())
                : 0;
        ex.input_seen = apply_filter(policy.bank[ex.seen_filter_index], ex.target);
        ex.input_unseen = apply_filter(unseen, ex.target);
        out.push_back(std::move(ex));
    }
    return out;
}

// ---------------------------------------------------------------------------
// synthetic corpus
// ---------------------------------------------------------------------------

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Partial {
    double freq_hz;
    double amp;
    double phase;
    double pan;  // 0 = hard left, 1 = hard right
};

// One clip: a coherent harmonic series (so the high band is predictable from
// the low band) with the partial set forced to place energy above 11025 Hz,
// plus -40 dB pink noise.
void render_clip(AudioClip& clip, Rng& rng, std::size_t frames, double sr) {
    const double f0 = rng.uniform(80.0, 1000.0);
    const int n_partials = 4 + static_cast<int>(rng.uniform_int(9));  // 4..12
    const int h_max = static_cast<int>(20500.0 / f0);
    const int h_hf_min = static_cast<int>(11025.0 / f0) + 1;

    std::set<int> harmonics = {1};
    while (static_cast<int>(harmonics.size()) < n_partials)
        harmonics.insert(2 + static_cast<int>(rng.uniform_int(h_max - 1)));
    // force at least two partials above the cutoff
    {
        int hf = 0;
        for (int h : harmonics)
            if (h >= h_hf_min) ++hf;
        while (hf < 2) {
            // replace the largest sub-cutoff harmonic by a high one
            int victim = -1;
            for (int h : harmonics)
                if (h < h_hf_min && h != 1) victim = h;
            if (victim < 0) break;
            harmonics.erase(victim);
            int candidate;
            do {
                candidate = h_hf_min + static_cast<int>(
                                           rng.uniform_int(h_max - h_hf_min + 1));
            } while (harmonics.count(candidate));
            harmonics.insert(candidate);
            hf = 0;
            for (int h : harmonics)
                if (h >= h_hf_min) ++hf;
        }
    }

    const double alpha = rng.uniform(0.4, 0.9);
    const double phase0 = rng.uniform(0.0, kTwoPi);
    std::vector<Partial> partials;
    double lf_energy = 0.0, hf_energy = 0.0;
    for (int h : harmonics) {
        Partial p;
        p.freq_hz = h * f0;
        p.amp = std::pow(double(h), -alpha);
        p.phase = std::fmod(h * phase0, kTwoPi);
        p.pan = rng.uniform(0.35, 0.65);
        (p.freq_hz > 11025.0 ? hf_energy : lf_energy) += p.amp * p.amp;
        partials.push_back(p);
    }

    // rescale the high partials to hit a target share of total energy
    const double target_share = rng.uniform(0.08, 0.2);
    if (hf_energy > 0.0) {
        const double s = std::sqrt(target_share / (1.0 - target_share) *
                                   lf_energy / hf_energy);
        for (auto& p : partials)
            if (p.freq_hz > 11025.0) p.amp *= s;
    }

    // small inter-channel delay keeps the stereo image wide but coherent
    const double right_delay_s = rng.uniform(-3e-4, 3e-4);

    clip.sample_rate_hz = sr;
    clip.ch[0].assign(frames, 0.0f);
    clip.ch[1].assign(frames, 0.0f);
    std::vector<double> acc0(frames, 0.0), acc1(frames, 0.0);
    for (const auto& p : partials) {
        const double w = kTwoPi * p.freq_hz / sr;
        const double gl = p.amp * std::cos(p.pan * std::numbers::pi / 2.0);
        const double gr = p.amp * std::sin(p.pan * std::numbers::pi / 2.0);
        const double phr = p.phase + kTwoPi * p.freq_hz * right_delay_s;
        for (std::size_t t = 0; t < frames; ++t) {
            acc0[t] += gl * std::sin(w * double(t) + p.phase);
            acc1[t] += gr * std::sin(w * double(t) + phr);
        }
    }

    // -40 dB pink noise (Paul Kellet 3-pole approximation)
    double partial_rms = 0.0;
    for (const auto& p : partials) partial_rms += 0.5 * p.amp * p.amp;
    const double noise_gain = std::sqrt(partial_rms) * std::pow(10.0, -40.0 / 20.0);
    for (int c = 0; c < 2; ++c) {
        double b0 = 0.0, b1 = 0.0, b2 = 0.0;
        auto& acc = c == 0 ? acc0 : acc1;
        for (std::size_t t = 0; t < frames; ++t) {
            const double white = rng.normal();
            b0 = 0.99765 * b0 + white * 0.0990460;
            b1 = 0.96300 * b1 + white * 0.2965164;
            b2 = 0.57000 * b2 + white * 1.0526913;
            acc[t] += noise_gain * 0.2 * (b0 + b1 + b2 + white * 0.1848);
        }
    }

    double peak = 0.0;
    for (std::size_t t = 0; t < frames; ++t)
        peak = std::max({peak, std::abs(acc0[t]), std::abs(acc1[t])});
    const double norm = peak > 0.0 ? 0.9 / peak : 1.0;
    for (std::size_t t = 0; t < frames; ++t) {
        clip.ch[0][t] = static_cast<float>(acc0[t] * norm);
        clip.ch[1][t] = static_cast<float>(acc1[t] * norm);
    }
}

}  // namespace

DatasetManifest generate_synthetic_dataset(const SynthSpec& spec,
                                           std::uint64_t seed,
                                           const std::string& out_dir) {
    const fs::path root(out_dir);
    std::error_code ec;
    fs::create_directories(root / "clips", ec);
    if (ec)
        throw std::runtime_error("gen-synth: cannot create " +
                                 (root / "clips").string() + ": " + ec.message());

    struct SplitPlan {
        Split split;
        int count;
        double dur;
    };
    const SplitPlan plans[] = {
        {Split::Train, spec.train_clips, spec.train_dur_s},
        {Split::Validation, spec.validation_clips, spec.validation_dur_s},
        {Split::Test, spec.test_clips, spec.test_dur_s},
    };

    DatasetManifest manifest;
    for (const auto& plan : plans) {
        for (int i = 0; i < plan.count; ++i) {
            const std::uint64_t stream =
                (static_cast<std::uint64_t>(plan.split) << 32) |
                static_cast<std::uint64_t>(i);
            Rng rng = Rng::derive(seed, stream);
            AudioClip clip;
            render_clip(clip, rng,
                        static_cast<std::size_t>(plan.dur * spec.sample_rate_hz),
                        spec.sample_rate_hz);
            char name[64];
            std::snprintf(name, sizeof(name), "%s_%03d.wav",
                          to_string(plan.split).c_str(), i);
            const fs::path path = root / "clips" / name;
            save_wav(clip, path.string(), WavFormat::Pcm16);
            ManifestEntry e;
            e.split = plan.split;
            e.path = path.string();
            e.frames = clip.frames();
            manifest.entries.push_back(std::move(e));
        }
    }
    manifest.save((root / "manifest.tsv").string());
    return manifest;
}

}  // namespace bwe
