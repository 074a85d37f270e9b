#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "bwe/audio.hpp"
#include "bwe/data_pipeline.hpp"
#include "bwe/fft.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace bwe;
namespace fs = std::filesystem;

namespace {

const fs::path kTmp = "test_tmp_audio";

struct TmpDir {
    TmpDir() {
        fs::remove_all(kTmp);
        fs::create_directories(kTmp);
    }
};
TmpDir tmp_dir_guard;

std::string tmp(const std::string& name) { return (kTmp / name).string(); }

std::vector<char> read_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

// fraction of spectral energy above the cutoff, via zero-padded FFT
double hf_energy_fraction(const AudioClip& clip, double cutoff_hz) {
    std::size_t n = 1;
    while (n < clip.frames()) n <<= 1;
    std::vector<std::complex<double>> buf(n, 0.0);
    for (std::size_t i = 0; i < clip.frames(); ++i)
        buf[i] = 0.5 * (double(clip.ch[0][i]) + double(clip.ch[1][i]));
    fft_inplace(buf);
    double total = 0.0, high = 0.0;
    for (std::size_t b = 1; b <= n / 2; ++b) {
        const double f = clip.sample_rate_hz * double(b) / double(n);
        const double e = std::norm(buf[b]);
        total += e;
        if (f > cutoff_hz) high += e;
    }
    return high / total;
}

}  // namespace

// ---------------------------------------------------------------------------
// WAV I/O
// ---------------------------------------------------------------------------

TEST_CASE("pcm16 sample scaling: 16384 -> 0.5") {
    AudioClip clip = AudioClip::silence(4);
    clip.ch[0][0] = 0.5f;
    clip.ch[1][0] = 0.5f;
    save_wav(clip, tmp("half.wav"));
    const AudioClip back = load_wav(tmp("half.wav"));
    CHECK(back.ch[0][0] == doctest::Approx(16384.0 / 32768.0).epsilon(1e-9));
}

TEST_CASE("pcm16 round trip stays within one quantization step") {
    Rng rng(1);
    AudioClip clip = AudioClip::silence(5000);
    for (int c = 0; c < 2; ++c)
        for (auto& v : clip.ch[c]) v = float(rng.uniform(-1.0, 1.0));
    save_wav(clip, tmp("roundtrip.wav"));
    const AudioClip back = load_wav(tmp("roundtrip.wav"));
    REQUIRE(back.frames() == clip.frames());
    float max_err = 0.0f;
    for (int c = 0; c < 2; ++c)
        for (std::size_t i = 0; i < clip.frames(); ++i)
            max_err = std::max(max_err, std::abs(back.ch[c][i] - clip.ch[c][i]));
    CHECK(max_err <= 1.0f / 32768.0f);
}

TEST_CASE("float32 round trip is exact") {
    Rng rng(2);
    AudioClip clip = AudioClip::silence(300);
    for (int c = 0; c < 2; ++c)
        for (auto& v : clip.ch[c]) v = float(rng.uniform(-1.0, 1.0));
    save_wav(clip, tmp("f32.wav"), WavFormat::Float32);
    const AudioClip back = load_wav(tmp("f32.wav"));
    CHECK(back.ch[0] == clip.ch[0]);
    CHECK(back.ch[1] == clip.ch[1]);
}

TEST_CASE("structured errors for malformed files") {
    {
        std::ofstream f(tmp("bad_riff.wav"), std::ios::binary);
        f << "JUNKJUNKJUNKJUNK";
    }
    CHECK_THROWS_WITH_AS(load_wav(tmp("bad_riff.wav")),
                         doctest::Contains("RIFF"), WavError);
    {
        std::ofstream f(tmp("no_data.wav"), std::ios::binary);
        // RIFF/WAVE with an fmt chunk but no data chunk
        f.write("RIFF", 4);
        const unsigned char size[4] = {28, 0, 0, 0};
        f.write(reinterpret_cast<const char*>(size), 4);
        f.write("WAVE", 4);
        f.write("fmt ", 4);
        const unsigned char fmt_size[4] = {16, 0, 0, 0};
        f.write(reinterpret_cast<const char*>(fmt_size), 4);
        const unsigned char fmt[16] = {1, 0, 2, 0, 0x44, 0xAC, 0, 0,
                                       0x10, 0xB1, 2, 0, 4, 0, 16, 0};
        f.write(reinterpret_cast<const char*>(fmt), 16);
    }
    CHECK_THROWS_WITH_AS(load_wav(tmp("no_data.wav")),
                         doctest::Contains("data"), WavError);
    CHECK_THROWS_AS(load_wav(tmp("missing.wav")), WavError);
}

TEST_CASE("wrong sample rate is rejected") {
    AudioClip clip = AudioClip::silence(64, 48000.0);
    save_wav(clip, tmp("rate48k.wav"));
    CHECK_THROWS_WITH_AS(load_wav(tmp("rate48k.wav")),
                         doctest::Contains("48000"), WavError);
    CHECK_NOTHROW(load_wav(tmp("rate48k.wav"), 0.0));  // rate check disabled
}

TEST_CASE("mono is duplicated to stereo") {
    // hand-write a mono PCM16 file
    {
        std::ofstream f(tmp("mono.wav"), std::ios::binary);
        auto u32 = [&](std::uint32_t v) { f.write(reinterpret_cast<char*>(&v), 4); };
        auto u16 = [&](std::uint16_t v) { f.write(reinterpret_cast<char*>(&v), 2); };
        f.write("RIFF", 4);
        u32(36 + 8);
        f.write("WAVE", 4);
        f.write("fmt ", 4);
        u32(16);
        u16(1);
        u16(1);
        u32(44100);
        u32(44100 * 2);
        u16(2);
        u16(16);
        f.write("data", 4);
        u32(8);
        for (std::int16_t v : {100, 200, 300, 400}) u16(std::uint16_t(v));
    }
    const AudioClip clip = load_wav(tmp("mono.wav"));
    CHECK(clip.frames() == 4);
    CHECK(clip.ch[0] == clip.ch[1]);
    CHECK(clip.ch[0][1] == doctest::Approx(200.0 / 32768.0));
}

TEST_CASE("wav_frame_count reads only the header") {
    AudioClip clip = AudioClip::silence(12345);
    save_wav(clip, tmp("count.wav"));
    CHECK(wav_frame_count(tmp("count.wav")) == 12345);
}

// ---------------------------------------------------------------------------
// manifests
// ---------------------------------------------------------------------------

TEST_CASE("manifest save/load round trip and disjointness") {
    DatasetManifest m;
    m.entries.push_back({Split::Train, "a.wav", 0});
    m.entries.push_back({Split::Test, "b.wav", 0});
    m.save(tmp("manifest.tsv"));
    const DatasetManifest back = DatasetManifest::load(tmp("manifest.tsv"));
    REQUIRE(back.entries.size() == 2);
    CHECK(back.entries[0].split == Split::Train);
    CHECK(back.entries[0].path == "a.wav");
    CHECK(back.entries[1].split == Split::Test);

    DatasetManifest overlap;
    overlap.entries.push_back({Split::Train, "x.wav", 0});
    overlap.entries.push_back({Split::Test, "x.wav", 0});
    CHECK_THROWS(overlap.validate_disjoint());
}

TEST_CASE("manifest parse errors carry line info") {
    {
        std::ofstream f(tmp("bad_manifest.tsv"));
        f << "train\tok.wav\n";
        f << "no-tab-here\n";
    }
    CHECK_THROWS_WITH_AS(DatasetManifest::load(tmp("bad_manifest.tsv")),
                         doctest::Contains(":2"), std::runtime_error);
}

// ---------------------------------------------------------------------------
// synthetic corpus
// ---------------------------------------------------------------------------

namespace {

SynthSpec small_synth() {
    SynthSpec s;
    s.train_clips = 4;
    s.validation_clips = 2;
    s.test_clips = 2;
    s.train_dur_s = 1.0;
    s.validation_dur_s = 1.0;
    s.test_dur_s = 1.0;
    return s;
}

}  // namespace

TEST_CASE("synthetic corpus is deterministic from the seed") {
    const DatasetManifest m1 = generate_synthetic_dataset(small_synth(), 7, tmp("synthA"));
    const DatasetManifest m2 = generate_synthetic_dataset(small_synth(), 7, tmp("synthB"));
    REQUIRE(m1.entries.size() == m2.entries.size());
    for (std::size_t i = 0; i < m1.entries.size(); ++i)
        CHECK(read_bytes(m1.entries[i].path) == read_bytes(m2.entries[i].path));
    const DatasetManifest m3 = generate_synthetic_dataset(small_synth(), 8, tmp("synthC"));
    CHECK(read_bytes(m1.entries[0].path) != read_bytes(m3.entries[0].path));
}

TEST_CASE("every synthetic clip keeps at least 5% energy above 11025 Hz") {
    const DatasetManifest m = generate_synthetic_dataset(small_synth(), 21, tmp("synthE"));
    for (const auto& e : m.entries) {
        const AudioClip clip = load_wav(e.path);
        INFO(e.path);
        CHECK(hf_energy_fraction(clip, 11025.0) >= 0.05);
        float peak = 0.0f;
        for (int c = 0; c < 2; ++c)
            for (float v : clip.ch[c]) peak = std::max(peak, std::abs(v));
        CHECK(peak <= 0.91f);
        CHECK(peak >= 0.7f);
    }
}

TEST_CASE("synthetic splits are disjoint and the manifest loads back") {
    const DatasetManifest m = generate_synthetic_dataset(small_synth(), 3, tmp("synthD"));
    CHECK_NOTHROW(m.validate_disjoint());
    const auto loaded =
        DatasetManifest::load((fs::path(tmp("synthD")) / "manifest.tsv").string());
    CHECK(loaded.entries.size() == 8);
    CHECK(loaded.split_entries(Split::Train).size() == 4);
    CHECK(loaded.split_entries(Split::Validation).size() == 2);
    CHECK(loaded.split_entries(Split::Test).size() == 2);
}

// ---------------------------------------------------------------------------
// training pairs
// ---------------------------------------------------------------------------

TEST_CASE("training pair sampling is deterministic and correctly filtered") {
    const DatasetManifest m = generate_synthetic_dataset(small_synth(), 11, tmp("pairs"));
    const AugmentationPolicy policy = AugmentationPolicy::make(AugmentationSetting::SingleFilter);
    DatasetReader reader;

    Rng rng1(42), rng2(42);
    const TrainingPair p1 = sample_training_pair(m, policy, rng1, reader, 4096);
    const TrainingPair p2 = sample_training_pair(m, policy, rng2, reader, 4096);
    CHECK(p1.file_index == p2.file_index);
    CHECK(p1.offset == p2.offset);
    CHECK(p1.filter_index == p2.filter_index);
    CHECK(p1.input->data == p2.input->data);
    CHECK(p1.target->data == p2.target->data);
    CHECK(p1.filter_index == 0);  // single-filter: always chebyshev1-6

    // input equals the filter applied to the target chunk
    AudioClip chunk = AudioClip::silence(4096);
    for (int c = 0; c < 2; ++c)
        std::copy(p1.target->row(0, c), p1.target->row(0, c) + 4096,
                  chunk.ch[c].begin());
    const AudioClip filtered = apply_filter(policy.bank[0], chunk);
    for (int c = 0; c < 2; ++c)
        for (int i = 0; i < 4096; ++i)
            CHECK(p1.input->row(0, c)[i] == filtered.ch[c][i]);
}

TEST_CASE("multi-filter draws are uniform over the bank") {
    const DatasetManifest m = generate_synthetic_dataset(small_synth(), 13, tmp("uniform"));
    const AugmentationPolicy policy = AugmentationPolicy::make(AugmentationSetting::MultiFilter);
    REQUIRE(policy.bank.size() == 8);
    DatasetReader reader;
    Rng rng(5);
    std::array<int, 8> counts{};
    const int draws = 10000;
    for (int i = 0; i < draws; ++i) {
        const TrainingPair p = sample_training_pair(m, policy, rng, reader, 1024);
        counts[p.filter_index]++;
    }
    for (int c : counts)
        CHECK(std::abs(double(c) / draws - 0.125) < 0.02);
}

TEST_CASE("sampling fails when every file is too short") {
    const DatasetManifest m = generate_synthetic_dataset(small_synth(), 15, tmp("short"));
    const AugmentationPolicy policy = AugmentationPolicy::make(AugmentationSetting::SingleFilter);
    DatasetReader reader;
    Rng rng(1);
    CHECK_THROWS(sample_training_pair(m, policy, rng, reader, 1 << 20));
}

// ---------------------------------------------------------------------------
// validation excerpts
// ---------------------------------------------------------------------------

TEST_CASE("validation excerpts follow the per-song filter assignment") {
    SynthSpec spec = small_synth();
    spec.validation_clips = 8;
    spec.validation_dur_s = 2.0;
    const DatasetManifest m = generate_synthetic_dataset(spec, 17, tmp("valA"));
    DatasetReader reader;

    const AugmentationPolicy multi = AugmentationPolicy::make(AugmentationSetting::MultiFilter);
    const auto ex = validation_excerpts(m, multi, reader, 0.5, 1.0);
    REQUIRE(ex.size() == 8);
    for (int i = 0; i < 8; ++i) {
        CHECK(ex[i].seen_filter_index == i);  // bank order, one per song
        CHECK(ex[i].target.frames() == std::size_t(1.0 * 44100));
        // unseen input: butterworth-6 applied to the target
        const SosCascade butter = design_lowpass(unseen_filter());
        const AudioClip want = apply_filter(butter, ex[i].target);
        CHECK(ex[i].input_unseen.ch[0] == want.ch[0]);
    }

    const AugmentationPolicy single = AugmentationPolicy::make(AugmentationSetting::SingleFilter);
    const auto ex_single = validation_excerpts(m, single, reader, 0.5, 1.0);
    for (const auto& e : ex_single) CHECK(e.seen_filter_index == 0);
}

TEST_CASE("validation excerpt at the paper window needs 16 s songs") {
    SynthSpec spec = small_synth();  // 1 s clips
    const DatasetManifest m = generate_synthetic_dataset(spec, 19, tmp("valB"));
    DatasetReader reader;
    const AugmentationPolicy single = AugmentationPolicy::make(AugmentationSetting::SingleFilter);
    CHECK_THROWS_WITH_AS(validation_excerpts(m, single, reader, 8.0, 8.0),
                         doctest::Contains("too short"), std::runtime_error);
}

TEST_CASE("excerpt length at paper defaults is 352800 samples") {
    SynthSpec spec;
    spec.train_clips = 1;
    spec.validation_clips = 1;
    spec.test_clips = 1;
    spec.train_dur_s = 0.5;
    spec.test_dur_s = 0.5;
    spec.validation_dur_s = 16.5;
    const DatasetManifest m = generate_synthetic_dataset(spec, 23, tmp("valC"));
    DatasetReader reader;
    const AugmentationPolicy single = AugmentationPolicy::make(AugmentationSetting::SingleFilter);
    const auto ex = validation_excerpts(m, single, reader);  // defaults: 8 s @ 8 s
    REQUIRE(ex.size() == 1);
    CHECK(ex[0].target.frames() == 352800);
}
