#pragma once

#include <array>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace bwe {

// Stereo float samples in [-1, 1] at a known rate.
struct AudioClip {
    std::array<std::vector<float>, 2> ch;
    double sample_rate_hz = 44100.0;

    std::size_t frames() const { return ch[0].size(); }

    static AudioClip silence(std::size_t frames, double rate = 44100.0) {
        AudioClip c;
        c.sample_rate_hz = rate;
        c.ch[0].assign(frames, 0.0f);
        c.ch[1].assign(frames, 0.0f);
        return c;
    }
};

struct WavError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class WavFormat { Pcm16, Float32 };

// Reads a RIFF/WAVE file: PCM 16-bit or IEEE float 32-bit, 1-2 channels.
// 16-bit samples are scaled by 1/32768. Mono is duplicated to stereo with a
// stderr warning. Rejects sample rates other than `expected_rate` (pass 0 to
// accept any).
AudioClip load_wav(const std::string& path, double expected_rate = 44100.0);

void save_wav(const AudioClip& clip, const std::string& path,
              WavFormat format = WavFormat::Pcm16);

// Number of frames read from the header alone (manifest duration scans).
std::size_t wav_frame_count(const std::string& path);

}  // namespace bwe
