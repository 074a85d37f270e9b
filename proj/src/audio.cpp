#include "bwe/audio.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace bwe {

namespace {

struct WavInfo {
    std::uint16_t format = 0;      // 1 = PCM, 3 = IEEE float
    std::uint16_t channels = 0;
    std::uint32_t sample_rate = 0;
    std::uint16_t bits = 0;
    std::streamoff data_offset = 0;
    std::uint32_t data_bytes = 0;
};

std::uint32_t rd_u32(const unsigned char* p) {
    return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 |
           std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
}
std::uint16_t rd_u16(const unsigned char* p) {
    return std::uint16_t(p[0]) | std::uint16_t(p[1]) << 8;
}

WavInfo parse_header(std::ifstream& f, const std::string& path) {
    unsigned char hdr[12];
    if (!f.read(reinterpret_cast<char*>(hdr), 12))
        throw WavError(path + ": truncated file, missing RIFF header");
    if (std::memcmp(hdr, "RIFF", 4) != 0)
        throw WavError(path + ": missing RIFF chunk");
    if (std::memcmp(hdr + 8, "WAVE", 4) != 0)
        throw WavError(path + ": missing WAVE form type");

    WavInfo info;
    bool have_fmt = false;
    for (;;) {
        unsigned char chdr[8];
        if (!f.read(reinterpret_cast<char*>(chdr), 8)) {
            if (!have_fmt) throw WavError(path + ": missing fmt chunk");
            throw WavError(path + ": missing data chunk");
        }
        const std::uint32_t size = rd_u32(chdr + 4);
        if (std::memcmp(chdr, "fmt ", 4) == 0) {
            if (size < 16) throw WavError(path + ": fmt chunk too small");
            unsigned char fmt[16];
            if (!f.read(reinterpret_cast<char*>(fmt), 16))
                throw WavError(path + ": truncated fmt chunk");
            info.format = rd_u16(fmt);
            info.channels = rd_u16(fmt + 2);
            info.sample_rate = rd_u32(fmt + 4);
            info.bits = rd_u16(fmt + 14);
            f.seekg(size - 16 + (size & 1), std::ios::cur);
            have_fmt = true;
        } else if (std::memcmp(chdr, "data", 4) == 0) {
            if (!have_fmt) throw WavError(path + ": data chunk before fmt chunk");
            info.data_offset = f.tellg();
            info.data_bytes = size;
            return info;
        } else {
            f.seekg(size + (size & 1), std::ios::cur);
        }
        if (!f) throw WavError(path + ": truncated chunk list");
    }
}

void validate_format(const WavInfo& info, const std::string& path,
                     double expected_rate) {
    if (info.format == 1) {
        if (info.bits != 16)
            throw WavError(path + ": unsupported PCM depth " + std::to_string(info.bits) +
                           " (only 16-bit PCM and 32-bit float supported)");
    } else if (info.format == 3) {
        if (info.bits != 32)
            throw WavError(path + ": unsupported float depth " + std::to_string(info.bits));
    } else {
        throw WavError(path + ": unsupported encoding tag " + std::to_string(info.format));
    }
    if (info.channels < 1 || info.channels > 2)
        throw WavError(path + ": unsupported channel count " + std::to_string(info.channels));
    if (expected_rate > 0.0 &&
        info.sample_rate != static_cast<std::uint32_t>(expected_rate))
        throw WavError(path + ": sample rate " + std::to_string(info.sample_rate) +
                       " Hz, expected " + std::to_string(static_cast<int>(expected_rate)));
}

void wr_u32(std::ofstream& f, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v),
                          static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    f.write(reinterpret_cast<char*>(b), 4);
}
void wr_u16(std::ofstream& f, std::uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v),
                          static_cast<unsigned char>(v >> 8)};
    f.write(reinterpret_cast<char*>(b), 2);
}

}  // namespace

AudioClip load_wav(const std::string& path, double expected_rate) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw WavError(path + ": cannot open file");
    const WavInfo info = parse_header(f, path);
    validate_format(info, path, expected_rate);

    const std::size_t bytes_per_sample = info.bits / 8;
    const std::size_t frame_bytes = bytes_per_sample * info.channels;
    const std::size_t frames = info.data_bytes / frame_bytes;

    std::vector<unsigned char> raw(info.data_bytes);
    f.seekg(info.data_offset);
    if (!f.read(reinterpret_cast<char*>(raw.data()), info.data_bytes))
        throw WavError(path + ": truncated data chunk");

    AudioClip clip;
    clip.sample_rate_hz = info.sample_rate;
    clip.ch[0].resize(frames);
    clip.ch[1].resize(frames);

    const int nch = info.channels;
    for (std::size_t i = 0; i < frames; ++i) {
        for (int c = 0; c < nch; ++c) {
            const unsigned char* p = raw.data() + (i * nch + c) * bytes_per_sample;
            float v;
            if (info.format == 1) {
                const std::int16_t s = static_cast<std::int16_t>(rd_u16(p));
                v = static_cast<float>(s) / 32768.0f;
            } else {
                std::uint32_t u = rd_u32(p);
                std::memcpy(&v, &u, 4);
            }
            clip.ch[c][i] = v;
        }
    }
    if (nch == 1) {
        std::fprintf(stderr, "warning: %s is mono, duplicating to stereo\n",
                     path.c_str());
        clip.ch[1] = clip.ch[0];
    }
    return clip;
}

void save_wav(const AudioClip& clip, const std::string& path, WavFormat format) {
    if (clip.ch[0].size() != clip.ch[1].size())
        throw WavError(path + ": channel length mismatch");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw WavError(path + ": cannot create file");

    const std::uint32_t frames = static_cast<std::uint32_t>(clip.frames());
    const std::uint16_t bits = format == WavFormat::Pcm16 ? 16 : 32;
    const std::uint16_t block = static_cast<std::uint16_t>(2 * bits / 8);
    const std::uint32_t data_bytes = frames * block;
    const std::uint32_t rate = static_cast<std::uint32_t>(clip.sample_rate_hz);

    f.write("RIFF", 4);
    wr_u32(f, 36 + data_bytes);
    f.write("WAVE", 4);
    f.write("fmt ", 4);
    wr_u32(f, 16);
    wr_u16(f, format == WavFormat::Pcm16 ? 1 : 3);
    wr_u16(f, 2);
    wr_u32(f, rate);
    wr_u32(f, rate * block);
    wr_u16(f, block);
    wr_u16(f, bits);
    f.write("data", 4);
    wr_u32(f, data_bytes);

    for (std::uint32_t i = 0; i < frames; ++i) {
        for (int c = 0; c < 2; ++c) {
            const float v = clip.ch[c][i];
            if (format == WavFormat::Pcm16) {
                double q = std::lround(double(v) * 32768.0);
                q = std::min(32767.0, std::max(-32768.0, q));
                wr_u16(f, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
            } else {
                std::uint32_t u;
                std::memcpy(&u, &v, 4);
                wr_u32(f, u);
            }
        }
    }
    if (!f) throw WavError(path + ": write failure");
}

std::size_t wav_frame_count(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw WavError(path + ": cannot open file");
    const WavInfo info = parse_header(f, path);
    validate_format(info, path, 0.0);
    return info.data_bytes / (std::size_t(info.bits / 8) * info.channels);
}

}  // namespace bwe
