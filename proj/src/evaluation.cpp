#include "bwe/evaluation.hpp"

#include "bwe/fft.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

namespace bwe {

std::string to_string(FilterCondition c) {
    return c == FilterCondition::Seen ? "seen" : "unseen";
}

double snr_db(const AudioClip& reference, const AudioClip& estimate) {
    if (reference.frames() != estimate.frames())
        throw std::invalid_argument("snr: length mismatch");
    double sig = 0.0, err = 0.0;
    for (int c = 0; c < 2; ++c) {
        const auto& r = reference.ch[c];
        const auto& e = estimate.ch[c];
        for (std::size_t i = 0; i < r.size(); ++i) {
            sig += double(r[i]) * double(r[i]);
            const double d = double(r[i]) - double(e[i]);
            err += d * d;
        }
    }
    if (sig == 0.0) throw std::invalid_argument("snr: all-zero reference");
    if (err == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(sig / err);
}

AudioClip chunked_inference(Network<float>& net, const AudioClip& song,
                            int chunk_len) {
    const std::size_t n = song.frames();
    if (n == 0) throw std::invalid_argument("chunked_inference: empty song");
    AudioClip out;
    out.sample_rate_hz = song.sample_rate_hz;
    out.ch[0].resize(n);
    out.ch[1].resize(n);

    auto chunk = make_tensor<float>(1, 2, chunk_len);
    for (std::size_t start = 0; start < n; start += chunk_len) {
        const std::size_t take = std::min<std::size_t>(chunk_len, n - start);
        for (int c = 0; c < 2; ++c) {
            float* dst = chunk->row(0, c);
            std::copy(song.ch[c].begin() + start, song.ch[c].begin() + start + take, dst);
            std::fill(dst + take, dst + chunk_len, 0.0f);
        }
        const TensorPtr<float> y = net.forward(nullptr, chunk);
        for (int c = 0; c < 2; ++c)
            std::copy(y->row(0, c), y->row(0, c) + take, out.ch[c].begin() + start);
    }
    return out;
}

void EvalReport::finalize() {
    double in = 0.0, outv = 0.0, delta = 0.0;
    for (const auto& r : rows) {
        in += r.input_snr_db;
        outv += r.output_snr_db;
        delta += r.delta_snr_db;
    }
    const double n = rows.empty() ? 1.0 : double(rows.size());
    mean_input_snr_db = in / n;
    mean_output_snr_db = outv / n;
    mean_delta_snr_db = delta / n;
}

EvalReport evaluate_split(Network<float>& net, const DatasetManifest& manifest,
                          Split split, FilterCondition condition,
                          DatasetReader& reader, int chunk_len) {
    auto entries = manifest.split_entries(split);
    if (entries.empty())
        throw std::runtime_error("evaluate: split '" + to_string(split) + "' is empty");

    const FilterSpec spec = condition == FilterCondition::Seen
                                ? training_filter_bank(AugmentationSetting::SingleFilter)[0]
                                : unseen_filter();
    const SosCascade cascade = design_lowpass(spec);

    EvalReport report;
    report.condition = condition;
    for (const auto* e : entries) {
        try {
            const AudioClip& target = reader.get(e->path);
            const AudioClip input = apply_filter(cascade, target);
            const AudioClip output = chunked_inference(net, input, chunk_len);
            EvalRow row;
            row.song_id = e->path;
            row.input_snr_db = snr_db(target, input);
            row.output_snr_db = snr_db(target, output);
            row.delta_snr_db = row.output_snr_db - row.input_snr_db;
            report.rows.push_back(std::move(row));
        } catch (const WavError& err) {
            std::fprintf(stderr, "warning: skipping %s: %s\n", e->path.c_str(),
                         err.what());
            report.warnings.emplace_back(err.what());
        }
    }
    std::sort(report.rows.begin(), report.rows.end(),
              [](const EvalRow& a, const EvalRow& b) { return a.song_id < b.song_id; });
    report.finalize();
    return report;
}

namespace {

std::string fmt_db(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

double parse_db(const std::string& s) {
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    return std::stod(s);
}

}  // namespace

void write_report_csv(const EvalReport& report, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("report: cannot create " + path);
    f << "song_id,condition,input_snr_db,output_snr_db,delta_snr_db\n";
    for (const auto& r : report.rows)
        f << r.song_id << ',' << to_string(report.condition) << ','
          << fmt_db(r.input_snr_db) << ',' << fmt_db(r.output_snr_db) << ','
          << fmt_db(r.delta_snr_db) << '\n';
    f << "MEAN," << to_string(report.condition) << ','
      << fmt_db(report.mean_input_snr_db) << ',' << fmt_db(report.mean_output_snr_db)
      << ',' << fmt_db(report.mean_delta_snr_db) << '\n';
}

EvalReport read_report_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("report: cannot open " + path);
    EvalReport report;
    std::string line;
    std::getline(f, line);  // header
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string song, cond, in, out, delta;
        std::getline(ss, song, ',');
        std::getline(ss, cond, ',');
        std::getline(ss, in, ',');
        std::getline(ss, out, ',');
        std::getline(ss, delta, ',');
        report.condition = cond == "seen" ? FilterCondition::Seen : FilterCondition::Unseen;
        if (song == "MEAN") {
            report.mean_input_snr_db = parse_db(in);
            report.mean_output_snr_db = parse_db(out);
            report.mean_delta_snr_db = parse_db(delta);
        } else {
            EvalRow row;
            row.song_id = song;
            row.input_snr_db = parse_db(in);
            row.output_snr_db = parse_db(out);
            row.delta_snr_db = parse_db(delta);
            report.rows.push_back(std::move(row));
        }
    }
    return report;
}

// ---------------------------------------------------------------------------
// spectrograms
// ---------------------------------------------------------------------------

namespace {

constexpr double kSpecFloorDb = -300.0;

// linear magnitudes, frames x 513
std::vector<double> stft_mag(const AudioClip& clip, std::size_t& frames) {
    const int window = 1024, hop = 512;
    const std::size_t n = clip.frames();
    if (n < static_cast<std::size_t>(window))
        throw std::invalid_argument("spectrogram: clip shorter than one window");
    frames = (n - window) / hop + 1;

    // periodic Hann satisfies constant-overlap-add at 50% hop
    std::vector<double> hann(window);
    for (int i = 0; i < window; ++i)
        hann[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / window);

    std::vector<double> mono(n);
    for (std::size_t i = 0; i < n; ++i)
        mono[i] = 0.5 * (double(clip.ch[0][i]) + double(clip.ch[1][i]));

    std::vector<double> mag(frames * 513);
    std::vector<std::complex<double>> buf(window);
    for (std::size_t fidx = 0; fidx < frames; ++fidx) {
        const double* src = mono.data() + fidx * hop;
        for (int i = 0; i < window; ++i) buf[i] = src[i] * hann[i];
        fft_inplace(buf);
        for (int b = 0; b <= window / 2; ++b)
            mag[fidx * 513 + b] = std::abs(buf[b]);
    }
    return mag;
}

double to_db_floored(double mag) {
    if (mag <= 0.0) return kSpecFloorDb;
    return std::max(20.0 * std::log10(mag), kSpecFloorDb);
}

}  // namespace

Spectrogram spectrogram(const AudioClip& clip) {
    Spectrogram s;
    std::vector<double> mag = stft_mag(clip, s.frames);
    s.mag_db.resize(mag.size());
    for (std::size_t i = 0; i < mag.size(); ++i) s.mag_db[i] = to_db_floored(mag[i]);
    return s;
}

Spectrogram diff_spectrogram(const AudioClip& a, const AudioClip& b) {
    Spectrogram s;
    std::size_t frames_a = 0, frames_b = 0;
    std::vector<double> ma = stft_mag(a, frames_a);
    std::vector<double> mb = stft_mag(b, frames_b);
    if (frames_a != frames_b)
        throw std::invalid_argument("diff_spectrogram: clips differ in length");
    s.frames = frames_a;
    s.mag_db.resize(ma.size());
    for (std::size_t i = 0; i < ma.size(); ++i)
        s.mag_db[i] = to_db_floored(std::abs(ma[i] - mb[i]));
    return s;
}

void write_spectrogram_csv(const Spectrogram& s, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("spectrogram: cannot create " + path);
    for (std::size_t fr = 0; fr < s.frames; ++fr) {
        for (std::size_t b = 0; b < s.bins; ++b) {
            if (b) f << ',';
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%.6g", s.at(fr, b));
            f << buf;
        }
        f << '\n';
    }
}

void write_spectrogram_pgm(const Spectrogram& s, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("spectrogram: cannot create " + path);
    // rows are frequency bins, top row = Nyquist; columns are frames
    f << "P5\n" << s.frames << ' ' << s.bins << "\n255\n";
    for (std::size_t b = 0; b < s.bins; ++b) {
        const std::size_t bin = s.bins - 1 - b;
        for (std::size_t fr = 0; fr < s.frames; ++fr) {
            const double db = std::clamp(s.at(fr, bin), -100.0, 0.0);
            const unsigned char v =
                static_cast<unsigned char>(std::lround((db + 100.0) / 100.0 * 255.0));
            f.put(static_cast<char>(v));
        }
    }
}

}  // namespace bwe
