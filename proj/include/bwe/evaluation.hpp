#pragma once

#include "bwe/audio.hpp"
#include "bwe/data_pipeline.hpp"
#include "bwe/filter_design.hpp"
#include "bwe/models.hpp"

#include <string>
#include <vector>

namespace bwe {

enum class FilterCondition { Seen, Unseen };

std::string to_string(FilterCondition c);

// 10*log10(||x||^2 / ||x - x_hat||^2), 2-norm taken jointly over both stereo
// channels; zero error reports +infinity.
double snr_db(const AudioClip& reference, const AudioClip& estimate);

// Splits the song into non-overlapping chunks, zero-padding the final short
// chunk and cropping its output, then concatenates. Uses the network in its
// current mode; output length equals input length.
AudioClip chunked_inference(Network<float>& net, const AudioClip& song,
                            int chunk_len = 8192);

struct EvalRow {
    std::string song_id;
    double input_snr_db = 0.0;
    double output_snr_db = 0.0;
    double delta_snr_db = 0.0;
};

struct EvalReport {
    FilterCondition condition = FilterCondition::Seen;
    std::vector<EvalRow> rows;
    double mean_input_snr_db = 0.0;
    double mean_output_snr_db = 0.0;
    double mean_delta_snr_db = 0.0;
    std::vector<std::string> warnings;  // unreadable files, one note each

    void finalize();  // recomputes the means from the rows
};

// For each song of the split: input = filter(condition) applied to the song,
// output = chunked inference on the input, SNRs against the original song.
// `condition_filter` is chebyshev1-6 for Seen, butterworth-6 for Unseen
// unless a custom cascade is supplied.
EvalReport evaluate_split(Network<float>& net, const DatasetManifest& manifest,
                          Split split, FilterCondition condition,
                          DatasetReader& reader, int chunk_len = 8192);

// CSV: song_id,condition,input_snr_db,output_snr_db,delta_snr_db with a final
// MEAN row. +inf serializes as `inf`.
void write_report_csv(const EvalReport& report, const std::string& path);
EvalReport read_report_csv(const std::string& path);

// ---------------------------------------------------------------------------
// spectrograms (1024-sample Hann window, 50% overlap)
// ---------------------------------------------------------------------------

struct Spectrogram {
    int window = 1024;
    int hop = 512;
    std::size_t frames = 0;
    std::size_t bins = 513;
    std::vector<double> mag_db;  // frames x bins, floored at -300 dB

    double at(std::size_t frame, std::size_t bin) const {
        return mag_db[frame * bins + bin];
    }
};

// Stereo is downmixed to mono by averaging before analysis.
Spectrogram spectrogram(const AudioClip& clip);

// |mag_a - mag_b| on linear magnitudes, then dB.
Spectrogram diff_spectrogram(const AudioClip& a, const AudioClip& b);

// CSV matrix (one frame per row) and 8-bit PGM with the dB range [-100, 0].
void write_spectrogram_csv(const Spectrogram& s, const std::string& path);
void write_spectrogram_pgm(const Spectrogram& s, const std::string& path);

}  // namespace bwe
