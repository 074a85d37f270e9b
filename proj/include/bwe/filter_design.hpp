#pragma once

#include <complex>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace bwe {

struct AudioClip;

enum class FilterFamily { Butterworth, Chebyshev1, Bessel, Elliptic };

enum class BesselNorm {
    Phase,      // unit phase-midpoint frequency (the usual tool convention)
    Magnitude,  // -3 dB at the cutoff
};

enum class AugmentationSetting { SingleFilter, MultiFilter };

std::string to_string(FilterFamily family);
FilterFamily filter_family_from_string(const std::string& name);

// Low-pass filter description. Ripple fields are required for Chebyshev1
// (passband) and Elliptic (passband + stopband), disallowed otherwise.
struct FilterSpec {
    FilterFamily family = FilterFamily::Butterworth;
    int order = 1;
    double cutoff_hz = 11025.0;
    double sample_rate_hz = 44100.0;
    std::optional<double> passband_ripple_db;
    std::optional<double> stopband_atten_db;
    BesselNorm bessel_norm = BesselNorm::Phase;

    void validate() const;
    std::string label() const;  // e.g. "chebyshev1-6"
};

// Normalized (unit cutoff) analog low-pass prototype.
struct AnalogPrototype {
    std::vector<std::complex<double>> zeros;
    std::vector<std::complex<double>> poles;
    double gain = 1.0;
};

// One second-order section, denominator normalized to (1, a1, a2).
struct Biquad {
    double b0 = 1.0, b1 = 0.0, b2 = 0.0;
    double a1 = 0.0, a2 = 0.0;

    bool stable() const {
        // roots strictly inside the unit circle
        return std::abs(a2) < 1.0 && std::abs(a1) < 1.0 + a2;
    }
};

struct SosCascade {
    std::vector<Biquad> sections;

    bool stable() const {
        for (const auto& s : sections)
            if (!s.stable()) return false;
        return true;
    }

    static SosCascade identity() { return SosCascade{{Biquad{}}}; }
};

// Unit-cutoff analog prototype for the family. rp/rs in dB where required.
AnalogPrototype analog_prototype(FilterFamily family, int order,
                                 std::optional<double> rp = std::nullopt,
                                 std::optional<double> rs = std::nullopt,
                                 BesselNorm bessel_norm = BesselNorm::Phase);

// Digital low pass via prewarped bilinear transform; nearest pole/zero
// pairing, sections ordered by ascending pole radius, cascade gain in the
// first section.
SosCascade design_lowpass(const FilterSpec& spec);

// 20*log10 |H| at the query frequencies; exact nulls floor at -300 dB.
std::vector<double> magnitude_response(const SosCascade& cascade,
                                       std::span<const double> freqs_hz,
                                       double sample_rate_hz);

// Causal single-pass filtering, zero initial state, channels independent.
AudioClip apply_filter(const SosCascade& cascade, const AudioClip& clip);
void apply_filter_inplace(const SosCascade& cascade, float* samples, std::size_t n);

// The training banks of Table I plus the held-out Butterworth. All at
// cutoff 11025 Hz / fs 44100 Hz; chebyshev rp defaults to 0.05 dB and
// elliptic to rp 0.05 / rs 60 dB (configurable here, documented defaults).
std::vector<FilterSpec> training_filter_bank(AugmentationSetting setting,
                                             double chebyshev_rp_db = 0.05,
                                             double elliptic_rp_db = 0.05,
                                             double elliptic_rs_db = 60.0);
FilterSpec unseen_filter();

// Frequency (Hz) where the elliptic design's equiripple stopband begins.
double elliptic_stopband_edge_hz(const FilterSpec& spec);

namespace detail {
// Exposed for the unit tests of the elliptic machinery.
double complete_elliptic_k(double k);
double elliptic_degree(int n, double k1);
std::complex<double> jacobi_cd(std::complex<double> u, double k);  // u in units of K
std::complex<double> jacobi_sn(std::complex<double> u, double k);
std::complex<double> inverse_sn(std::complex<double> w, double k);  // result in units of K
}  // namespace detail

}  // namespace bwe
