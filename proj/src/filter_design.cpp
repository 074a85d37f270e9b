#include "bwe/filter_design.hpp"

#include "bwe/audio.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace bwe {

namespace {

using cplx = std::complex<double>;
constexpr double kPi = std::numbers::pi;
constexpr double kDbFloor = -300.0;

// ---------------------------------------------------------------------------
// analog prototypes
// ---------------------------------------------------------------------------

AnalogPrototype butterworth_proto(int n) {
    AnalogPrototype p;
    for (int i = 1; i <= n; ++i) {
        const double theta = kPi * (2.0 * i + n - 1.0) / (2.0 * n);
        p.poles.emplace_back(std::cos(theta), std::sin(theta));
    }
    p.gain = 1.0;
    return p;
}

AnalogPrototype chebyshev1_proto(int n, double rp_db) {
    if (rp_db <= 0.0)
        throw std::invalid_argument("chebyshev1: passband ripple must be positive");
    AnalogPrototype p;
    const double eps = std::sqrt(std::pow(10.0, rp_db / 10.0) - 1.0);
    const double mu = std::asinh(1.0 / eps) / n;
    for (int i = 1; i <= n; ++i) {
        const double theta = kPi * (2.0 * i - 1.0) / (2.0 * n);
        p.poles.emplace_back(-std::sinh(mu) * std::sin(theta),
                             std::cosh(mu) * std::cos(theta));
    }
    cplx prod(1.0, 0.0);
    for (const auto& pole : p.poles) prod *= -pole;
    p.gain = prod.real();
    if (n % 2 == 0) p.gain /= std::sqrt(1.0 + eps * eps);
    return p;
}

// Reverse Bessel polynomial theta_n coefficients (monic, exact in double for
// the orders used here) via theta_n = (2n-1) theta_{n-1} + s^2 theta_{n-2}.
std::vector<double> reverse_bessel_coeffs(int n) {
    std::vector<double> prev2 = {1.0};        // theta_0
    std::vector<double> prev1 = {1.0, 1.0};   // theta_1 (ascending powers)
    if (n == 0) return prev2;
    if (n == 1) return prev1;
    for (int m = 2; m <= n; ++m) {
        std::vector<double> cur(m + 1, 0.0);
        for (int i = 0; i <= m - 1; ++i) cur[i] += (2.0 * m - 1.0) * prev1[i];
        for (int i = 0; i <= m - 2; ++i) cur[i + 2] += prev2[i];
        prev2 = std::move(prev1);
        prev1 = std::move(cur);
    }
    return prev1;
}

cplx poly_eval(const std::vector<double>& coeffs, cplx s) {
    cplx acc(0.0, 0.0);
    for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) acc = acc * s + *it;
    return acc;
}

// Durand-Kerner root finding for a monic polynomial with real coefficients,
// followed by Newton polishing. The Bessel roots are simple and well
// separated, so this converges quickly.
std::vector<cplx> poly_roots(const std::vector<double>& coeffs) {
    const int n = static_cast<int>(coeffs.size()) - 1;
    std::vector<cplx> r(n);
    const double radius = std::pow(std::abs(coeffs[0]), 1.0 / n);
    for (int i = 0; i < n; ++i) {
        const double ang = 2.0 * kPi * i / n + 0.4;
        r[i] = radius * cplx(std::cos(ang), std::sin(ang));
    }
    for (int iter = 0; iter < 500; ++iter) {
        double max_step = 0.0;
        for (int i = 0; i < n; ++i) {
            cplx denom(1.0, 0.0);
            for (int j = 0; j < n; ++j)
                if (j != i) denom *= (r[i] - r[j]);
            const cplx step = poly_eval(coeffs, r[i]) / denom;
            r[i] -= step;
            max_step = std::max(max_step, std::abs(step));
        }
        if (max_step < 1e-14 * radius) break;
    }
    // Newton polish + pair conjugates exactly
    std::vector<double> deriv(n);
    for (int i = 1; i <= n; ++i) deriv[i - 1] = coeffs[i] * i;
    for (auto& root : r)
        for (int it = 0; it < 3; ++it)
            root -= poly_eval(coeffs, root) / poly_eval(deriv, root);
    for (auto& root : r)
        if (std::abs(root.imag()) < 1e-9 * std::abs(root.real()))
            root = cplx(root.real(), 0.0);
    return r;
}

AnalogPrototype bessel_proto(int n, BesselNorm norm) {
    AnalogPrototype p;
    const std::vector<double> theta = reverse_bessel_coeffs(n);
    p.poles = poly_roots(theta);

    // canonicalize conjugate symmetry
    for (auto& pole : p.poles)
        if (pole.imag() > 0) {
            for (auto& other : p.poles)
                if (&other != &pole && std::abs(other - std::conj(pole)) <
                                           1e-6 * std::abs(pole)) {
                    other = std::conj(pole);
                    break;
                }
        }

    // delay-normalized roots -> phase normalization: scale so the asymptotes
    // cross at 1 (divide by theta_n(0)^(1/n))
    const double scale = std::pow(theta[0], 1.0 / n);
    for (auto& pole : p.poles) pole /= scale;

    if (norm == BesselNorm::Magnitude) {
        // find w where |H(jw)|^2 = 1/2 and rescale the poles to put it at 1
        auto mag2 = [&](double w) {
            cplx den(1.0, 0.0);
            for (const auto& pole : p.poles) den *= (cplx(0.0, w) - pole);
            double num = 1.0;
            for (const auto& pole : p.poles) num *= std::abs(pole);
            const double h = num / std::abs(den);
            return h * h;
        };
        double lo = 1e-6, hi = 1.0;
        while (mag2(hi) > 0.5) hi *= 2.0;
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (lo + hi);
            (mag2(mid) > 0.5 ? lo : hi) = mid;
        }
        const double w3 = 0.5 * (lo + hi);
        for (auto& pole : p.poles) pole /= w3;
    }

    cplx prod(1.0, 0.0);
    for (const auto& pole : p.poles) prod *= -pole;
    p.gain = prod.real();
    return p;
}

// ---------------------------------------------------------------------------
// elliptic machinery (Landen transformations / Jacobi functions)
// ---------------------------------------------------------------------------

double agm(double a, double b) {
    for (int i = 0; i < 60 && std::abs(a - b) > 1e-17 * a; ++i) {
        const double an = 0.5 * (a + b);
        b = std::sqrt(a * b);
        a = an;
    }
    return a;
}

double complete_k(double k) {
    if (k < 0.0 || k >= 1.0)
        throw std::invalid_argument("complete_elliptic_k: modulus must be in [0,1)");
    const double kp = std::sqrt((1.0 - k) * (1.0 + k));
    return kPi / (2.0 * agm(1.0, kp));
}

// Descending Landen sequence k_1, k_2, ... until negligible.
std::vector<double> landen_seq(double k) {
    std::vector<double> v;
    while (k > 1e-16) {
        const double kp = std::sqrt((1.0 - k) * (1.0 + k));
        k = (k / (1.0 + kp));
        k = k * k;
        v.push_back(k);
        if (v.size() > 64) break;
    }
    return v;
}

// cd(u*K, k) via ascending Gauss transformation; u normalized by K(k).
cplx cde(cplx u, const std::vector<double>& landen) {
    cplx w = std::cos(u * (kPi / 2.0));
    for (auto it = landen.rbegin(); it != landen.rend(); ++it)
        w = (1.0 + *it) * w / (1.0 + *it * w * w);
    return w;
}

// sn(u*K, k), same recursion with the sine seed.
cplx sne(cplx u, const std::vector<double>& landen) {
    cplx w = std::sin(u * (kPi / 2.0));
    for (auto it = landen.rbegin(); it != landen.rend(); ++it)
        w = (1.0 + *it) * w / (1.0 + *it * w * w);
    return w;
}

// Inverse of sne: returns u (in units of K) with sn(u*K, k) = w.
cplx asne(cplx w, double k) {
    const std::vector<double> v = landen_seq(k);
    double kp = k;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double k1 = v[i];
        w = 2.0 * w / ((1.0 + k1) * (1.0 + std::sqrt(1.0 - kp * kp * w * w)));
        kp = k1;
    }
    return (2.0 / kPi) * std::asin(w);
}

// Nome q(k). Uses K'(k)/K(k) = agm(1,k')/agm(1,k) so the complementary
// modulus is never reconstructed from a value rounded near 1 (that loses
// seven digits for the tiny k1 of a 60 dB elliptic design).
double nome(double k) {
    const double kp = std::sqrt((1.0 - k) * (1.0 + k));
    return std::exp(-kPi * agm(1.0, kp) / agm(1.0, k));
}

// Degree equation: the modulus k with N = K(k) K'(k1) / (K'(k) K(k1)).
double ellipdeg(int n, double k1) {
    const double q1 = nome(k1);
    const double q = std::pow(q1, 1.0 / n);
    // theta function ratio (theta2/theta3)^2
    double num = 0.0, den = 0.0;
    for (int m = 0; m < 24; ++m)
        num += std::pow(q, m * (m + 1));  // q^(m(m+1)) for theta2 (q^{1/4} factored)
    for (int m = 1; m < 24; ++m) den += std::pow(q, m * m);
    const double k = 4.0 * std::sqrt(q) * std::pow(num / (1.0 + 2.0 * den), 2.0);
    return k;
}

AnalogPrototype elliptic_proto(int n, double rp_db, double rs_db) {
    if (rp_db <= 0.0 || rs_db <= 0.0)
        throw std::invalid_argument("elliptic: ripple and attenuation must be positive");
    if (rs_db <= rp_db)
        throw std::invalid_argument("elliptic: stopband attenuation must exceed passband ripple");
    const double eps_p = std::sqrt(std::pow(10.0, rp_db / 10.0) - 1.0);
    const double eps_s = std::sqrt(std::pow(10.0, rs_db / 10.0) - 1.0);
    const double k1 = eps_p / eps_s;
    const double k = ellipdeg(n, k1);
    const std::vector<double> lk = landen_seq(k);

    AnalogPrototype p;
    const int pair_count = n / 2;
    const int odd = n % 2;

    // v0 solves sn(j v0 N K1, k1) = j / eps_p
    const cplx v0 = -cplx(0.0, 1.0) * asne(cplx(0.0, 1.0 / eps_p), k1) / double(n);

    for (int i = 1; i <= pair_count; ++i) {
        const double ui = (2.0 * i - 1.0) / n;
        const double zeta = cde(cplx(ui, 0.0), lk).real();
        const double zim = 1.0 / (k * zeta);
        p.zeros.emplace_back(0.0, zim);
        p.zeros.emplace_back(0.0, -zim);
        const cplx pole = cplx(0.0, 1.0) * cde(cplx(ui, 0.0) - cplx(0.0, 1.0) * v0, lk);
        p.poles.push_back(pole);
        p.poles.push_back(std::conj(pole));
    }
    if (odd) {
        const cplx p0 = cplx(0.0, 1.0) * sne(cplx(0.0, 1.0) * v0, lk);
        p.poles.emplace_back(p0.real(), 0.0);
    }

    cplx num(1.0, 0.0), den(1.0, 0.0);
    for (const auto& pole : p.poles) num *= -pole;
    for (const auto& zero : p.zeros) den *= -zero;
    p.gain = (num / den).real();
    if (n % 2 == 0) p.gain /= std::sqrt(1.0 + eps_p * eps_p);
    return p;
}

// ---------------------------------------------------------------------------
// bilinear transform and section assembly
// ---------------------------------------------------------------------------

struct Zpk {
    std::vector<cplx> zeros, poles;
    double gain;
};

// s = (z-1)/(z+1): root r maps to (1+r)/(1-r); missing zeros land at z=-1.
Zpk bilinear(const AnalogPrototype& proto, double warped_cutoff) {
    Zpk d;
    cplx gain_num(1.0, 0.0), gain_den(1.0, 0.0);
    for (const auto& z : proto.zeros) {
        const cplx zs = z * warped_cutoff;
        d.zeros.push_back((1.0 + zs) / (1.0 - zs));
        gain_num *= (1.0 - zs);
    }
    for (const auto& p : proto.poles) {
        const cplx ps = p * warped_cutoff;
        d.poles.push_back((1.0 + ps) / (1.0 - ps));
        gain_den *= (1.0 - ps);
    }
    const int deficit = static_cast<int>(proto.poles.size() - proto.zeros.size());
    for (int i = 0; i < deficit; ++i) d.zeros.emplace_back(-1.0, 0.0);
    // scaling the unit-cutoff roots by wc multiplies the gain by
    // wc^(Np - Nz); the transform itself contributes prod(1-z)/prod(1-p)
    d.gain = proto.gain * std::pow(warped_cutoff, double(deficit)) *
             (gain_num / gain_den).real();
    return d;
}

// Conjugate-closed root list -> list of pairs (each a future biquad) plus
// possibly one real singleton.
struct RootPair {
    cplx a, b;
    bool single = false;  // only `a` is meaningful
    double radius() const { return single ? std::abs(a) : std::max(std::abs(a), std::abs(b)); }
};

std::vector<RootPair> pair_conjugates(std::vector<cplx> roots, const char* what) {
    std::vector<RootPair> pairs;
    std::vector<cplx> reals;
    std::vector<cplx> upper;
    for (const auto& r : roots) {
        if (std::abs(r.imag()) < 1e-10)
            reals.emplace_back(r.real(), 0.0);
        else if (r.imag() > 0)
            upper.push_back(r);
    }
    // match each upper-half root with its conjugate
    std::size_t lower_count = roots.size() - reals.size() - upper.size();
    if (lower_count != upper.size())
        throw std::runtime_error(std::string("root pairing failed: unmatched complex ") + what);
    for (const auto& r : upper) pairs.push_back({r, std::conj(r), false});
    std::sort(reals.begin(), reals.end(),
              [](const cplx& x, const cplx& y) { return x.real() < y.real(); });
    while (reals.size() >= 2) {
        pairs.push_back({reals[0], reals[1], false});
        reals.erase(reals.begin(), reals.begin() + 2);
    }
    if (!reals.empty()) pairs.push_back({reals[0], cplx(0, 0), true});
    return pairs;
}

SosCascade to_sections(const Zpk& d) {
    std::vector<RootPair> pole_pairs = pair_conjugates(d.poles, "poles");
    std::vector<RootPair> zero_pairs = pair_conjugates(d.zeros, "zeros");

    // nearest-zero-pair assignment, processed from the pole pair closest to
    // the unit circle down
    std::sort(pole_pairs.begin(), pole_pairs.end(),
              [](const RootPair& x, const RootPair& y) { return x.radius() > y.radius(); });

    struct Section {
        RootPair p, z;
        bool has_zero = false;
    };
    std::vector<Section> sections;
    for (const auto& pp : pole_pairs) {
        Section s;
        s.p = pp;
        if (!zero_pairs.empty()) {
            std::size_t best = 0;
            double best_dist = std::numeric_limits<double>::max();
            for (std::size_t i = 0; i < zero_pairs.size(); ++i) {
                const double dist = std::abs(pp.a - zero_pairs[i].a);
                if (dist < best_dist) {
                    best_dist = dist;
                    best = i;
                }
            }
            s.z = zero_pairs[best];
            s.has_zero = true;
            zero_pairs.erase(zero_pairs.begin() + best);
        }
        sections.push_back(s);
    }
    if (!zero_pairs.empty())
        throw std::runtime_error("root pairing failed: more zeros than pole sections");

    std::sort(sections.begin(), sections.end(), [](const Section& x, const Section& y) {
        return x.p.radius() < y.p.radius();
    });

    SosCascade out;
    for (const auto& s : sections) {
        Biquad q;
        if (s.p.single) {
            q.a1 = -s.p.a.real();
            q.a2 = 0.0;
        } else {
            q.a1 = -(s.p.a + s.p.b).real();
            q.a2 = (s.p.a * s.p.b).real();
        }
        if (!s.has_zero) {
            q.b0 = 1.0;
            q.b1 = 0.0;
            q.b2 = 0.0;
        } else if (s.z.single) {
            q.b0 = 1.0;
            q.b1 = -s.z.a.real();
            q.b2 = 0.0;
        } else {
            q.b0 = 1.0;
            q.b1 = -(s.z.a + s.z.b).real();
            q.b2 = (s.z.a * s.z.b).real();
        }
        out.sections.push_back(q);
    }
    if (!out.sections.empty()) {
        out.sections.front().b0 *= d.gain;
        out.sections.front().b1 *= d.gain;
        out.sections.front().b2 *= d.gain;
    }
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// public surface
// ---------------------------------------------------------------------------

std::string to_string(FilterFamily family) {
    switch (family) {
        case FilterFamily::Butterworth: return "butterworth";
        case FilterFamily::Chebyshev1: return "chebyshev1";
        case FilterFamily::Bessel: return "bessel";
        case FilterFamily::Elliptic: return "elliptic";
    }
    return "?";
}

FilterFamily filter_family_from_string(const std::string& name) {
    if (name == "butterworth" || name == "butter") return FilterFamily::Butterworth;
    if (name == "chebyshev1" || name == "cheby1" || name == "chebyshev")
        return FilterFamily::Chebyshev1;
    if (name == "bessel") return FilterFamily::Bessel;
    if (name == "elliptic" || name == "ellip") return FilterFamily::Elliptic;
    throw std::invalid_argument("unknown filter family '" + name + "'");
}

void FilterSpec::validate() const {
    if (order < 1) throw std::invalid_argument("filter order must be >= 1");
    if (!(sample_rate_hz > 0.0))
        throw std::invalid_argument("sample rate must be positive");
    if (!(cutoff_hz > 0.0 && cutoff_hz < sample_rate_hz / 2.0))
        throw std::invalid_argument("cutoff must lie in (0, sample_rate/2)");
    const bool needs_rp =
        family == FilterFamily::Chebyshev1 || family == FilterFamily::Elliptic;
    const bool needs_rs = family == FilterFamily::Elliptic;
    if (needs_rp && !passband_ripple_db)
        throw std::invalid_argument(to_string(family) + " requires passband_ripple_db");
    if (needs_rs && !stopband_atten_db)
        throw std::invalid_argument("elliptic requires stopband_atten_db");
    if (!needs_rp && passband_ripple_db)
        throw std::invalid_argument(to_string(family) + " takes no passband ripple");
    if (!needs_rs && stopband_atten_db)
        throw std::invalid_argument(to_string(family) + " takes no stopband attenuation");
    if (passband_ripple_db && *passband_ripple_db <= 0.0)
        throw std::invalid_argument("passband ripple must be positive");
    if (stopband_atten_db && *stopband_atten_db <= 0.0)
        throw std::invalid_argument("stopband attenuation must be positive");
    if (family == FilterFamily::Elliptic && *stopband_atten_db <= *passband_ripple_db)
        throw std::invalid_argument("elliptic: rs must exceed rp");
}

std::string FilterSpec::label() const {
    return to_string(family) + "-" + std::to_string(order);
}

AnalogPrototype analog_prototype(FilterFamily family, int order,
                                 std::optional<double> rp,
                                 std::optional<double> rs,
                                 BesselNorm bessel_norm) {
    if (order < 1) throw std::invalid_argument("filter order must be >= 1");
    switch (family) {
        case FilterFamily::Butterworth:
            return butterworth_proto(order);
        case FilterFamily::Chebyshev1:
            if (!rp) throw std::invalid_argument("chebyshev1 requires passband ripple");
            return chebyshev1_proto(order, *rp);
        case FilterFamily::Bessel:
            return bessel_proto(order, bessel_norm);
        case FilterFamily::Elliptic:
            if (!rp || !rs)
                throw std::invalid_argument("elliptic requires rp and rs");
            return elliptic_proto(order, *rp, *rs);
    }
    throw std::invalid_argument("unknown filter family");
}

SosCascade design_lowpass(const FilterSpec& spec) {
    spec.validate();
    const AnalogPrototype proto =
        analog_prototype(spec.family, spec.order, spec.passband_ripple_db,
                         spec.stopband_atten_db, spec.bessel_norm);
    const double warped = std::tan(kPi * spec.cutoff_hz / spec.sample_rate_hz);
    const Zpk digital = bilinear(proto, warped);
    SosCascade sos = to_sections(digital);
    if (!sos.stable())
        throw std::runtime_error("designed cascade is unstable: " + spec.label());
    if (sos.sections.size() != static_cast<std::size_t>((spec.order + 1) / 2))
        throw std::runtime_error("unexpected section count for " + spec.label());
    return sos;
}

std::vector<double> magnitude_response(const SosCascade& cascade,
                                       std::span<const double> freqs_hz,
                                       double sample_rate_hz) {
    std::vector<double> out;
    out.reserve(freqs_hz.size());
    for (double f : freqs_hz) {
        if (f < 0.0 || f > sample_rate_hz / 2.0)
            throw std::invalid_argument("query frequency outside [0, fs/2]");
        const double w = 2.0 * kPi * f / sample_rate_hz;
        const cplx zinv = std::polar(1.0, -w);
        cplx h(1.0, 0.0);
        for (const auto& s : cascade.sections) {
            const cplx num = s.b0 + zinv * (s.b1 + zinv * s.b2);
            const cplx den = 1.0 + zinv * (s.a1 + zinv * s.a2);
            h *= num / den;
        }
        const double mag = std::abs(h);
        out.push_back(mag > 0.0 ? std::max(20.0 * std::log10(mag), kDbFloor)
                                : kDbFloor);
    }
    return out;
}

void apply_filter_inplace(const SosCascade& cascade, float* samples, std::size_t n) {
    for (const auto& s : cascade.sections) {
        double s1 = 0.0, s2 = 0.0;  // transposed direct form II state
        for (std::size_t i = 0; i < n; ++i) {
            const double x = samples[i];
            const double y = s.b0 * x + s1;
            s1 = s.b1 * x - s.a1 * y + s2;
            s2 = s.b2 * x - s.a2 * y;
            samples[i] = static_cast<float>(y);
        }
    }
}

AudioClip apply_filter(const SosCascade& cascade, const AudioClip& clip) {
    if (clip.frames() == 0) throw std::invalid_argument("apply_filter: empty clip");
    AudioClip out = clip;
    for (auto& channel : out.ch)
        apply_filter_inplace(cascade, channel.data(), channel.size());
    return out;
}

std::vector<FilterSpec> training_filter_bank(AugmentationSetting setting,
                                             double chebyshev_rp_db,
                                             double elliptic_rp_db,
                                             double elliptic_rs_db) {
    auto cheb = [&](int order) {
        FilterSpec s;
        s.family = FilterFamily::Chebyshev1;
        s.order = order;
        s.passband_ripple_db = chebyshev_rp_db;
        return s;
    };
    auto bessel = [&](int order) {
        FilterSpec s;
        s.family = FilterFamily::Bessel;
        s.order = order;
        return s;
    };
    auto ellip = [&](int order) {
        FilterSpec s;
        s.family = FilterFamily::Elliptic;
        s.order = order;
        s.passband_ripple_db = elliptic_rp_db;
        s.stopband_atten_db = elliptic_rs_db;
        return s;
    };
    if (setting == AugmentationSetting::SingleFilter) return {cheb(6)};
    return {cheb(6), cheb(8), cheb(10), cheb(12),
            bessel(6), bessel(12), ellip(6), ellip(12)};
}

FilterSpec unseen_filter() {
    FilterSpec s;
    s.family = FilterFamily::Butterworth;
    s.order = 6;
    return s;
}

double elliptic_stopband_edge_hz(const FilterSpec& spec) {
    if (spec.family != FilterFamily::Elliptic)
        throw std::invalid_argument("stopband edge defined for elliptic filters");
    spec.validate();
    const double eps_p = std::sqrt(std::pow(10.0, *spec.passband_ripple_db / 10.0) - 1.0);
    const double eps_s = std::sqrt(std::pow(10.0, *spec.stopband_atten_db / 10.0) - 1.0);
    const double k = ellipdeg(spec.order, eps_p / eps_s);
    const double warped = std::tan(kPi * spec.cutoff_hz / spec.sample_rate_hz);
    const double ws = warped / k;  // analog stopband corner
    return std::atan(ws) * spec.sample_rate_hz / kPi;
}

namespace detail {
double complete_elliptic_k(double k) { return complete_k(k); }
double elliptic_degree(int n, double k1) { return ellipdeg(n, k1); }
std::complex<double> jacobi_cd(std::complex<double> u, double k) {
    return cde(u, landen_seq(k));
}
std::complex<double> jacobi_sn(std::complex<double> u, double k) {
    return sne(u, landen_seq(k));
}
std::complex<double> inverse_sn(std::complex<double> w, double k) {
    return asne(w, k);
}
}  // namespace detail

}  // namespace bwe
