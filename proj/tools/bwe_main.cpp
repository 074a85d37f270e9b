// bwe: bandwidth-extension experiment driver.
//
// Subcommands: design-filter, filter, gen-synth, train, evaluate,
// spectrogram, reproduce-desk. Exit codes: 0 success, 1 usage/config error,
// 2 runtime failure.

#include "bwe/audio.hpp"
#include "bwe/config.hpp"
#include "bwe/data_pipeline.hpp"
#include "bwe/evaluation.hpp"
#include "bwe/filter_design.hpp"
#include "bwe/kernels.hpp"
#include "bwe/training.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>

namespace fs = std::filesystem;
using namespace bwe;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

FilterSpec spec_from_flags(const std::string& family, int order, double cutoff,
                           double fs, std::optional<double> rp,
                           std::optional<double> rs, const std::string& bessel_norm) {
    FilterSpec spec;
    spec.family = filter_family_from_string(family);
    spec.order = order;
    spec.cutoff_hz = cutoff;
    spec.sample_rate_hz = fs;
    if (spec.family == FilterFamily::Chebyshev1)
        spec.passband_ripple_db = rp.value_or(0.05);
    if (spec.family == FilterFamily::Elliptic) {
        spec.passband_ripple_db = rp.value_or(0.05);
        spec.stopband_atten_db = rs.value_or(60.0);
    }
    if (bessel_norm == "mag")
        spec.bessel_norm = BesselNorm::Magnitude;
    else if (bessel_norm != "phase")
        throw UsageError("--bessel-norm must be 'phase' or 'mag'");
    try {
        spec.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    return spec;
}

void write_simple_provenance(const std::string& path, const std::string& command,
                             const std::map<std::string, std::string>& fields) {
    KeyValueConfig kv;
    for (const auto& [k, v] : fields) kv.set(k, v);
    kv.set("command", command);
    ExperimentConfig dummy;
    write_run_provenance(dummy, kv, path);
}

int cmd_design_filter(const std::string& family, int order, double cutoff,
                      double fs, std::optional<double> rp, std::optional<double> rs,
                      const std::string& bessel_norm, const std::string& out,
                      const std::string& coeffs_out, int points) {
    const FilterSpec spec = spec_from_flags(family, order, cutoff, fs, rp, rs, bessel_norm);
    const SosCascade sos = design_lowpass(spec);

    std::printf("# %s  fc=%g Hz  fs=%g Hz  sections=%zu\n", spec.label().c_str(),
                spec.cutoff_hz, spec.sample_rate_hz, sos.sections.size());
    std::printf("# b0, b1, b2, a1, a2\n");
    for (const auto& s : sos.sections)
        std::printf("%.17g, %.17g, %.17g, %.17g, %.17g\n", s.b0, s.b1, s.b2, s.a1, s.a2);
    if (!coeffs_out.empty()) {
        std::ofstream f(coeffs_out);
        if (!f) throw std::runtime_error("cannot create " + coeffs_out);
        f << "b0,b1,b2,a1,a2\n";
        for (const auto& s : sos.sections) {
            char buf[200];
            std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g,%.17g\n",
                          s.b0, s.b1, s.b2, s.a1, s.a2);
            f << buf;
        }
    }

    std::vector<double> freqs(points);
    for (int i = 0; i < points; ++i)
        freqs[i] = fs / 2.0 * double(i) / double(points - 1);
    const std::vector<double> mags = magnitude_response(sos, freqs, fs);
    std::ofstream f(out);
    if (!f) throw std::runtime_error("cannot create " + out);
    f << "freq_hz,magnitude_db\n";
    for (int i = 0; i < points; ++i) {
        char buf[80];
        std::snprintf(buf, sizeof(buf), "%.8g,%.8g\n", freqs[i], mags[i]);
        f << buf;
    }
    write_simple_provenance(out + ".run.json", "design-filter",
                            {{"filter", spec.label()}, {"out", out}});
    return 0;
}

int cmd_filter(const std::string& in, const std::string& out,
               const std::string& family, int order, double cutoff,
               std::optional<double> rp, std::optional<double> rs,
               const std::string& bessel_norm) {
    AudioClip clip = load_wav(in);
    const FilterSpec spec = spec_from_flags(family, order, cutoff,
                                            clip.sample_rate_hz, rp, rs, bessel_norm);
    const AudioClip filtered = apply_filter(design_lowpass(spec), clip);
    save_wav(filtered, out);
    write_simple_provenance(out + ".run.json", "filter",
                            {{"filter", spec.label()}, {"in", in}, {"out", out}});
    return 0;
}

int cmd_gen_synth(std::uint64_t seed, const std::string& out, int train, int val,
                  int test, double train_dur, double val_dur, double test_dur) {
    SynthSpec spec;
    spec.train_clips = train;
    spec.validation_clips = val;
    spec.test_clips = test;
    spec.train_dur_s = train_dur;
    spec.validation_dur_s = val_dur;
    spec.test_dur_s = test_dur;
    const DatasetManifest m = generate_synthetic_dataset(spec, seed, out);
    std::printf("wrote %zu clips under %s (manifest: %s)\n", m.entries.size(),
                out.c_str(), (fs::path(out) / "manifest.tsv").string().c_str());
    write_simple_provenance((fs::path(out) / "run.json").string(), "gen-synth",
                            {{"seed", std::to_string(seed)}, {"out", out}});
    return 0;
}

ExperimentConfig load_experiment(const std::string& config_path,
                                 const std::vector<std::string>& overrides,
                                 KeyValueConfig& kv_out) {
    try {
        KeyValueConfig kv = config_path.empty()
                                ? KeyValueConfig::parse_text("", "<defaults>")
                                : KeyValueConfig::parse_file(config_path);
        for (const auto& o : overrides) {
            const auto eq = o.find('=');
            if (eq == std::string::npos)
                throw UsageError("--set expects section.key=value, got '" + o + "'");
            kv.set(o.substr(0, eq), o.substr(eq + 1));
        }
        kv_out = kv;
        return ExperimentConfig::from_kv(kv);
    } catch (const UsageError&) {
        throw;
    } catch (const std::exception& e) {
        throw UsageError(e.what());
    }
}

DatasetManifest load_manifest_checked(const ExperimentConfig& cfg) {
    if (cfg.manifest_path.empty())
        throw UsageError("config: field 'data.manifest': missing required field");
    if (!fs::exists(cfg.manifest_path))
        throw UsageError("config: field 'data.manifest': file not found: " +
                         cfg.manifest_path);
    DatasetManifest m = DatasetManifest::load(cfg.manifest_path);
    m.scan();
    return m;
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& overrides,
              const std::string& resume) {
    KeyValueConfig kv;
    const ExperimentConfig cfg = load_experiment(config_path, overrides, kv);
    const DatasetManifest manifest = load_manifest_checked(cfg);

    Rng init_rng = Rng::derive(cfg.train.seed, 100);
    auto net = cfg.build_network(init_rng);
    fs::create_directories(cfg.train.out_dir);
    write_run_provenance(cfg, kv, (fs::path(cfg.train.out_dir) / "run.json").string());

    const TrainResult result = train(*net, manifest, cfg.train, resume);
    std::printf("finished at iteration %lld; final checkpoint %s\n",
                static_cast<long long>(result.state.iteration),
                result.final_checkpoint.c_str());
    return 0;
}

int cmd_evaluate(const std::string& config_path, const std::vector<std::string>& overrides,
                 const std::string& checkpoint, const std::string& split_name,
                 const std::string& condition_name, const std::string& out) {
    KeyValueConfig kv;
    const ExperimentConfig cfg = load_experiment(config_path, overrides, kv);
    const DatasetManifest manifest = load_manifest_checked(cfg);
    if (!fs::exists(checkpoint))
        throw UsageError("--checkpoint: file not found: " + checkpoint);

    Rng init_rng = Rng::derive(cfg.train.seed, 100);
    auto net = cfg.build_network(init_rng);
    load_checkpoint(*net, checkpoint);
    net->set_mode(Mode::Eval);

    const Split split = split_from_string(split_name);
    std::vector<FilterCondition> conditions;
    if (condition_name == "seen")
        conditions = {FilterCondition::Seen};
    else if (condition_name == "unseen")
        conditions = {FilterCondition::Unseen};
    else if (condition_name == "both")
        conditions = {FilterCondition::Seen, FilterCondition::Unseen};
    else
        throw UsageError("--condition must be seen|unseen|both");

    DatasetReader reader;
    for (const FilterCondition c : conditions) {
        const EvalReport report =
            evaluate_split(*net, manifest, split, c, reader, cfg.train.chunk_len);
        const std::string path =
            conditions.size() == 1 ? out
                                   : out + "." + to_string(c) + ".csv";
        write_report_csv(report, path);
        std::printf("%s/%s: mean input %.2f dB, output %.2f dB, delta %+.2f dB -> %s\n",
                    to_string(split).c_str(), to_string(c).c_str(),
                    report.mean_input_snr_db, report.mean_output_snr_db,
                    report.mean_delta_snr_db, path.c_str());
    }
    write_simple_provenance(out + ".run.json", "evaluate",
                            {{"checkpoint", checkpoint}, {"split", split_name}});
    return 0;
}

int cmd_spectrogram(const std::string& in, const std::string& diff,
                    const std::string& out_prefix) {
    const AudioClip a = load_wav(in);
    const Spectrogram s = diff.empty() ? spectrogram(a)
                                       : diff_spectrogram(a, load_wav(diff));
    write_spectrogram_csv(s, out_prefix + ".csv");
    write_spectrogram_pgm(s, out_prefix + ".pgm");
    std::printf("wrote %s.csv and %s.pgm (%zu frames x %zu bins)\n",
                out_prefix.c_str(), out_prefix.c_str(), s.frames, s.bins);
    return 0;
}

int cmd_reproduce_desk(const std::string& out_dir, std::uint64_t seed,
                       std::int64_t iters, const std::string& arch) {
    fs::create_directories(out_dir);
    const std::string data_dir = (fs::path(out_dir) / "data").string();
    SynthSpec synth;
    synth.validation_dur_s = 17.0;  // fits the 8 s excerpt at the 8th second
    const DatasetManifest manifest = generate_synthetic_dataset(synth, seed, data_dir);

    std::vector<std::string> archs;
    if (arch == "both")
        archs = {"resnet", "unet"};
    else if (arch == "resnet" || arch == "unet")
        archs = {arch};
    else
        throw UsageError("--arch must be resnet|unet|both");

    const Regularization regs[] = {Regularization::None, Regularization::DataAugmentation,
                                   Regularization::BatchNorm, Regularization::Dropout};

    std::ofstream table(fs::path(out_dir) / "table.csv");
    table << "filter,experiment,snr_db,delta_snr_db\n";

    for (const std::string& a : archs) {
        bool wrote_input_rows = false;
        for (const Regularization reg : regs) {
            ExperimentConfig cfg;
            cfg.architecture = a;
            // desk-scale models, sized so the whole grid stays tractable
            cfg.resnet.num_blocks = 4;
            cfg.resnet.channels = 16;
            cfg.resnet.kernel_size = 9;
            cfg.unet.num_scales = 3;
            cfg.unet.channels_per_scale = {12, 24, 48};
            cfg.unet.kernel_sizes = {9, 9, 9};
            cfg.train.regularization = reg;
            cfg.train.seed = seed;
            cfg.train.max_iterations = iters;
            cfg.train.record_interval = 2500;
            cfg.train.out_dir =
                (fs::path(out_dir) / (a + "_" + to_string(reg))).string();
            cfg.train.verbose_filter_log = true;

            Rng init_rng = Rng::derive(cfg.train.seed, 100);
            auto net = cfg.build_network(init_rng);
            std::fprintf(stderr, "== training %s / %s ==\n", a.c_str(),
                         to_string(reg).c_str());
            train(*net, manifest, cfg.train);
            net->set_mode(Mode::Eval);

            DatasetReader reader;
            const EvalReport seen = evaluate_split(*net, manifest, Split::Test,
                                                   FilterCondition::Seen, reader);
            const EvalReport unseen = evaluate_split(*net, manifest, Split::Test,
                                                     FilterCondition::Unseen, reader);
            if (!wrote_input_rows) {
                char buf[160];
                std::snprintf(buf, sizeof(buf), "seen,%s input,%.2f,\n", a.c_str(),
                              seen.mean_input_snr_db);
                table << buf;
                std::snprintf(buf, sizeof(buf), "unseen,%s input,%.2f,\n", a.c_str(),
                              unseen.mean_input_snr_db);
                table << buf;
                wrote_input_rows = true;
            }
            char buf[160];
            std::snprintf(buf, sizeof(buf), "seen,%s %s,%.2f,%+.2f\n", a.c_str(),
                          to_string(reg).c_str(), seen.mean_output_snr_db,
                          seen.mean_delta_snr_db);
            table << buf;
            std::snprintf(buf, sizeof(buf), "unseen,%s %s,%.2f,%+.2f\n", a.c_str(),
                          to_string(reg).c_str(), unseen.mean_output_snr_db,
                          unseen.mean_delta_snr_db);
            table << buf;
            table.flush();
        }
    }
    std::printf("grid finished; table at %s\n",
                (fs::path(out_dir) / "table.csv").string().c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"bandwidth-extension experiment toolkit"};
    app.require_subcommand(1);

    // design-filter
    auto* design = app.add_subcommand("design-filter", "design a low-pass filter and sample its response");
    std::string family = "butterworth", bessel_norm = "phase", out, coeffs_out;
    int order = 6, points = 512;
    double cutoff = 11025.0, fs_rate = 44100.0;
    std::optional<double> rp, rs;
    design->add_option("--family", family, "butterworth|chebyshev1|bessel|elliptic");
    design->add_option("--order", order)->check(CLI::PositiveNumber);
    design->add_option("--cutoff", cutoff, "cutoff in Hz");
    design->add_option("--fs", fs_rate, "sample rate in Hz");
    design->add_option("--rp", rp, "passband ripple dB (chebyshev1/elliptic)");
    design->add_option("--rs", rs, "stopband attenuation dB (elliptic)");
    design->add_option("--bessel-norm", bessel_norm, "phase|mag");
    design->add_option("--out", out, "response CSV path")->required();
    design->add_option("--coeffs", coeffs_out, "also write coefficients CSV here");
    design->add_option("--points", points, "response sample count")->check(CLI::Range(2, 1 << 20));

    // filter
    auto* filt = app.add_subcommand("filter", "apply a low-pass filter to a WAV file");
    std::string filt_in, filt_out;
    filt->add_option("--in", filt_in)->required();
    filt->add_option("--out", filt_out)->required();
    filt->add_option("--family", family);
    filt->add_option("--order", order)->check(CLI::PositiveNumber);
    filt->add_option("--cutoff", cutoff);
    filt->add_option("--rp", rp);
    filt->add_option("--rs", rs);
    filt->add_option("--bessel-norm", bessel_norm);

    // gen-synth
    auto* gen = app.add_subcommand("gen-synth", "generate the synthetic desk-scale corpus");
    std::uint64_t seed = 0;
    std::string gen_out = "data";
    int n_train = 100, n_val = 8, n_test = 20;
    double d_train = 3.0, d_val = 3.0, d_test = 3.0;
    gen->add_option("--seed", seed);
    gen->add_option("--out", gen_out)->required();
    gen->add_option("--train", n_train);
    gen->add_option("--val", n_val);
    gen->add_option("--test", n_test);
    gen->add_option("--train-dur", d_train, "seconds per training clip");
    gen->add_option("--val-dur", d_val, "seconds per validation clip");
    gen->add_option("--test-dur", d_test, "seconds per test clip");

    // train
    auto* tr = app.add_subcommand("train", "train a model from an experiment config");
    std::string config_path, resume;
    std::vector<std::string> overrides;
    tr->add_option("--config", config_path, "experiment config file")->required();
    tr->add_option("--set", overrides, "override: section.key=value (repeatable)");
    tr->add_option("--resume", resume, "checkpoint to resume from");

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "evaluate a checkpoint on a data split");
    std::string ckpt, split_name = "test", condition = "both", eval_out = "report.csv";
    ev->add_option("--config", config_path)->required();
    ev->add_option("--set", overrides);
    ev->add_option("--checkpoint", ckpt)->required();
    ev->add_option("--split", split_name, "train|validation|test");
    ev->add_option("--condition", condition, "seen|unseen|both");
    ev->add_option("--out", eval_out, "report CSV path");

    // spectrogram
    auto* sp = app.add_subcommand("spectrogram", "emit spectrogram CSV + PGM for a WAV");
    std::string sp_in, sp_diff, sp_out = "spec";
    sp->add_option("--in", sp_in)->required();
    sp->add_option("--diff", sp_diff, "second WAV: emit |A - B| difference spectrogram");
    sp->add_option("--out", sp_out, "output prefix");

    // reproduce-desk
    auto* rd = app.add_subcommand("reproduce-desk",
                                  "run the toy 4-condition experiment grid on a synthetic corpus");
    std::string rd_out = "desk", rd_arch = "resnet";
    std::int64_t rd_iters = 5000;
    rd->add_option("--out", rd_out);
    rd->add_option("--seed", seed);
    rd->add_option("--iters", rd_iters);
    rd->add_option("--arch", rd_arch, "resnet|unet|both");

    bool no_simd = false;
    app.add_flag("--no-simd", no_simd, "force the scalar reference kernels");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    if (no_simd) kern::force_scalar(true);

    try {
        if (design->parsed())
            return cmd_design_filter(family, order, cutoff, fs_rate, rp, rs,
                                     bessel_norm, out, coeffs_out, points);
        if (filt->parsed())
            return cmd_filter(filt_in, filt_out, family, order, cutoff, rp, rs,
                              bessel_norm);
        if (gen->parsed())
            return cmd_gen_synth(seed, gen_out, n_train, n_val, n_test, d_train,
                                 d_val, d_test);
        if (tr->parsed()) return cmd_train(config_path, overrides, resume);
        if (ev->parsed())
            return cmd_evaluate(config_path, overrides, ckpt, split_name, condition,
                                eval_out);
        if (sp->parsed()) return cmd_spectrogram(sp_in, sp_diff, sp_out);
        if (rd->parsed()) return cmd_reproduce_desk(rd_out, seed, rd_iters, rd_arch);
    } catch (const UsageError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 1;
}
