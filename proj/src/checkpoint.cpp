#include "bwe/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace bwe {

namespace {

constexpr char kMagic[8] = {'B', 'W', 'E', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kVersion = 1;

struct Writer {
    std::ofstream f;
    explicit Writer(const std::string& path) : f(path, std::ios::binary) {
        if (!f) throw std::runtime_error("checkpoint: cannot create " + path);
    }
    void bytes(const void* p, std::size_t n) {
        f.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    }
    void u32(std::uint32_t v) { bytes(&v, 4); }
    void u64(std::uint64_t v) { bytes(&v, 8); }
    void f64(double v) { bytes(&v, 8); }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
    void floats(const float* p, std::size_t n) { bytes(p, n * 4); }
};

struct Reader {
    std::ifstream f;
    std::string path;
    explicit Reader(const std::string& p) : f(p, std::ios::binary), path(p) {
        if (!f) throw std::runtime_error("checkpoint: cannot open " + p);
    }
    void bytes(void* p, std::size_t n) {
        if (!f.read(static_cast<char*>(p), static_cast<std::streamsize>(n)))
            throw std::runtime_error("checkpoint: unexpected end of file in " + path);
    }
    std::uint32_t u32() { std::uint32_t v; bytes(&v, 4); return v; }
    std::uint64_t u64() { std::uint64_t v; bytes(&v, 8); return v; }
    double f64() { double v; bytes(&v, 8); return v; }
    std::string str() {
        const std::uint32_t n = u32();
        if (n > (1u << 20))
            throw std::runtime_error("checkpoint: implausible name length in " + path);
        std::string s(n, '\0');
        bytes(s.data(), n);
        return s;
    }
    void floats(float* p, std::size_t n) { bytes(p, n * 4); }
    bool at_eof() { return f.peek() == std::char_traits<char>::eof(); }
};

}  // namespace

void save_checkpoint(Network<float>& net, const std::string& path,
                     const TrainerState* trainer) {
    Writer w(path);
    w.bytes(kMagic, 8);
    w.u32(kVersion);

    auto params = net.parameters();
    w.u32(static_cast<std::uint32_t>(params.size()));
    for (const auto* p : params) {
        w.str(p->name);
        w.u32(static_cast<std::uint32_t>(p->tensor->batch));
        w.u32(static_cast<std::uint32_t>(p->tensor->channels));
        w.u32(static_cast<std::uint32_t>(p->tensor->length));
        w.floats(p->tensor->data.data(), p->tensor->size());
        w.floats(p->adam_m.data(), p->adam_m.size());
        w.floats(p->adam_v.data(), p->adam_v.size());
        w.u64(p->step_count);
    }

    auto stats = net.running_stats();
    w.u32(static_cast<std::uint32_t>(stats.size()));
    for (const auto& s : stats) {
        w.str(s.name);
        w.u32(static_cast<std::uint32_t>(s.stats->mean.size()));
        w.floats(s.stats->mean.data(), s.stats->mean.size());
        w.floats(s.stats->var.data(), s.stats->var.size());
        w.u64(s.stats->batches_tracked);
    }

    w.u32(trainer ? 1 : 0);
    if (trainer) {
        w.u64(trainer->iteration);
        w.f64(trainer->lr);
        w.f64(trainer->best_loss);
        w.u32(trainer->best_valid ? 1 : 0);
        w.u32(trainer->plateau_count);
        w.f64(trainer->window_loss_sum);
        w.u64(trainer->window_count);
        for (auto v : trainer->data_rng) w.u64(v);
        for (auto v : trainer->dropout_rng) w.u64(v);
        for (auto v : trainer->validation_rng) w.u64(v);
    }
    if (!w.f) throw std::runtime_error("checkpoint: write failure for " + path);
}

std::optional<TrainerState> load_checkpoint(Network<float>& net,
                                            const std::string& path) {
    Reader r(path);
    char magic[8];
    r.bytes(magic, 8);
    if (std::memcmp(magic, kMagic, 8) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path);
    const std::uint32_t version = r.u32();
    if (version != kVersion)
        throw std::runtime_error("checkpoint: unsupported version " +
                                 std::to_string(version) + " in " + path);

    auto params = net.parameters();
    const std::uint32_t count = r.u32();
    if (count != params.size())
        throw std::runtime_error("checkpoint: parameter count mismatch (" +
                                 std::to_string(count) + " stored, " +
                                 std::to_string(params.size()) + " in network)");
    for (auto* p : params) {
        const std::string name = r.str();
        if (name != p->name)
            throw std::runtime_error("checkpoint: parameter '" + name +
                                     "' does not match network parameter '" +
                                     p->name + "'");
        const std::uint32_t d0 = r.u32(), d1 = r.u32(), d2 = r.u32();
        if (static_cast<int>(d0) != p->tensor->batch ||
            static_cast<int>(d1) != p->tensor->channels ||
            static_cast<int>(d2) != p->tensor->length)
            throw std::runtime_error("checkpoint: shape mismatch for '" + name + "'");
        r.floats(p->tensor->data.data(), p->tensor->size());
        r.floats(p->adam_m.data(), p->adam_m.size());
        r.floats(p->adam_v.data(), p->adam_v.size());
        p->step_count = r.u64();
    }

    auto stats = net.running_stats();
    const std::uint32_t stat_count = r.u32();
    if (stat_count != stats.size())
        throw std::runtime_error("checkpoint: running-stat block mismatch in " + path);
    for (auto& s : stats) {
        const std::string name = r.str();
        if (name != s.name)
            throw std::runtime_error("checkpoint: stat block '" + name +
                                     "' does not match '" + s.name + "'");
        const std::uint32_t ch = r.u32();
        if (ch != s.stats->mean.size())
            throw std::runtime_error("checkpoint: stat channel mismatch for '" + name + "'");
        r.floats(s.stats->mean.data(), ch);
        r.floats(s.stats->var.data(), ch);
        s.stats->batches_tracked = r.u64();
    }

    std::optional<TrainerState> trainer;
    if (r.u32() == 1) {
        TrainerState t;
        t.iteration = r.u64();
        t.lr = r.f64();
        t.best_loss = r.f64();
        t.best_valid = r.u32() != 0;
        t.plateau_count = r.u32();
        t.window_loss_sum = r.f64();
        t.window_count = r.u64();
        for (auto& v : t.data_rng) v = r.u64();
        for (auto& v : t.dropout_rng) v = r.u64();
        for (auto& v : t.validation_rng) v = r.u64();
        trainer = t;
    }
    return trainer;
}

}  // namespace bwe
