#pragma once

#include "bwe/models.hpp"
#include "bwe/training.hpp"

#include <map>
#include <memory>
#include <optional>
#include <string>

namespace bwe {

// `key = value` pairs grouped by [section]; lookup keys are "section.key".
class KeyValueConfig {
public:
    static KeyValueConfig parse_file(const std::string& path);
    static KeyValueConfig parse_text(const std::string& text, const std::string& origin);

    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    bool has(const std::string& key) const { return values_.count(key) != 0; }

    std::string get_str(const std::string& key, const std::string& fallback) const;
    std::string require_str(const std::string& key) const;
    double get_double(const std::string& key, double fallback) const;
    std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<int> get_int_list(const std::string& key,
                                  const std::vector<int>& fallback) const;

    const std::map<std::string, std::string>& values() const { return values_; }

private:
    std::string origin_ = "<memory>";
    std::map<std::string, std::string> values_;

    [[noreturn]] void fail(const std::string& key, const std::string& why) const;
};

struct ExperimentConfig {
    std::string architecture = "resnet";  // resnet | unet
    ResNetConfig resnet;
    UNetConfig unet;
    InitScheme init = InitScheme::ScaledNormal;
    TrainConfig train;
    std::string manifest_path;

    // Parsed from file + overrides; throws with the offending key on errors.
    static ExperimentConfig from_kv(const KeyValueConfig& kv);

    std::unique_ptr<Network<float>> build_network(Rng& init_rng) const;
};

// Writes the provenance record (config echo, seed, version, kernel path).
void write_run_provenance(const ExperimentConfig& cfg, const KeyValueConfig& kv,
                          const std::string& path);

inline constexpr const char* kBweVersion = "0.1.0";

}  // namespace bwe
