#include "bwe/config.hpp"

#include "bwe/kernels.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace bwe {

namespace {

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return "";
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

}  // namespace

KeyValueConfig KeyValueConfig::parse_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("config: cannot open " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_text(ss.str(), path);
}

KeyValueConfig KeyValueConfig::parse_text(const std::string& text,
                                          const std::string& origin) {
    KeyValueConfig kv;
    kv.origin_ = origin;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']')
                throw std::runtime_error(origin + ":" + std::to_string(lineno) +
                                         ": malformed section header");
            section = trim(t.substr(1, t.size() - 2));
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error(origin + ":" + std::to_string(lineno) +
                                     ": expected `key = value`");
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        if (key.empty())
            throw std::runtime_error(origin + ":" + std::to_string(lineno) +
                                     ": empty key");
        kv.values_[section.empty() ? key : section + "." + key] = value;
    }
    return kv;
}

void KeyValueConfig::fail(const std::string& key, const std::string& why) const {
    throw std::runtime_error(origin_ + ": field '" + key + "': " + why);
}

std::string KeyValueConfig::get_str(const std::string& key,
                                    const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

std::string KeyValueConfig::require_str(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) fail(key, "missing required field");
    return it->second;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        std::size_t pos = 0;
        const double v = std::stod(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("trailing junk");
        return v;
    } catch (const std::exception&) {
        fail(key, "not a number: '" + it->second + "'");
    }
}

std::int64_t KeyValueConfig::get_int(const std::string& key, std::int64_t fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        std::size_t pos = 0;
        const long long v = std::stoll(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("trailing junk");
        return v;
    } catch (const std::exception&) {
        fail(key, "not an integer: '" + it->second + "'");
    }
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::string v = it->second;
    std::transform(v.begin(), v.end(), v.begin(), ::tolower);
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    fail(key, "not a boolean: '" + it->second + "'");
}

std::vector<int> KeyValueConfig::get_int_list(const std::string& key,
                                              const std::vector<int>& fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::vector<int> out;
    std::stringstream ss(it->second);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            out.push_back(std::stoi(trim(item)));
        } catch (const std::exception&) {
            fail(key, "not an integer list: '" + it->second + "'");
        }
    }
    if (out.empty()) fail(key, "empty list");
    return out;
}

ExperimentConfig ExperimentConfig::from_kv(const KeyValueConfig& kv) {
    ExperimentConfig cfg;
    cfg.architecture = kv.get_str("model.architecture", "resnet");
    if (cfg.architecture != "resnet" && cfg.architecture != "unet")
        throw std::runtime_error("config: model.architecture must be 'resnet' or 'unet'");

    const std::string reg = kv.get_str("experiment.regularization", "none");
    cfg.train.regularization = regularization_from_string(reg);
    cfg.train.seed = static_cast<std::uint64_t>(kv.get_int("experiment.seed", 0));
    cfg.train.out_dir = kv.get_str("experiment.out_dir", "run");

    const bool use_bn = cfg.train.regularization == Regularization::BatchNorm;
    const bool use_do = cfg.train.regularization == Regularization::Dropout;

    cfg.resnet.num_blocks = static_cast<int>(kv.get_int("model.blocks", 8));
    cfg.resnet.channels = static_cast<int>(kv.get_int("model.channels", 32));
    cfg.resnet.kernel_size = static_cast<int>(kv.get_int("model.kernel", 7));
    cfg.resnet.residual_scale = kv.get_double("model.residual_scale", 0.1);
    cfg.resnet.use_batch_norm = use_bn;
    cfg.resnet.use_dropout = use_do;
    cfg.resnet.dropout_p = kv.get_double("model.dropout_p", 0.5);
    cfg.resnet.zero_init_final = kv.get_bool("model.zero_init_final", true);

    cfg.unet.num_scales = static_cast<int>(kv.get_int("model.scales", 4));
    cfg.unet.channels_per_scale =
        kv.get_int_list("model.unet_channels", {16, 32, 64, 128});
    cfg.unet.kernel_sizes = kv.get_int_list("model.unet_kernels", {9, 9, 9, 9});
    cfg.unet.final_kernel = static_cast<int>(kv.get_int("model.final_kernel", 9));
    cfg.unet.use_batch_norm = use_bn;
    cfg.unet.use_dropout = use_do;
    cfg.unet.dropout_p = kv.get_double("model.dropout_p", 0.5);
    cfg.unet.zero_init_final = kv.get_bool("model.zero_init_final", true);

    const std::string init = kv.get_str("model.init", "scaled");
    if (init == "scaled")
        cfg.init = InitScheme::ScaledNormal;
    else if (init == "unit")
        cfg.init = InitScheme::UnitNormal;
    else
        throw std::runtime_error("config: model.init must be 'scaled' or 'unit'");

    cfg.train.batch_size = static_cast<int>(kv.get_int("train.batch_size", 8));
    cfg.train.lr0 = kv.get_double("train.lr0", 5e-4);
    cfg.train.beta1 = kv.get_double("train.beta1", 0.9);
    cfg.train.beta2 = kv.get_double("train.beta2", 0.999);
    cfg.train.adam_eps = kv.get_double("train.adam_eps", 1e-8);
    cfg.train.record_interval = static_cast<int>(kv.get_int("train.record_interval", 2500));
    cfg.train.plateau_patience = static_cast<int>(kv.get_int("train.plateau_patience", 5));
    cfg.train.max_iterations = kv.get_int("train.max_iterations", 10000);
    cfg.train.chunk_len = static_cast<int>(kv.get_int("train.chunk_len", 8192));
    cfg.train.val_start_s = kv.get_double("train.val_start_s", 8.0);
    cfg.train.val_dur_s = kv.get_double("train.val_dur_s", 8.0);
    cfg.train.verbose_filter_log = kv.get_bool("train.verbose_filter_log", false);

    cfg.manifest_path = kv.get_str("data.manifest", "");
    return cfg;
}

std::unique_ptr<Network<float>> ExperimentConfig::build_network(Rng& init_rng) const {
    if (architecture == "unet") return build_unet<float>(unet, init, init_rng);
    return build_resnet<float>(resnet, init, init_rng);
}

void write_run_provenance(const ExperimentConfig& cfg, const KeyValueConfig& kv,
                          const std::string& path) {
    nlohmann::json j;
    j["version"] = kBweVersion;
    j["kernels"] = kern::active().name;
    j["architecture"] = cfg.architecture;
    j["regularization"] = to_string(cfg.train.regularization);
    j["seed"] = cfg.train.seed;
    nlohmann::json echo;
    for (const auto& [k, v] : kv.values()) echo[k] = v;
    j["config"] = echo;
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write provenance record " + path);
    f << j.dump(2) << '\n';
}

}  // namespace bwe
