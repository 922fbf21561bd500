#include <fstream>
#include <sstream>

#include "ghostseg/trainer.hpp"
#include "yaml_util.hpp"

namespace ghostseg {

namespace {

using namespace ghostseg::yaml;

template <typename T>
std::vector<T> list(const YAML::Node& n, const std::string& path) {
    if (!n.IsSequence()) throw ConfigError(path, line_of(n), "expected a list");
    std::vector<T> out;
    for (std::size_t i = 0; i < n.size(); ++i) out.push_back(scalar<T>(n[i], path + "[" + std::to_string(i) + "]"));
    return out;
}

MsgLevelConfig parse_level(const YAML::Node& n, const std::string& path) {
    check_keys(n, path, {"centers", "radii", "max_group_size", "mlp_widths"});
    MsgLevelConfig m;
    m.centers = require<std::size_t>(n, "centers", path);
    if (!n["radii"]) throw ConfigError(join(path, "radii"), line_of(n), "missing required field");
    if (!n["max_group_size"]) throw ConfigError(join(path, "max_group_size"), line_of(n), "missing required field");
    if (!n["mlp_widths"]) throw ConfigError(join(path, "mlp_widths"), line_of(n), "missing required field");
    m.radii = list<double>(n["radii"], join(path, "radii"));
    m.max_group_size = list<std::size_t>(n["max_group_size"], join(path, "max_group_size"));
    const auto w = n["mlp_widths"];
    const auto wp = join(path, "mlp_widths");
    if (!w.IsSequence()) throw ConfigError(wp, line_of(w), "expected a list of width lists");
    for (std::size_t j = 0; j < w.size(); ++j)
        m.mlp_widths.push_back(list<std::size_t>(w[j], wp + "[" + std::to_string(j) + "]"));
    try {
        m.validate(path);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(path, line_of(n), e.what());
    }
    return m;
}

NetworkConfig parse_network(const YAML::Node& n, const std::string& path) {
    check_keys(n, path, {"preset", "msg", "fp", "fc_hidden", "dropout"});
    NetworkConfig c = NetworkConfig::standard(2, 4);
    if (n["preset"]) {
        const auto p = scalar<std::string>(n["preset"], join(path, "preset"));
        if (p == "standard") c = NetworkConfig::standard(2, 4);
        else if (p == "tiny") c = NetworkConfig::tiny(2, 4);
        else throw ConfigError(join(path, "preset"), line_of(n["preset"]), "expected standard or tiny");
    }
    if (const auto msg = n["msg"]) {
        const auto mp = join(path, "msg");
        if (!msg.IsSequence() || msg.size() != 3) throw ConfigError(mp, line_of(msg), "expected exactly three levels");
        for (std::size_t l = 0; l < 3; ++l) c.msg[l] = parse_level(msg[l], mp + "[" + std::to_string(l) + "]");
    }
    if (const auto fp = n["fp"]) {
        const auto fpp = join(path, "fp");
        if (!fp.IsSequence() || fp.size() != 3) throw ConfigError(fpp, line_of(fp), "expected exactly three width lists");
        for (std::size_t l = 0; l < 3; ++l) c.fp[l] = list<std::size_t>(fp[l], fpp + "[" + std::to_string(l) + "]");
    }
    if (const auto fc = n["fc_hidden"]) {
        const auto v = list<std::size_t>(fc, join(path, "fc_hidden"));
        if (v.size() != 2) throw ConfigError(join(path, "fc_hidden"), line_of(fc), "expected two widths");
        c.fc[0] = v[0];
        c.fc[1] = v[1];
    }
    c.dropout = get(n, "dropout", path, c.dropout);
    try {
        c.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(path, line_of(n), e.what());
    }
    return c;
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& text, const std::string& source,
                                         const std::filesystem::path& base_dir) {
    const YAML::Node root = load_text(text, source);
    check_keys(root, "", {"dataset", "setups", "parallel_setups", "pipeline", "train", "network"});
    ExperimentConfig cfg;
    if (root["dataset"]) {
        std::filesystem::path p = scalar<std::string>(root["dataset"], "dataset");
        cfg.dataset = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
    }
    if (root["setups"]) {
        cfg.setups = list<int>(root["setups"], "setups");
        if (cfg.setups.empty()) throw ConfigError("setups", line_of(root["setups"]), "expected at least one setup");
        for (std::size_t i = 0; i < cfg.setups.size(); ++i) {
            try {
                setup_by_id(cfg.setups[i]);
            } catch (const std::invalid_argument& e) {
                throw ConfigError("setups[" + std::to_string(i) + "]", line_of(root["setups"][i]), e.what());
            }
        }
    }
    cfg.parallel_setups = get(root, "parallel_setups", "", cfg.parallel_setups);
    if (const auto p = root["pipeline"]) {
        check_keys(p, "pipeline", {"window_ms", "stride_ms", "sample_size", "include_amplitude"});
        cfg.pipeline.window_ms = get(p, "window_ms", "pipeline", cfg.pipeline.window_ms);
        cfg.pipeline.stride_ms = get(p, "stride_ms", "pipeline", cfg.pipeline.stride_ms);
        cfg.pipeline.sample_size = get(p, "sample_size", "pipeline", cfg.pipeline.sample_size);
        cfg.pipeline.include_amplitude = get(p, "include_amplitude", "pipeline", cfg.pipeline.include_amplitude);
        if (cfg.pipeline.sample_size < 1)
            throw ConfigError("pipeline.sample_size", line_of(p["sample_size"]), "must be >= 1");
        if (cfg.pipeline.window_ms < 1) throw ConfigError("pipeline.window_ms", line_of(p["window_ms"]), "must be >= 1");
    }
    if (const auto t = root["train"]) {
        check_keys(t, "train", {"setup", "epochs", "batch_size", "learning_rate", "beta1", "beta2", "epsilon",
                                "val_fraction", "val_split", "seed", "weighted", "init_scale", "workers"});
        auto& tc = cfg.train;
        tc.setup = get(t, "setup", "train", cfg.setups.front());
        tc.epochs = get(t, "epochs", "train", tc.epochs);
        tc.batch_size = get(t, "batch_size", "train", tc.batch_size);
        tc.learning_rate = get(t, "learning_rate", "train", tc.learning_rate);
        tc.beta1 = get(t, "beta1", "train", tc.beta1);
        tc.beta2 = get(t, "beta2", "train", tc.beta2);
        tc.epsilon = get(t, "epsilon", "train", tc.epsilon);
        tc.val_fraction = get(t, "val_fraction", "train", tc.val_fraction);
        tc.seed = get(t, "seed", "train", tc.seed);
        tc.weighted = get(t, "weighted", "train", tc.weighted);
        tc.init_scale = get(t, "init_scale", "train", tc.init_scale);
        tc.workers = get(t, "workers", "train", tc.workers);
        if (t["val_split"]) {
            const auto v = scalar<std::string>(t["val_split"], "train.val_split");
            if (v == "sample") tc.val_by_recording = false;
            else if (v == "recording") tc.val_by_recording = true;
            else throw ConfigError("train.val_split", line_of(t["val_split"]), "expected sample or recording");
        }
    } else {
        cfg.train.setup = cfg.setups.front();
    }
    if (root["network"]) cfg.train.network = parse_network(root["network"], "network");
    try {
        cfg.train.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError("train", line_of(root["train"] ? root["train"] : root), e.what());
    }
    return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path.string(), 0, "cannot open config file");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_experiment_config(ss.str(), path.string(), path.parent_path());
}

}  // namespace ghostseg
