#include "ghostseg/config.hpp"

#include <fstream>
#include <sstream>

#include "yaml_util.hpp"

namespace ghostseg {

ConfigError::ConfigError(std::string field, int line, const std::string& message)
    : std::runtime_error("config error: field '" + field + "'" +
                         (line > 0 ? " (line " + std::to_string(line) + ")" : std::string()) + ": " + message),
      field_(std::move(field)),
      line_(line) {}

namespace {

using namespace ghostseg::yaml;

SensorSpec parse_spec(const YAML::Node& n, const std::string& path) {
    check_keys(n, path, {"range_band", "azimuth_band", "doppler_band", "range_res", "azimuth_res", "doppler_res",
                         "cycle_time_ms"});
    SensorSpec s;
    if (n["range_band"]) s.range_band = interval(n["range_band"], join(path, "range_band"));
    if (n["azimuth_band"]) s.azimuth_band = interval(n["azimuth_band"], join(path, "azimuth_band"));
    if (n["doppler_band"]) s.doppler_band = interval(n["doppler_band"], join(path, "doppler_band"));
    s.range_res = get(n, "range_res", path, s.range_res);
    s.azimuth_res = get(n, "azimuth_res", path, s.azimuth_res);
    s.doppler_res = get(n, "doppler_res", path, s.doppler_res);
    s.cycle_time_ms = get(n, "cycle_time_ms", path, s.cycle_time_ms);
    try {
        s.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(path, line_of(n), e.what());
    }
    return s;
}

SimulationOptions parse_options(const YAML::Node& n, const std::string& path, SimulationOptions o) {
    check_keys(n, path, {"detection_floor", "range_sigma", "azimuth_sigma", "doppler_sigma",
                         "amplitude_fluctuation_db", "second_bounce", "multi_reflector_ghosts"});
    o.detection_floor = get(n, "detection_floor", path, o.detection_floor);
    o.range_sigma = get(n, "range_sigma", path, o.range_sigma);
    o.azimuth_sigma = get(n, "azimuth_sigma", path, o.azimuth_sigma);
    o.doppler_sigma = get(n, "doppler_sigma", path, o.doppler_sigma);
    o.amplitude_fluctuation_db = get(n, "amplitude_fluctuation_db", path, o.amplitude_fluctuation_db);
    o.multi_reflector_ghosts = get(n, "multi_reflector_ghosts", path, o.multi_reflector_ghosts);
    if (n["second_bounce"]) {
        const auto mode = scalar<std::string>(n["second_bounce"], join(path, "second_bounce"));
        if (mode == "off") o.second_bounce = SecondBounceMode::Off;
        else if (mode == "background") o.second_bounce = SecondBounceMode::Background;
        else if (mode == "label") o.second_bounce = SecondBounceMode::Label;
        else throw ConfigError(join(path, "second_bounce"), line_of(n["second_bounce"]),
                               "expected off, background or label");
    }
    if (o.detection_floor < 0.0) throw ConfigError(join(path, "detection_floor"), line_of(n), "must be >= 0");
    return o;
}

std::vector<SensorPose> parse_sensors(const YAML::Node& n, const std::string& path) {
    if (!n.IsSequence() || n.size() == 0) throw ConfigError(path, line_of(n), "expected a nonempty list of sensors");
    std::vector<SensorPose> out;
    for (std::size_t i = 0; i < n.size(); ++i) {
        const auto p = path + "[" + std::to_string(i) + "]";
        check_keys(n[i], p, {"position", "heading_deg"});
        if (!n[i]["position"]) throw ConfigError(join(p, "position"), line_of(n[i]), "missing required field");
        out.push_back({vec2(n[i]["position"], join(p, "position")), get(n[i], "heading_deg", p, 0.0)});
    }
    return out;
}

ClutterModel parse_clutter(const YAML::Node& n, const std::string& path, ClutterModel c) {
    check_keys(n, path, {"points_per_frame_mean", "amplitude_mean", "doppler_sigma", "max_range",
                         "reflector_points_per_frame_mean", "reflector_amplitude_mean"});
    c.points_per_frame_mean = get(n, "points_per_frame_mean", path, c.points_per_frame_mean);
    c.amplitude_mean = get(n, "amplitude_mean", path, c.amplitude_mean);
    c.doppler_sigma = get(n, "doppler_sigma", path, c.doppler_sigma);
    c.max_range = get(n, "max_range", path, c.max_range);
    c.reflector_points_per_frame_mean = get(n, "reflector_points_per_frame_mean", path, c.reflector_points_per_frame_mean);
    c.reflector_amplitude_mean = get(n, "reflector_amplitude_mean", path, c.reflector_amplitude_mean);
    try {
        c.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(path, line_of(n), e.what());
    }
    return c;
}

VruTrajectory parse_vru(const YAML::Node& n, const std::string& path, VruTrajectory v, bool need_waypoints) {
    check_keys(n, path, {"category", "waypoints", "speed", "body_radius", "scatter_count_mean", "velocity_jitter", "rcs"});
    if (n["category"]) {
        const auto cat = scalar<std::string>(n["category"], join(path, "category"));
        if (cat == "pedestrian") v.category = VruCategory::Pedestrian;
        else if (cat == "cyclist") v.category = VruCategory::Cyclist;
        else throw ConfigError(join(path, "category"), line_of(n["category"]), "expected pedestrian or cyclist");
    }
    if (n["waypoints"]) {
        const auto wp = n["waypoints"];
        const auto wpath = join(path, "waypoints");
        if (!wp.IsSequence()) throw ConfigError(wpath, line_of(wp), "expected a list of [x, y]");
        v.waypoints.clear();
        for (std::size_t i = 0; i < wp.size(); ++i) v.waypoints.push_back(vec2(wp[i], wpath + "[" + std::to_string(i) + "]"));
    }
    v.speed = get(n, "speed", path, v.speed);
    v.body_radius = get(n, "body_radius", path, v.body_radius);
    v.scatter_count_mean = get(n, "scatter_count_mean", path, v.scatter_count_mean);
    v.velocity_jitter = get(n, "velocity_jitter", path, v.velocity_jitter);
    v.rcs = get(n, "rcs", path, v.rcs);
    if (need_waypoints) {
        try {
            v.validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(path, line_of(n), e.what());
        }
    }
    return v;
}

Reflector parse_reflector(const YAML::Node& n, const std::string& path) {
    check_keys(n, path, {"a", "b", "reflectivity"});
    if (!n["a"]) throw ConfigError(join(path, "a"), line_of(n), "missing required field");
    if (!n["b"]) throw ConfigError(join(path, "b"), line_of(n), "missing required field");
    Reflector r{vec2(n["a"], join(path, "a")), vec2(n["b"], join(path, "b")), get(n, "reflectivity", path, 0.6)};
    try {
        r.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(path, line_of(n), e.what());
    }
    return r;
}

}  // namespace

DatasetConfig parse_dataset_config(const std::string& text, const std::string& source) {
    const YAML::Node root = load_text(text, source);
    check_keys(root, "", {"master_seed", "repeats", "train_fraction", "sensor_spec", "simulation", "sensors",
                          "defaults", "scenarios"});
    DatasetConfig cfg;
    cfg.master_seed = get<std::uint64_t>(root, "master_seed", "", cfg.master_seed);
    cfg.repeats = get(root, "repeats", "", cfg.repeats);
    cfg.train_fraction = get(root, "train_fraction", "", cfg.train_fraction);
    if (cfg.repeats < 1) throw ConfigError("repeats", line_of(root["repeats"]), "must be >= 1");
    if (!(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0))
        throw ConfigError("train_fraction", line_of(root["train_fraction"]), "must lie in (0, 1)");
    if (root["sensor_spec"]) cfg.options.spec = parse_spec(root["sensor_spec"], "sensor_spec");
    if (root["simulation"]) cfg.options = parse_options(root["simulation"], "simulation", cfg.options);

    std::vector<SensorPose> sensors = Scenario::default_sensor_poses();
    if (root["sensors"]) sensors = parse_sensors(root["sensors"], "sensors");
    ClutterModel clutter;
    VruTrajectory vru;
    if (const auto d = root["defaults"]) {
        check_keys(d, "defaults", {"clutter", "vru"});
        if (d["clutter"]) clutter = parse_clutter(d["clutter"], "defaults.clutter", clutter);
        if (d["vru"]) vru = parse_vru(d["vru"], "defaults.vru", vru, false);
    }

    const auto list = root["scenarios"];
    if (!list || !list.IsSequence() || list.size() == 0)
        throw ConfigError("scenarios", line_of(list ? list : root), "expected a nonempty list");
    for (std::size_t i = 0; i < list.size(); ++i) {
        const auto n = list[i];
        const auto p = "scenarios[" + std::to_string(i) + "]";
        check_keys(n, p, {"name", "seed", "duration_ms", "sensors", "reflectors", "vru", "clutter"});
        Scenario sc;
        sc.name = get<std::string>(n, "name", p, "scenario_" + std::to_string(i));
        sc.seed = get<std::uint64_t>(n, "seed", p, i);
        sc.duration_ms = get<std::int64_t>(n, "duration_ms", p, 0);
        sc.sensors = n["sensors"] ? parse_sensors(n["sensors"], join(p, "sensors")) : sensors;
        if (const auto refl = n["reflectors"]) {
            if (!refl.IsSequence()) throw ConfigError(join(p, "reflectors"), line_of(refl), "expected a list");
            for (std::size_t k = 0; k < refl.size(); ++k)
                sc.reflectors.push_back(parse_reflector(refl[k], join(p, "reflectors") + "[" + std::to_string(k) + "]"));
        }
        if (!n["vru"]) throw ConfigError(join(p, "vru"), line_of(n), "missing required field");
        sc.vru = parse_vru(n["vru"], join(p, "vru"), vru, true);
        sc.clutter = n["clutter"] ? parse_clutter(n["clutter"], join(p, "clutter"), clutter) : clutter;
        try {
            sc.validate(cfg.options.spec.cycle_time_ms);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(p, line_of(n), e.what());
        }
        cfg.scenarios.push_back(std::move(sc));
    }
    return cfg;
}

DatasetConfig load_dataset_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path.string(), 0, "cannot open config file");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_dataset_config(ss.str(), path.string());
}

}  // namespace ghostseg
