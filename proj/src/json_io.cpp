#include "ghostseg/json_io.hpp"

namespace ghostseg {

using nlohmann::json;

json to_json(const SensorSpec& s) {
    return json{{"range_band", {s.range_band.lower, s.range_band.upper}},
                {"azimuth_band", {s.azimuth_band.lower, s.azimuth_band.upper}},
                {"doppler_band", {s.doppler_band.lower, s.doppler_band.upper}},
                {"range_res", s.range_res},
                {"azimuth_res", s.azimuth_res},
                {"doppler_res", s.doppler_res},
                {"cycle_time_ms", s.cycle_time_ms}};
}

SensorSpec sensor_spec_from_json(const json& j) {
    SensorSpec s;
    auto band = [&](const char* key) {
        const auto& b = j.at(key);
        return Interval{b.at(0).get<double>(), b.at(1).get<double>()};
    };
    s.range_band = band("range_band");
    s.azimuth_band = band("azimuth_band");
    s.doppler_band = band("doppler_band");
    s.range_res = j.at("range_res").get<double>();
    s.azimuth_res = j.at("azimuth_res").get<double>();
    s.doppler_res = j.at("doppler_res").get<double>();
    s.cycle_time_ms = j.at("cycle_time_ms").get<double>();
    s.validate();
    return s;
}

json to_json(const SensorPose& p) {
    return json{{"position", {p.position.x, p.position.y}}, {"heading_deg", p.heading_deg}};
}

SensorPose sensor_pose_from_json(const json& j) {
    const auto& pos = j.at("position");
    return {{pos.at(0).get<double>(), pos.at(1).get<double>()}, j.at("heading_deg").get<double>()};
}

json to_json(const Reflector& r) {
    return json{{"a", {r.a.x, r.a.y}}, {"b", {r.b.x, r.b.y}}, {"reflectivity", r.reflectivity}};
}

Reflector reflector_from_json(const json& j) {
    Reflector r;
    r.a = {j.at("a").at(0).get<double>(), j.at("a").at(1).get<double>()};
    r.b = {j.at("b").at(0).get<double>(), j.at("b").at(1).get<double>()};
    r.reflectivity = j.at("reflectivity").get<double>();
    r.validate();
    return r;
}

}  // namespace ghostseg
