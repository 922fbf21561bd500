#include "ghostseg/radar_core.hpp"

#include <stdexcept>

namespace ghostseg {

namespace {

void check_band(const Interval& band, const char* name) {
    if (!(band.lower < band.upper))
        throw std::invalid_argument(std::string("sensor spec: empty band '") + name + "'");
}

void check_res(double res, const char* name) {
    if (!(res > 0.0))
        throw std::invalid_argument(std::string("sensor spec: resolution '") + name + "' must be > 0");
}

}  // namespace

void SensorSpec::validate() const {
    check_band(range_band, "range");
    check_band(azimuth_band, "azimuth");
    check_band(doppler_band, "doppler");
    check_res(range_res, "range");
    check_res(azimuth_res, "azimuth");
    check_res(doppler_res, "doppler");
    check_res(cycle_time_ms, "cycle_time");
}

std::string_view label_name(Label label) {
    switch (label) {
        case Label::Background: return "background";
        case Label::Pedestrian: return "pedestrian";
        case Label::Cyclist: return "cyclist";
        case Label::GhostPedestrian: return "ghost_pedestrian";
        case Label::GhostCyclist: return "ghost_cyclist";
        case Label::Type1SecondBounce: return "type1_second_bounce";
    }
    throw std::invalid_argument("label_name: invalid label value");
}

Label parse_label(std::string_view name) {
    for (Label l : kAllLabels)
        if (label_name(l) == name) return l;
    throw std::invalid_argument("unknown label token '" + std::string(name) + "'");
}

Vec2 polar_to_cartesian(double r, double phi_deg) {
    const double phi = deg_to_rad(phi_deg);
    return {r * std::cos(phi), r * std::sin(phi)};
}

Polar cartesian_to_polar(const Vec2& p) {
    double phi = rad_to_deg(std::atan2(p.y, p.x));
    if (phi <= -180.0) phi += 360.0;
    return {p.norm(), phi};
}

Vec2 sensor_to_ego(const SensorPose& pose, double r, double phi_deg) {
    return pose.position + polar_to_cartesian(r, phi_deg + pose.heading_deg);
}

Polar ego_to_sensor(const SensorPose& pose, const Vec2& p) {
    const double h = deg_to_rad(pose.heading_deg);
    const Vec2 d = p - pose.position;
    // rotate by -heading
    const Vec2 local{d.x * std::cos(h) + d.y * std::sin(h), -d.x * std::sin(h) + d.y * std::cos(h)};
    return cartesian_to_polar(local);
}

double quantize(double value, double resolution) {
    const double q = value / resolution;
    const double lower = std::floor(q);
    const double frac = q - lower;
    double bins;
    // Treat ratios within float noise of x.5 as exact ties.
    if (std::abs(frac - 0.5) < 1e-9) {
        bins = q >= 0.0 ? lower + 1.0 : lower;
    } else {
        bins = std::round(q);
    }
    if (bins == 0.0) return 0.0;
    return bins * resolution;
}

std::optional<RadarPoint> clip_and_quantize_point(const RadarPoint& p, const SensorSpec& spec) {
    if (!spec.range_band.contains(p.r) || !spec.azimuth_band.contains(p.phi) ||
        !spec.doppler_band.contains(p.v_r))
        return std::nullopt;
    RadarPoint out = p;
    out.r = quantize(p.r, spec.range_res);
    out.phi = quantize(p.phi, spec.azimuth_res);
    out.v_r = quantize(p.v_r, spec.doppler_res);
    if (!spec.range_band.contains(out.r) || !spec.azimuth_band.contains(out.phi) ||
        !spec.doppler_band.contains(out.v_r))
        return std::nullopt;
    return out;
}

}  // namespace ghostseg
