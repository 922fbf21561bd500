#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ghostseg {

inline constexpr double kPi = 3.14159265358979323846;

inline constexpr double deg_to_rad(double deg) { return deg * kPi / 180.0; }
inline constexpr double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    bool operator==(const Vec2&) const = default;

    double dot(const Vec2& o) const { return x * o.x + y * o.y; }
    double cross(const Vec2& o) const { return x * o.y - y * o.x; }
    double norm() const { return std::hypot(x, y); }
    double squared_norm() const { return x * x + y * y; }
};

inline double distance(const Vec2& a, const Vec2& b) { return (a - b).norm(); }

/// Closed interval [lower, upper].
struct Interval {
    double lower = 0.0;
    double upper = 0.0;

    bool contains(double v) const { return v >= lower && v <= upper; }
    bool operator==(const Interval&) const = default;
};

/// Operational bands and grid resolutions of one radar sensor. Defaults are
/// the 76-77 GHz experimental sensors used for the ghost data set.
struct SensorSpec {
    Interval range_band{0.15, 153.0};      // m
    Interval azimuth_band{-70.0, 70.0};    // deg
    Interval doppler_band{-44.3, 44.3};    // m/s
    double range_res = 0.15;               // m
    double azimuth_res = 1.8;              // deg
    double doppler_res = 0.087;            // m/s
    double cycle_time_ms = 100.0;

    /// Throws std::invalid_argument on non-positive resolutions or empty bands.
    void validate() const;
    bool operator==(const SensorSpec&) const = default;
};

enum class Label : std::uint8_t {
    Background = 0,
    Pedestrian,
    Cyclist,
    GhostPedestrian,
    GhostCyclist,
    // Simulator-only; remapped to Background unless the debug label is enabled.
    Type1SecondBounce,
};

inline constexpr int kLabelCount = 6;
inline constexpr std::array<Label, kLabelCount> kAllLabels{
    Label::Background,      Label::Pedestrian,   Label::Cyclist,
    Label::GhostPedestrian, Label::GhostCyclist, Label::Type1SecondBounce};

std::string_view label_name(Label label);
/// Inverse of label_name; throws std::invalid_argument on an unknown token.
Label parse_label(std::string_view name);

inline bool is_ghost(Label l) { return l == Label::GhostPedestrian || l == Label::GhostCyclist; }
inline bool is_real_object(Label l) { return l == Label::Pedestrian || l == Label::Cyclist; }

struct RadarPoint {
    double r = 0.0;          // m
    double phi = 0.0;        // deg, sensor frame, CCW positive, 0 = boresight
    double v_r = 0.0;        // m/s, positive = receding
    double amplitude = 0.0;  // linear
    std::int64_t t = 0;      // ms since recording start
    int sensor_id = 0;
    Label label = Label::Background;

    bool operator==(const RadarPoint&) const = default;
};

struct Frame {
    std::int64_t t = 0;
    std::vector<RadarPoint> points;
};

/// 2D mounting pose of a sensor in the ego frame.
struct SensorPose {
    Vec2 position;
    double heading_deg = 0.0;

    bool operator==(const SensorPose&) const = default;
};

struct Polar {
    double r = 0.0;
    double phi = 0.0;  // deg
};

Vec2 polar_to_cartesian(double r, double phi_deg);
/// phi in (-180, 180].
Polar cartesian_to_polar(const Vec2& p);

/// Polar measurement in the sensor frame -> ego-frame position.
Vec2 sensor_to_ego(const SensorPose& pose, double r, double phi_deg);
/// Ego-frame position -> sensor-frame polar coordinates.
Polar ego_to_sensor(const SensorPose& pose, const Vec2& p);

/// Nearest integer multiple of `resolution`; exact half-bin ties round away
/// from zero.
double quantize(double value, double resolution);

/// Drops points whose range, azimuth or Doppler falls outside the sensor
/// bands (before or after snapping to the grid); otherwise snaps all three.
std::optional<RadarPoint> clip_and_quantize_point(const RadarPoint& p, const SensorSpec& spec);

}  // namespace ghostseg
