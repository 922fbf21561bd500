#pragma once

#include <span>
#include <vector>

#include "ghostseg/radar_core.hpp"

namespace ghostseg {

/// Perfectly specular finite wall segment. Parked cars, building fronts,
/// curbstones and guardrails are all modeled this way.
struct Reflector {
    Vec2 a;
    Vec2 b;
    double reflectivity = 0.6;

    void validate() const;
    Vec2 direction() const { return b - a; }
    bool operator==(const Reflector&) const = default;
};

enum class PathType { Direct, Type1Second, Type2Second, Type2Third };

const char* path_type_name(PathType type);

/// One propagation path from a sensor to a target and back.
struct PathResult {
    bool valid = false;
    double range = 0.0;    // half of the round-trip length, m
    double azimuth = 0.0;  // world-frame arrival direction at the sensor, deg
    /// Interaction points between leaving and re-entering the sensor.
    std::vector<Vec2> bounce_points;
    int bounce_order = 0;
    PathType type = PathType::Direct;
};

/// Reflection of `p` across the infinite line through the reflector.
Vec2 mirror_across_line(const Vec2& p, const Reflector& refl);
/// Reflection of a free vector (velocity) across the reflector direction.
Vec2 mirror_vector(const Vec2& v, const Reflector& refl);

/// True if the open segment p->q touches the closed reflector segment.
bool segment_blocked(const Vec2& p, const Vec2& q, const Reflector& refl);
bool segment_clear(const Vec2& p, const Vec2& q, std::span<const Reflector> reflectors);

double distance_to_segment(const Vec2& p, const Reflector& refl);

PathResult direct_path(const Vec2& sensor, const Vec2& target, std::span<const Reflector> reflectors);

/// sensor -> P (wall) -> target -> P -> sensor. Independent of whether the
/// direct line of sight is clear.
PathResult type2_third_bounce_path(const Vec2& sensor, const Vec2& target, const Reflector& refl);

struct SecondBouncePair {
    PathResult type1;  // last bounce on the object
    PathResult type2;  // last bounce on the wall
};

/// Both second-bounce variants through the wall point P. The direct leg
/// target<->sensor must be clear of `occluders`.
SecondBouncePair second_bounce_paths(const Vec2& sensor, const Vec2& target, const Reflector& refl,
                                     std::span<const Reflector> occluders = {});

/// d(range)/dt for a moving target, static sensor and static wall.
/// Throws std::logic_error if the requested path is not valid.
double ghost_radial_velocity(const Vec2& target_pos, const Vec2& target_vel, const Vec2& sensor,
                             PathType path_type, const Reflector& refl);

/// rcs * rho_product / range^2. Throws std::invalid_argument for range <= 0,
/// rho_product outside (0, 1] or rcs <= 0.
double amplitude_model(double range, int bounce_order, double rho_product, double rcs);

}  // namespace ghostseg
