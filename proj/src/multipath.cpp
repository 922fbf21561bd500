#include "ghostseg/multipath.hpp"

#include <algorithm>
#include <stdexcept>

namespace ghostseg {

namespace {

constexpr double kGeomEps = 1e-12;

double azimuth_toward(const Vec2& from, const Vec2& to) { return cartesian_to_polar(to - from).phi; }

/// Signed side of `p` relative to the reflector line (cross product sign).
double side(const Vec2& p, const Reflector& refl) { return refl.direction().cross(p - refl.a); }

struct LineHit {
    bool hit = false;
    double along_path = 0.0;   // parameter on p->q
    double along_refl = 0.0;   // parameter on a->b
};

LineHit intersect(const Vec2& p, const Vec2& q, const Reflector& refl) {
    const Vec2 d = q - p;
    const Vec2 e = refl.direction();
    const double denom = d.cross(e);
    if (std::abs(denom) < kGeomEps) return {};
    const Vec2 ap = refl.a - p;
    return {true, ap.cross(e) / denom, ap.cross(d) / denom};
}

/// Wall point P for a specular path sensor -> P -> target, or nothing if the
/// geometry has no valid interior reflection point.
std::optional<Vec2> specular_point(const Vec2& sensor, const Vec2& target, const Reflector& refl) {
    const double s_side = side(sensor, refl);
    const double t_side = side(target, refl);
    const double scale = refl.direction().norm();
    if (std::abs(s_side) <= kGeomEps * scale || std::abs(t_side) <= kGeomEps * scale) return std::nullopt;
    if ((s_side > 0.0) != (t_side > 0.0)) return std::nullopt;
    const Vec2 img = mirror_across_line(target, refl);
    const LineHit h = intersect(sensor, img, refl);
    if (!h.hit) return std::nullopt;
    if (!(h.along_refl > 0.0 && h.along_refl < 1.0)) return std::nullopt;
    if (!(h.along_path > 0.0 && h.along_path < 1.0)) return std::nullopt;
    return sensor + (img - sensor) * h.along_path;
}

}  // namespace

const char* path_type_name(PathType type) {
    switch (type) {
        case PathType::Direct: return "direct";
        case PathType::Type1Second: return "type1_second";
        case PathType::Type2Second: return "type2_second";
        case PathType::Type2Third: return "type2_third";
    }
    return "unknown";
}

void Reflector::validate() const {
    if (a == b) throw std::invalid_argument("reflector endpoints must be distinct");
    if (!(reflectivity > 0.0 && reflectivity <= 1.0))
        throw std::invalid_argument("reflector reflectivity must lie in (0, 1]");
}

Vec2 mirror_across_line(const Vec2& p, const Reflector& refl) {
    const Vec2 e = refl.direction();
    const double t = (p - refl.a).dot(e) / e.squared_norm();
    const Vec2 foot = refl.a + e * t;
    return foot * 2.0 - p;
}

Vec2 mirror_vector(const Vec2& v, const Reflector& refl) {
    const Vec2 e = refl.direction();
    const double t = v.dot(e) / e.squared_norm();
    return e * (2.0 * t) - v;
}

bool segment_blocked(const Vec2& p, const Vec2& q, const Reflector& refl) {
    const LineHit h = intersect(p, q, refl);
    if (!h.hit) {
        // Parallel: blocked only if collinear and overlapping.
        if (std::abs(side(p, refl)) > kGeomEps * refl.direction().norm()) return false;
        const Vec2 e = refl.direction();
        const double ee = e.squared_norm();
        double t0 = (p - refl.a).dot(e) / ee;
        double t1 = (q - refl.a).dot(e) / ee;
        if (t0 > t1) std::swap(t0, t1);
        return t1 > 0.0 && t0 < 1.0;
    }
    constexpr double kOpen = 1e-9;
    return h.along_path > kOpen && h.along_path < 1.0 - kOpen && h.along_refl >= 0.0 && h.along_refl <= 1.0;
}

bool segment_clear(const Vec2& p, const Vec2& q, std::span<const Reflector> reflectors) {
    return std::none_of(reflectors.begin(), reflectors.end(),
                        [&](const Reflector& r) { return segment_blocked(p, q, r); });
}

double distance_to_segment(const Vec2& p, const Reflector& refl) {
    const Vec2 e = refl.direction();
    const double t = std::clamp((p - refl.a).dot(e) / e.squared_norm(), 0.0, 1.0);
    return distance(p, refl.a + e * t);
}

PathResult direct_path(const Vec2& sensor, const Vec2& target, std::span<const Reflector> reflectors) {
    PathResult out;
    out.type = PathType::Direct;
    out.bounce_order = 1;
    out.range = distance(sensor, target);
    out.azimuth = azimuth_toward(sensor, target);
    out.bounce_points = {target};
    out.valid = out.range > 0.0 && segment_clear(sensor, target, reflectors);
    return out;
}

PathResult type2_third_bounce_path(const Vec2& sensor, const Vec2& target, const Reflector& refl) {
    PathResult out;
    out.type = PathType::Type2Third;
    out.bounce_order = 3;
    const auto p = specular_point(sensor, target, refl);
    if (!p) return out;
    const Vec2 img = mirror_across_line(target, refl);
    out.range = distance(sensor, img);
    out.azimuth = azimuth_toward(sensor, img);
    out.bounce_points = {*p, target, *p};
    out.valid = out.range > 0.0;
    return out;
}

SecondBouncePair second_bounce_paths(const Vec2& sensor, const Vec2& target, const Reflector& refl,
                                     std::span<const Reflector> occluders) {
    SecondBouncePair out;
    out.type1.type = PathType::Type1Second;
    out.type2.type = PathType::Type2Second;
    out.type1.bounce_order = out.type2.bounce_order = 2;
    const auto p = specular_point(sensor, target, refl);
    if (!p) return out;
    const double leg_sp = distance(sensor, *p);
    const double leg_pt = distance(*p, target);
    const double leg_ts = distance(target, sensor);
    if (leg_pt <= kGeomEps || leg_sp <= kGeomEps || leg_ts <= kGeomEps) return out;
    const bool direct_clear = segment_clear(target, sensor, occluders);
    const double range = 0.5 * (leg_sp + leg_pt + leg_ts);

    // sensor -> P -> target -> sensor: arrives from the target direction.
    out.type1.range = range;
    out.type1.azimuth = azimuth_toward(sensor, target);
    out.type1.bounce_points = {*p, target};
    out.type1.valid = direct_clear;

    // sensor -> target -> P -> sensor: arrives from the wall point.
    out.type2.range = range;
    out.type2.azimuth = azimuth_toward(sensor, *p);
    out.type2.bounce_points = {target, *p};
    out.type2.valid = direct_clear;
    return out;
}

double ghost_radial_velocity(const Vec2& target_pos, const Vec2& target_vel, const Vec2& sensor,
                             PathType path_type, const Reflector& refl) {
    const auto unit = [](const Vec2& v) { return v * (1.0 / v.norm()); };
    const Vec2 img = mirror_across_line(target_pos, refl);
    const Vec2 img_vel = mirror_vector(target_vel, refl);
    switch (path_type) {
        case PathType::Direct: {
            if (distance(sensor, target_pos) <= 0.0) throw std::logic_error("ghost_radial_velocity: degenerate direct path");
            return unit(target_pos - sensor).dot(target_vel);
        }
        case PathType::Type2Third: {
            if (!type2_third_bounce_path(sensor, target_pos, refl).valid)
                throw std::logic_error("ghost_radial_velocity: invalid type-2 third-bounce path");
            return unit(img - sensor).dot(img_vel);
        }
        case PathType::Type1Second:
        case PathType::Type2Second: {
            const auto pair = second_bounce_paths(sensor, target_pos, refl);
            if (!pair.type1.valid) throw std::logic_error("ghost_radial_velocity: invalid second-bounce path");
            // |sensor-P| + |P-target| = |sensor - image| for the specular path.
            return 0.5 * (unit(img - sensor).dot(img_vel) + unit(target_pos - sensor).dot(target_vel));
        }
    }
    throw std::logic_error("ghost_radial_velocity: unknown path type");
}

double amplitude_model(double range, int bounce_order, double rho_product, double rcs) {
    if (!(range > 0.0)) throw std::invalid_argument("amplitude_model: range must be > 0");
    if (bounce_order < 1) throw std::invalid_argument("amplitude_model: bounce order must be >= 1");
    if (!(rho_product > 0.0 && rho_product <= 1.0))
        throw std::invalid_argument("amplitude_model: reflectivity product must lie in (0, 1]");
    if (!(rcs > 0.0)) throw std::invalid_argument("amplitude_model: rcs must be > 0");
    return rcs * rho_product / (range * range);
}

}  // namespace ghostseg
