#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <random>
#include <vector>

#include "ghostseg/evaluator.hpp"
#include "ghostseg/multipath.hpp"
#include "ghostseg/pointseg.hpp"
#include "ghostseg/simulator.hpp"

/// Reference computations that avoid the library's own formulas.
namespace ghostseg::oracle {

/// Mirror by rotating the line onto the x axis, flipping y and rotating back.
inline Vec2 mirror(const Vec2& p, const Vec2& a, const Vec2& b) {
    const double th = std::atan2(b.y - a.y, b.x - a.x);
    const double c = std::cos(th), s = std::sin(th);
    const double lx = c * (p.x - a.x) + s * (p.y - a.y);
    const double ly = -s * (p.x - a.x) + c * (p.y - a.y);
    return {a.x + c * lx + s * ly, a.y + s * lx - c * ly};
}

inline double dist(const Vec2& a, const Vec2& b) { return std::hypot(a.x - b.x, a.y - b.y); }

inline double azimuth_deg(const Vec2& from, const Vec2& to) {
    return std::atan2(to.y - from.y, to.x - from.x) * 180.0 / std::acos(-1.0);
}

/// Half the round trip sensor -> chain... -> sensor.
inline double chain_range(const Vec2& sensor, const std::vector<Vec2>& chain) {
    double len = 0.0;
    Vec2 prev = sensor;
    for (const auto& p : chain) {
        len += dist(prev, p);
        prev = p;
    }
    return 0.5 * (len + dist(prev, sensor));
}

/// Lies on the closed segment a-b within `tol` (distance and extent).
inline bool on_segment(const Vec2& p, const Vec2& a, const Vec2& b, double tol = 1e-9) {
    const double len = dist(a, b);
    return std::abs(dist(a, p) + dist(p, b) - len) <= tol * std::max(1.0, len);
}

/// Shortest sensor -> wall -> target path by golden-section search along the
/// segment (Fermat's principle). Returns the wall point if the minimum is
/// strictly interior.
inline std::optional<Vec2> fermat_point(const Vec2& s, const Vec2& t, const Vec2& a, const Vec2& b) {
    auto at = [&](double u) { return Vec2{a.x + (b.x - a.x) * u, a.y + (b.y - a.y) * u}; };
    auto f = [&](double u) { return dist(s, at(u)) + dist(at(u), t); };
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    double lo = 0.0, hi = 1.0;
    double x1 = hi - g * (hi - lo), x2 = lo + g * (hi - lo);
    double f1 = f(x1), f2 = f(x2);
    for (int i = 0; i < 200 && hi - lo > 1e-15; ++i) {
        if (f1 < f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        }
    }
    const double u = 0.5 * (lo + hi);
    if (u < 1e-6 || u > 1.0 - 1e-6) return std::nullopt;
    return at(u);
}

/// Orientation test: open segment p-q crosses the closed segment a-b.
inline bool segments_cross(const Vec2& p, const Vec2& q, const Vec2& a, const Vec2& b) {
    auto orient = [](const Vec2& o, const Vec2& u, const Vec2& v) {
        return (u.x - o.x) * (v.y - o.y) - (u.y - o.y) * (v.x - o.x);
    };
    const double d1 = orient(a, b, p), d2 = orient(a, b, q);
    const double d3 = orient(p, q, a), d4 = orient(p, q, b);
    return d1 * d2 < 0.0 && d3 * d4 <= 0.0;
}

/// Training-class name a truth label trains as, written out per setup.
inline std::string class_of(Label l, int setup) {
    static const std::map<int, std::map<Label, std::string>> table{
        {1, {{Label::Pedestrian, "obj"}, {Label::Cyclist, "obj"}}},
        {2, {{Label::GhostPedestrian, "ghost-obj"}, {Label::GhostCyclist, "ghost-obj"}}},
        {3,
         {{Label::Pedestrian, "obj"},
          {Label::Cyclist, "obj"},
          {Label::GhostPedestrian, "ghost-obj"},
          {Label::GhostCyclist, "ghost-obj"}}},
        {4, {{Label::Pedestrian, "ped"}, {Label::Cyclist, "cycl"}}},
        {5, {{Label::GhostPedestrian, "ghost-ped"}, {Label::GhostCyclist, "ghost-cycl"}}},
        {6,
         {{Label::Pedestrian, "ped"},
          {Label::Cyclist, "cycl"},
          {Label::GhostPedestrian, "ghost-ped"},
          {Label::GhostCyclist, "ghost-cycl"}}},
    };
    const auto& m = table.at(setup);
    const auto it = m.find(l);
    return it == m.end() ? "bg" : it->second;
}

struct Counts {
    std::uint64_t tp = 0, fp = 0, fn = 0;
};

/// Recount one class straight from (truth, predicted name) pairs.
inline Counts recount(const std::vector<Label>& truth, const std::vector<std::string>& pred, int setup,
                      const std::string& cls) {
    Counts c;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const bool t = class_of(truth[i], setup) == cls;
        const bool p = pred[i] == cls;
        c.tp += t && p;
        c.fp += !t && p;
        c.fn += t && !p;
    }
    return c;
}

/// Share of ghost-truth points among predictions in `cls_set` whose truth is
/// outside `real`.
inline std::pair<std::uint64_t, std::uint64_t> ghost_fp_recount(const std::vector<Label>& truth,
                                                                const std::vector<std::string>& pred,
                                                                const std::vector<std::string>& cls_set,
                                                                const std::vector<Label>& real) {
    std::uint64_t ghost = 0, total = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        bool predicted = false;
        for (const auto& c : cls_set) predicted = predicted || pred[i] == c;
        bool is_real = false;
        for (Label r : real) is_real = is_real || truth[i] == r;
        if (!predicted || is_real) continue;
        ++total;
        ghost += truth[i] == Label::GhostPedestrian || truth[i] == Label::GhostCyclist;
    }
    return {ghost, total};
}

/// Random wall plus a sensor and target on the same side of it.
struct MirrorCase {
    Vec2 sensor;
    Vec2 target;
    Reflector wall;
};

inline MirrorCase random_mirror_case(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-30.0, 30.0);
    for (;;) {
        MirrorCase c;
        c.wall = {{u(rng), u(rng)}, {u(rng), u(rng)}, 0.6};
        c.sensor = {u(rng) * 0.2, u(rng) * 0.2};
        c.target = {u(rng), u(rng)};
        const Vec2 e = c.wall.b - c.wall.a;
        if (e.norm() < 2.0) continue;
        const double ss = e.cross(c.sensor - c.wall.a) / e.norm();
        const double ts = e.cross(c.target - c.wall.a) / e.norm();
        if (std::abs(ss) < 0.5 || std::abs(ts) < 0.5 || (ss > 0) != (ts > 0)) continue;
        if (dist(c.sensor, c.target) < 0.5) continue;
        return c;
    }
}

/// One VRU hidden from both bumper sensors by a short obstacle, standing next
/// to a long lateral wall. The obstacle top is chosen so every direct line of
/// sight to the body disc is blocked while the mirror path over it stays open.
inline Scenario occluded_scene(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> ux(12.0, 25.0), uy(1.8, 2.6), uv(-1.5, 1.5);
    const double wall_y = 4.0;
    const double radius = 0.3;
    const Vec2 c{ux(rng), uy(rng)};
    const double xo = c.x - 2.5;
    double top = -1e9;
    for (const auto& pose : Scenario::default_sensor_poses()) {
        const Vec2 s = pose.position;
        top = std::max(top, s.y + (c.y + radius - s.y) * (xo - s.x) / (c.x - radius - s.x));
    }
    top += 0.05;

    Scenario sc;
    sc.name = "occluded";
    sc.reflectors = {{{0.0, wall_y}, {60.0, wall_y}, 0.6}, {{xo, -10.0}, {xo, top}, 0.6}};
    sc.vru.category = uv(rng) > 0 ? VruCategory::Pedestrian : VruCategory::Cyclist;
    sc.vru.waypoints = {c, {c.x + 3.0, c.y + 0.1}};
    sc.vru.body_radius = radius;
    sc.vru.scatter_count_mean = 5.0;
    sc.vru.rcs = 1.5;
    sc.clutter.points_per_frame_mean = 0.0;
    sc.clutter.reflector_points_per_frame_mean = 0.0;
    sc.duration_ms = 100;
    return sc;
}

/// Farthest point sampling that recomputes every min-distance from scratch.
inline std::vector<std::size_t> fps_greedy(const Mat& p, std::size_t k, std::size_t start) {
    std::vector<std::size_t> chosen{start};
    while (chosen.size() < k) {
        std::size_t best = 0;
        double best_d = -1.0;
        for (Eigen::Index i = 0; i < p.rows(); ++i) {
            if (std::find(chosen.begin(), chosen.end(), static_cast<std::size_t>(i)) != chosen.end()) continue;
            double dmin = INFINITY;
            for (auto c : chosen) dmin = std::min(dmin, (p.row(i) - p.row(static_cast<Eigen::Index>(c))).squaredNorm());
            if (dmin > best_d) {
                best_d = dmin;
                best = static_cast<std::size_t>(i);
            }
        }
        chosen.push_back(best);
    }
    return chosen;
}

/// Padding order for a cloud shorter than the target size: strongest first,
/// ties to the earlier timestamp and then the smaller range, cycled.
inline std::vector<RadarPoint> padding_cycle(const std::vector<RadarPoint>& cloud, std::size_t n) {
    std::vector<RadarPoint> order = cloud;
    std::stable_sort(order.begin(), order.end(), [](const RadarPoint& a, const RadarPoint& b) {
        if (a.amplitude != b.amplitude) return a.amplitude > b.amplitude;
        if (a.t != b.t) return a.t < b.t;
        return a.r < b.r;
    });
    std::vector<RadarPoint> pad;
    for (std::size_t j = 0; cloud.size() + j < n; ++j) pad.push_back(order[j % order.size()]);
    return pad;
}

}  // namespace ghostseg::oracle
