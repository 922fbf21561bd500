#include "ghostseg/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

namespace ghostseg {

const char* category_name(VruCategory c) { return c == VruCategory::Pedestrian ? "pedestrian" : "cyclist"; }

Label direct_label(VruCategory c) { return c == VruCategory::Pedestrian ? Label::Pedestrian : Label::Cyclist; }

Label ghost_label(VruCategory c) {
    return c == VruCategory::Pedestrian ? Label::GhostPedestrian : Label::GhostCyclist;
}

void VruTrajectory::validate() const {
    if (waypoints.size() < 2) throw std::invalid_argument("vru: at least two waypoints required");
    if (!(speed > 0.0)) throw std::invalid_argument("vru: speed must be > 0");
    if (!(body_radius > 0.0)) throw std::invalid_argument("vru: body_radius must be > 0");
    if (!(scatter_count_mean >= 0.0)) throw std::invalid_argument("vru: scatter_count_mean must be >= 0");
    if (!(velocity_jitter >= 0.0)) throw std::invalid_argument("vru: velocity_jitter must be >= 0");
    if (!(rcs > 0.0)) throw std::invalid_argument("vru: rcs must be > 0");
    if (!(path_length() > 0.0)) throw std::invalid_argument("vru: waypoints span zero length");
}

double VruTrajectory::path_length() const {
    double len = 0.0;
    for (std::size_t i = 1; i < waypoints.size(); ++i) len += distance(waypoints[i - 1], waypoints[i]);
    return len;
}

double VruTrajectory::round_trip_ms() const { return 2.0 * path_length() / speed * 1000.0; }

VruTrajectory::State VruTrajectory::state_at(double t_ms) const {
    const double total = path_length();
    const double travelled = speed * t_ms / 1000.0;
    if (travelled >= 2.0 * total) return {waypoints.front(), {0.0, 0.0}};
    const bool outbound = travelled <= total;
    double s = outbound ? travelled : 2.0 * total - travelled;
    for (std::size_t i = 1; i < waypoints.size(); ++i) {
        const Vec2 seg = waypoints[i] - waypoints[i - 1];
        const double len = seg.norm();
        if (s <= len || i + 1 == waypoints.size()) {
            const Vec2 dir = seg * (1.0 / len);
            const Vec2 pos = waypoints[i - 1] + dir * std::min(s, len);
            return {pos, dir * (outbound ? speed : -speed)};
        }
        s -= len;
    }
    return {waypoints.back(), {0.0, 0.0}};
}

void ClutterModel::validate() const {
    if (points_per_frame_mean < 0.0 || amplitude_mean < 0.0 || doppler_sigma < 0.0 || max_range < 0.0 ||
        reflector_points_per_frame_mean < 0.0 || reflector_amplitude_mean < 0.0)
        throw std::invalid_argument("clutter: rates and sigmas must be >= 0");
}

std::vector<SensorPose> Scenario::default_sensor_poses() {
    return {SensorPose{{0.0, 0.5}, 0.0}, SensorPose{{0.0, -0.5}, 0.0}};
}

std::int64_t Scenario::effective_duration_ms(double cycle_time_ms) const {
    if (duration_ms > 0) return duration_ms;
    const double cycles = std::ceil(vru.round_trip_ms() / cycle_time_ms);
    return static_cast<std::int64_t>(cycles * cycle_time_ms);
}

void Scenario::validate(double cycle_time_ms) const {
    if (sensors.empty()) throw std::invalid_argument("scenario '" + name + "': at least one sensor required");
    for (const auto& r : reflectors) r.validate();
    vru.validate();
    clutter.validate();
    const auto d = effective_duration_ms(cycle_time_ms);
    const double cycles = static_cast<double>(d) / cycle_time_ms;
    if (d <= 0 || std::abs(cycles - std::round(cycles)) > 1e-9)
        throw std::invalid_argument("scenario '" + name + "': duration must be a positive multiple of the cycle time");
}

std::vector<ScatterPoint> scatter_object(const Vec2& center, const Vec2& vel, double body_radius,
                                         double scatter_count_mean, double velocity_jitter, Rng& rng) {
    int count = 1;
    if (scatter_count_mean > 0.0) count = std::max(1, std::poisson_distribution<int>(scatter_count_mean)(rng));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<ScatterPoint> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i) {
        ScatterPoint sp{center, vel};
        if (body_radius > 0.0) {
            const double rad = body_radius * std::sqrt(unit(rng));
            const double ang = 2.0 * kPi * unit(rng);
            sp.position = center + Vec2{rad * std::cos(ang), rad * std::sin(ang)};
        }
        if (velocity_jitter > 0.0) {
            std::normal_distribution<double> jitter(0.0, velocity_jitter);
            sp.velocity.x += jitter(rng);
            sp.velocity.y += jitter(rng);
        }
        out.push_back(sp);
    }
    return out;
}

namespace {

/// Measurement noise, amplitude floor and grid snapping shared by every
/// emitted detection.
class Detector {
public:
    Detector(const SimulationOptions& options, Rng& rng)
        : options_(options),
          rng_(rng),
          range_noise_(options.effective_range_sigma()),
          azimuth_noise_(options.effective_azimuth_sigma()),
          doppler_noise_(options.effective_doppler_sigma()) {}

    double gaussian(double sigma) {
        if (sigma <= 0.0) return 0.0;
        return std::normal_distribution<double>(0.0, sigma)(rng_);
    }

    double fluctuation() {
        const double db = gaussian(options_.amplitude_fluctuation_db);
        return std::pow(10.0, db / 10.0);
    }

    void emit(Frame& frame, int sensor_id, double range, double phi, double v_r, double amplitude, Label label) {
        RadarPoint p;
        p.r = range + gaussian(range_noise_);
        p.phi = phi + gaussian(azimuth_noise_);
        p.v_r = v_r + gaussian(doppler_noise_);
        p.amplitude = amplitude;
        p.t = frame.t;
        p.sensor_id = sensor_id;
        p.label = label;
        if (amplitude < options_.detection_floor) return;
        if (auto q = clip_and_quantize_point(p, options_.spec)) frame.points.push_back(*q);
    }

private:
    const SimulationOptions& options_;
    Rng& rng_;
    double range_noise_;
    double azimuth_noise_;
    double doppler_noise_;
};

double wrap_degrees(double deg) {
    while (deg > 180.0) deg -= 360.0;
    while (deg <= -180.0) deg += 360.0;
    return deg;
}

std::vector<std::size_t> ghost_reflectors(const Scenario& sc, const SimulationOptions& options, const Vec2& center) {
    std::vector<std::size_t> idx(sc.reflectors.size());
    std::iota(idx.begin(), idx.end(), 0);
    if (options.multi_reflector_ghosts || idx.size() <= 1) return idx;
    const auto nearest = std::min_element(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return distance_to_segment(center, sc.reflectors[a]) < distance_to_segment(center, sc.reflectors[b]);
    });
    return {*nearest};
}

std::vector<Reflector> all_except(const std::vector<Reflector>& refl, std::size_t skip) {
    std::vector<Reflector> out;
    out.reserve(refl.size());
    for (std::size_t i = 0; i < refl.size(); ++i)
        if (i != skip) out.push_back(refl[i]);
    return out;
}

void emit_clutter(const Scenario& sc, const SimulationOptions& options, Frame& frame, Detector& det, Rng& rng) {
    const auto& spec = options.spec;
    const auto& cl = sc.clutter;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t s = 0; s < sc.sensors.size(); ++s) {
        const int sid = static_cast<int>(s);
        if (cl.points_per_frame_mean > 0.0) {
            const int n = std::poisson_distribution<int>(cl.points_per_frame_mean)(rng);
            const double rmin = spec.range_band.lower;
            const double rmax = std::min(cl.max_range, spec.range_band.upper);
            for (int i = 0; i < n; ++i) {
                const double r = std::sqrt(unit(rng) * (rmax * rmax - rmin * rmin) + rmin * rmin);
                const double phi = spec.azimuth_band.lower + unit(rng) * (spec.azimuth_band.upper - spec.azimuth_band.lower);
                const double amp = cl.amplitude_mean > 0.0
                                       ? std::exponential_distribution<double>(1.0 / cl.amplitude_mean)(rng)
                                       : 0.0;
                const double vr = det.gaussian(cl.doppler_sigma);
                det.emit(frame, sid, r, phi, vr, amp, Label::Background);
            }
        }
        if (cl.reflector_points_per_frame_mean > 0.0 && !sc.reflectors.empty()) {
            const int n = std::poisson_distribution<int>(cl.reflector_points_per_frame_mean)(rng);
            std::vector<double> lengths;
            for (const auto& r : sc.reflectors) lengths.push_back(r.direction().norm());
            std::discrete_distribution<std::size_t> pick(lengths.begin(), lengths.end());
            for (int i = 0; i < n; ++i) {
                const std::size_t k = pick(rng);
                const Reflector& refl = sc.reflectors[k];
                const Vec2 wall_pt = refl.a + refl.direction() * unit(rng);
                const double amp = cl.reflector_amplitude_mean > 0.0
                                       ? std::exponential_distribution<double>(1.0 / cl.reflector_amplitude_mean)(rng)
                                       : 0.0;
                const double vr = det.gaussian(cl.doppler_sigma);
                const auto others = all_except(sc.reflectors, k);
                if (!segment_clear(sc.sensors[s].position, wall_pt, others)) continue;
                const Polar pol = ego_to_sensor(sc.sensors[s], wall_pt);
                det.emit(frame, sid, pol.r, pol.phi, vr, amp, Label::Background);
            }
        }
    }
}

}  // namespace

Frame simulate_frame(const Scenario& sc, const SimulationOptions& options, std::int64_t t, Rng& rng) {
    const auto duration = sc.effective_duration_ms(options.spec.cycle_time_ms);
    if (t < 0 || t >= duration) throw std::out_of_range("simulate_frame: t outside [0, duration)");
    Frame frame;
    frame.t = t;
    Detector det(options, rng);

    const auto state = sc.vru.state_at(static_cast<double>(t));
    const auto scatter =
        scatter_object(state.position, state.velocity, sc.vru.body_radius, sc.vru.scatter_count_mean,
                       sc.vru.velocity_jitter, rng);
    const auto ghost_sources = ghost_reflectors(sc, options, state.position);
    const Label real = direct_label(sc.vru.category);
    const Label ghost = ghost_label(sc.vru.category);
    const Label second = options.second_bounce == SecondBounceMode::Label ? Label::Type1SecondBounce : Label::Background;

    for (std::size_t s = 0; s < sc.sensors.size(); ++s) {
        const SensorPose& pose = sc.sensors[s];
        const int sid = static_cast<int>(s);
        const auto to_sensor_phi = [&](double world_az) { return wrap_degrees(world_az - pose.heading_deg); };
        for (const auto& sp : scatter) {
            const auto direct = direct_path(pose.position, sp.position, sc.reflectors);
            if (direct.valid) {
                const Vec2 los = sp.position - pose.position;
                const double vr = los.dot(sp.velocity) / los.norm();
                const double amp = amplitude_model(direct.range, 1, 1.0, sc.vru.rcs) * det.fluctuation();
                det.emit(frame, sid, direct.range, to_sensor_phi(direct.azimuth), vr, amp, real);
            }
            for (std::size_t k : ghost_sources) {
                const Reflector& refl = sc.reflectors[k];
                const auto others = all_except(sc.reflectors, k);
                const auto third = type2_third_bounce_path(pose.position, sp.position, refl);
                if (third.valid && segment_clear(pose.position, third.bounce_points[0], others) &&
                    segment_clear(third.bounce_points[0], sp.position, others)) {
                    const double vr =
                        ghost_radial_velocity(sp.position, sp.velocity, pose.position, PathType::Type2Third, refl);
                    const double rho = refl.reflectivity * refl.reflectivity;
                    const double amp = amplitude_model(third.range, 3, rho, sc.vru.rcs) * det.fluctuation();
                    det.emit(frame, sid, third.range, to_sensor_phi(third.azimuth), vr, amp, ghost);
                }
                if (options.second_bounce == SecondBounceMode::Off) continue;
                const auto pair = second_bounce_paths(pose.position, sp.position, refl, sc.reflectors);
                if (!pair.type1.valid) continue;
                const Vec2 p = pair.type1.bounce_points[0];
                if (!segment_clear(pose.position, p, others) || !segment_clear(p, sp.position, others)) continue;
                const double vr =
                    ghost_radial_velocity(sp.position, sp.velocity, pose.position, PathType::Type1Second, refl);
                for (const PathResult* path : {&pair.type1, &pair.type2}) {
                    const double amp =
                        amplitude_model(path->range, 2, refl.reflectivity, sc.vru.rcs) * det.fluctuation();
                    det.emit(frame, sid, path->range, to_sensor_phi(path->azimuth), vr, amp, second);
                }
            }
        }
    }
    emit_clutter(sc, options, frame, det, rng);
    return frame;
}

std::size_t Recording::point_count() const {
    std::size_t n = 0;
    for (const auto& f : frames) n += f.points.size();
    return n;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
    // splitmix64 finalizer over a simple combination
    auto mix = [](std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ull;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    };
    return mix(mix(mix(base) ^ a) ^ b);
}

Recording simulate_recording(const Scenario& scenario, const SimulationOptions& options, std::uint64_t seed) {
    scenario.validate(options.spec.cycle_time_ms);
    Recording rec;
    rec.scenario_name = scenario.name;
    rec.seed = seed;
    rec.category = scenario.vru.category;
    rec.duration_ms = scenario.effective_duration_ms(options.spec.cycle_time_ms);
    rec.sensors = scenario.sensors;
    rec.reflectors = scenario.reflectors;
    const auto cycle = static_cast<std::int64_t>(options.spec.cycle_time_ms);
    for (std::int64_t t = 0; t < rec.duration_ms; t += cycle) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(t)));
        rec.frames.push_back(simulate_frame(scenario, options, t, rng));
    }
    return rec;
}

const Recording& Dataset::recording(const std::string& id) const {
    for (const auto& r : recordings)
        if (r.id == id) return r;
    throw std::out_of_range("unknown recording '" + id + "'");
}

LabelCounts Dataset::label_counts(const std::vector<std::string>& ids) const {
    LabelCounts counts;
    for (Label l : kAllLabels) counts[l] = 0;
    for (const auto& id : ids)
        for (const auto& f : recording(id).frames)
            for (const auto& p : f.points) ++counts[p.label];
    return counts;
}

LabelCounts Dataset::label_counts() const {
    std::vector<std::string> ids;
    for (const auto& r : recordings) ids.push_back(r.id);
    return label_counts(ids);
}

Dataset build_dataset(const DatasetConfig& config) {
    config.options.spec.validate();
    if (config.repeats < 1) throw std::invalid_argument("dataset: repeats must be >= 1");
    if (!(config.train_fraction > 0.0 && config.train_fraction < 1.0))
        throw std::invalid_argument("dataset: train_fraction must lie in (0, 1)");
    const std::size_t total = config.scenarios.size() * static_cast<std::size_t>(config.repeats);
    if (total < 2) throw std::invalid_argument("dataset: at least two recordings required");

    Dataset ds;
    ds.spec = config.options.spec;
    ds.master_seed = config.master_seed;
    for (std::size_t s = 0; s < config.scenarios.size(); ++s) {
        for (int rep = 0; rep < config.repeats; ++rep) {
            const Scenario& sc = config.scenarios[s];
            const std::uint64_t seed = derive_seed(config.master_seed ^ sc.seed, s + 1, static_cast<std::uint64_t>(rep) + 1);
            Recording rec = simulate_recording(sc, config.options, seed);
            char id[32];
            std::snprintf(id, sizeof(id), "rec_%03zu_r%d", s, rep);
            rec.id = id;
            rec.scenario_index = static_cast<int>(s);
            rec.repeat = rep;
            ds.recordings.push_back(std::move(rec));
        }
    }

    // Whole-recording split, stratified by VRU category with largest-remainder
    // allocation of the global test count.
    const auto n_test_total =
        static_cast<std::size_t>(std::llround(static_cast<double>(total) * (1.0 - config.train_fraction)));
    if (n_test_total == 0 || n_test_total >= total)
        throw std::invalid_argument("dataset: split leaves an empty partition");
    std::map<VruCategory, std::vector<std::size_t>> by_cat;
    for (std::size_t i = 0; i < ds.recordings.size(); ++i) by_cat[ds.recordings[i].category].push_back(i);
    std::map<VruCategory, std::size_t> quota;
    std::vector<std::pair<double, VruCategory>> remainders;
    std::size_t assigned = 0;
    for (const auto& [cat, members] : by_cat) {
        const double exact = static_cast<double>(n_test_total) * members.size() / static_cast<double>(total);
        quota[cat] = static_cast<std::size_t>(std::floor(exact));
        assigned += quota[cat];
        remainders.emplace_back(exact - std::floor(exact), cat);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t i = 0; assigned < n_test_total && i < remainders.size(); ++i, ++assigned)
        ++quota[remainders[i].second];

    Rng rng(derive_seed(config.master_seed, 0x5eed5u));
    std::vector<bool> is_test(ds.recordings.size(), false);
    for (auto& [cat, members] : by_cat) {
        std::shuffle(members.begin(), members.end(), rng);
        for (std::size_t i = 0; i < quota[cat] && i < members.size(); ++i) is_test[members[i]] = true;
    }
    for (std::size_t i = 0; i < ds.recordings.size(); ++i)
        (is_test[i] ? ds.test_ids : ds.train_ids).push_back(ds.recordings[i].id);
    if (ds.train_ids.empty() || ds.test_ids.empty())
        throw std::invalid_argument("dataset: split leaves an empty partition");
    return ds;
}

}  // namespace ghostseg
