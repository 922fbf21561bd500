#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "ghostseg/multipath.hpp"
#include "ghostseg/radar_core.hpp"

namespace ghostseg {

using Rng = std::mt19937_64;

enum class VruCategory { Pedestrian, Cyclist };

const char* category_name(VruCategory c);
Label direct_label(VruCategory c);
Label ghost_label(VruCategory c);

/// A single VRU walking (or riding) along the waypoints, turning around at
/// the last one and coming back to the first, where it stops.
struct VruTrajectory {
    VruCategory category = VruCategory::Pedestrian;
    std::vector<Vec2> waypoints;
    double speed = 1.4;               // m/s
    double body_radius = 0.3;         // m
    double scatter_count_mean = 4.0;  // detections per frame
    double velocity_jitter = 0.2;     // m/s, per-axis sigma
    double rcs = 1.0;

    struct State {
        Vec2 position;
        Vec2 velocity;
    };

    void validate() const;
    double path_length() const;
    double round_trip_ms() const;
    State state_at(double t_ms) const;
};

struct ClutterModel {
    double points_per_frame_mean = 12.0;  // per sensor
    double amplitude_mean = 3e-3;         // exponential law
    double doppler_sigma = 0.05;          // m/s, static returns
    double max_range = 50.0;              // m, uniform over the FOV sector
    /// Background returns of the walls themselves, per sensor and frame.
    double reflector_points_per_frame_mean = 6.0;
    double reflector_amplitude_mean = 4e-3;

    void validate() const;
};

enum class SecondBounceMode {
    Off,         // not generated
    Background,  // generated, labeled background (unlabeled in the data set)
    Label,       // generated, labeled type1_second_bounce
};

struct SimulationOptions {
    SensorSpec spec;
    double detection_floor = 2e-4;
    /// Measurement noise sigmas; negative selects half of the resolution.
    double range_sigma = -1.0;
    double azimuth_sigma = -1.0;
    double doppler_sigma = -1.0;
    double amplitude_fluctuation_db = 1.5;
    SecondBounceMode second_bounce = SecondBounceMode::Off;
    bool multi_reflector_ghosts = false;

    double effective_range_sigma() const { return range_sigma < 0 ? spec.range_res / 2 : range_sigma; }
    double effective_azimuth_sigma() const { return azimuth_sigma < 0 ? spec.azimuth_res / 2 : azimuth_sigma; }
    double effective_doppler_sigma() const { return doppler_sigma < 0 ? spec.doppler_res / 2 : doppler_sigma; }
};

struct Scenario {
    std::string name;
    std::vector<SensorPose> sensors = default_sensor_poses();
    std::vector<Reflector> reflectors;
    VruTrajectory vru;
    ClutterModel clutter;
    std::int64_t duration_ms = 0;  // 0 -> full out-and-back trajectory
    std::uint64_t seed = 0;

    /// Two bumper sensors 0.5 m either side of the ego origin, looking ahead.
    static std::vector<SensorPose> default_sensor_poses();
    std::int64_t effective_duration_ms(double cycle_time_ms) const;
    void validate(double cycle_time_ms) const;
};

struct ScatterPoint {
    Vec2 position;
    Vec2 velocity;
};

/// Poisson-distributed detections (at least one) uniformly over the body disc.
std::vector<ScatterPoint> scatter_object(const Vec2& center, const Vec2& vel, double body_radius,
                                         double scatter_count_mean, double velocity_jitter, Rng& rng);

/// One radar cycle at time t for all sensors of the scenario.
/// Throws std::out_of_range unless 0 <= t < duration.
Frame simulate_frame(const Scenario& scenario, const SimulationOptions& options, std::int64_t t, Rng& rng);

struct Recording {
    std::string id;
    std::string scenario_name;
    int scenario_index = 0;
    int repeat = 0;
    std::uint64_t seed = 0;
    VruCategory category = VruCategory::Pedestrian;
    std::int64_t duration_ms = 0;
    std::vector<SensorPose> sensors;
    std::vector<Reflector> reflectors;
    std::vector<Frame> frames;  // one per cycle, possibly empty

    std::size_t point_count() const;
};

/// All frames of one scenario run; frame rngs derive from (seed, t) only.
Recording simulate_recording(const Scenario& scenario, const SimulationOptions& options, std::uint64_t seed);

using LabelCounts = std::map<Label, std::size_t>;

struct DatasetConfig {
    std::vector<Scenario> scenarios;
    int repeats = 1;
    double train_fraction = 0.75;
    std::uint64_t master_seed = 1;
    SimulationOptions options;
};

struct Dataset {
    SensorSpec spec;
    std::uint64_t master_seed = 0;
    std::vector<Recording> recordings;
    std::vector<std::string> train_ids;
    std::vector<std::string> test_ids;

    const Recording& recording(const std::string& id) const;
    LabelCounts label_counts(const std::vector<std::string>& ids) const;
    LabelCounts label_counts() const;
};

/// Independent recordings (fresh seed per repeat) split by whole recording,
/// stratified by VRU category. Throws if either partition would be empty.
Dataset build_dataset(const DatasetConfig& config);

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0);

}  // namespace ghostseg
