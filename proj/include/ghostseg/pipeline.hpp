#pragma once

#include <array>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ghostseg/radar_core.hpp"
#include "ghostseg/simulator.hpp"

namespace ghostseg {

/// Union of detections (all sensors) over one accumulation window.
struct PointCloud {
    std::string recording_id;
    std::int64_t start_ms = 0;
    std::vector<RadarPoint> points;
};

/// Windows [start, start + window) advancing by `stride_ms` (0 -> window).
/// Empty windows are skipped. Throws std::invalid_argument if the window or
/// stride is not a positive multiple of the cycle time.
std::vector<PointCloud> accumulate(std::span<const Frame> frames, std::int64_t window_ms, std::int64_t stride_ms,
                                   double cycle_time_ms);

struct ResampledCloud {
    std::vector<RadarPoint> points;
    std::vector<bool> duplicate;
};

/// Fixed-size cloud: drops the weakest returns when too large, otherwise
/// appends copies cycling through the points in descending amplitude.
/// Ordering ties: earlier timestamp, then smaller range, then input order.
ResampledCloud resample_fixed(std::span<const RadarPoint> cloud, std::size_t n);

inline constexpr std::size_t kFeatureChannels = 4;  // x, y, v_r, amplitude
using RawFeatures = std::array<double, kFeatureChannels>;

/// Ego-frame (x, y), radial velocity, amplitude.
RawFeatures raw_features(const RadarPoint& p, std::span<const SensorPose> sensors);

struct NormStats {
    RawFeatures mean{0, 0, 0, 0};
    RawFeatures stddev{1, 1, 1, 1};

    bool operator==(const NormStats&) const = default;
};

struct CloudView {
    std::span<const RadarPoint> points;
    std::span<const SensorPose> sensors;
};

/// Per-channel mean/stddev over every point; zero-variance channels get 1.
NormStats compute_norm_stats(std::span<const CloudView> clouds);

/// Standardized channels. With `include_amplitude == false` the amplitude
/// channel is omitted (3 columns).
std::vector<double> make_features(std::span<const RadarPoint> points, std::span<const SensorPose> sensors,
                                  const NormStats& stats, bool include_amplitude = true);

struct Sample {
    std::size_t size = 0;               // N
    std::size_t channels = 0;           // F
    std::vector<double> positions;      // N x 2, ego frame, meters
    std::vector<double> features;       // N x F, standardized
    std::vector<double> amplitude;      // N, raw linear amplitude
    std::vector<Label> labels;          // N, ground truth
    std::vector<bool> duplicate;        // N
    std::string recording_id;
    std::int64_t start_ms = 0;
};

struct PipelineConfig {
    std::int64_t window_ms = 200;
    std::int64_t stride_ms = 0;  // 0 -> window
    std::size_t sample_size = 2048;
    bool include_amplitude = true;

    std::size_t channels() const { return include_amplitude ? 4 : 3; }
};

Sample make_sample(const PointCloud& cloud, std::span<const SensorPose> sensors, const NormStats& stats,
                   const PipelineConfig& config);

/// Windows of every listed recording; used for stats and sample building.
std::vector<PointCloud> windows_for(const Dataset& ds, const std::vector<std::string>& ids, const PipelineConfig& config);
NormStats norm_stats_for(const Dataset& ds, const std::vector<PointCloud>& clouds);
std::vector<Sample> make_samples(const Dataset& ds, const std::vector<PointCloud>& clouds, const NormStats& stats,
                                 const PipelineConfig& config);

/// Matrix dump: header line with dimensions, then one row per point.
void write_sample_text(std::ostream& out, const Sample& s);

// ---- training setups ------------------------------------------------------

enum class TrainClass { Bg, Obj, GhostObj, Ped, Cycl, GhostPed, GhostCycl };

std::string_view train_class_name(TrainClass c);

struct Setup {
    int id = 0;
    std::vector<TrainClass> classes;  // index 0 is always background

    std::size_t class_count() const { return classes.size(); }
    bool grouped() const { return id <= 3; }
    int index_of(TrainClass c) const;  // -1 if absent
};

inline constexpr int kSetupCount = 6;

/// Throws std::invalid_argument listing the valid ids 1-6.
const Setup& setup_by_id(int id);

/// Training class index of a ground-truth label; categories the setup does
/// not train map to background.
int remap_label(Label label, const Setup& setup);
std::vector<int> remap_labels(std::span<const Label> labels, const Setup& setup);

}  // namespace ghostseg
