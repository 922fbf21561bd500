#include "ghostseg/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "ghostseg/text_format.hpp"

namespace ghostseg {

namespace {

bool multiple_of(std::int64_t v, double cycle) {
    const double k = static_cast<double>(v) / cycle;
    return v > 0 && std::abs(k - std::round(k)) < 1e-9;
}

}  // namespace

std::vector<PointCloud> accumulate(std::span<const Frame> frames, std::int64_t window_ms, std::int64_t stride_ms,
                                   double cycle_time_ms) {
    if (stride_ms == 0) stride_ms = window_ms;
    if (!multiple_of(window_ms, cycle_time_ms))
        throw std::invalid_argument("accumulate: window must be a positive multiple of the cycle time");
    if (!multiple_of(stride_ms, cycle_time_ms))
        throw std::invalid_argument("accumulate: stride must be a positive multiple of the cycle time");
    std::vector<PointCloud> out;
    if (frames.empty()) return out;
    const std::int64_t first = frames.front().t;
    const std::int64_t last = frames.back().t;
    std::size_t begin = 0;
    for (std::int64_t start = first; start <= last; start += stride_ms) {
        while (begin < frames.size() && frames[begin].t < start) ++begin;
        PointCloud cloud;
        cloud.start_ms = start;
        for (std::size_t i = begin; i < frames.size() && frames[i].t < start + window_ms; ++i)
            cloud.points.insert(cloud.points.end(), frames[i].points.begin(), frames[i].points.end());
        if (!cloud.points.empty()) out.push_back(std::move(cloud));
    }
    return out;
}

ResampledCloud resample_fixed(std::span<const RadarPoint> cloud, std::size_t n) {
    if (cloud.empty()) throw std::invalid_argument("resample_fixed: empty cloud");
    if (n == 0) throw std::invalid_argument("resample_fixed: target size must be >= 1");
    std::vector<std::size_t> order(cloud.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const auto& pa = cloud[a];
        const auto& pb = cloud[b];
        if (pa.amplitude != pb.amplitude) return pa.amplitude > pb.amplitude;
        if (pa.t != pb.t) return pa.t < pb.t;
        if (pa.r != pb.r) return pa.r < pb.r;
        return a < b;
    });

    ResampledCloud out;
    out.points.reserve(n);
    out.duplicate.reserve(n);
    if (cloud.size() >= n) {
        std::vector<bool> keep(cloud.size(), false);
        for (std::size_t i = 0; i < n; ++i) keep[order[i]] = true;
        for (std::size_t i = 0; i < cloud.size(); ++i) {
            if (!keep[i]) continue;
            out.points.push_back(cloud[i]);
            out.duplicate.push_back(false);
        }
        return out;
    }
    out.points.assign(cloud.begin(), cloud.end());
    out.duplicate.assign(cloud.size(), false);
    for (std::size_t k = 0; out.points.size() < n; k = (k + 1) % order.size()) {
        out.points.push_back(cloud[order[k]]);
        out.duplicate.push_back(true);
    }
    return out;
}

RawFeatures raw_features(const RadarPoint& p, std::span<const SensorPose> sensors) {
    if (p.sensor_id < 0 || static_cast<std::size_t>(p.sensor_id) >= sensors.size())
        throw std::out_of_range("raw_features: sensor id " + std::to_string(p.sensor_id) + " has no pose");
    const Vec2 xy = sensor_to_ego(sensors[static_cast<std::size_t>(p.sensor_id)], p.r, p.phi);
    return {xy.x, xy.y, p.v_r, p.amplitude};
}

NormStats compute_norm_stats(std::span<const CloudView> clouds) {
    RawFeatures sum{0, 0, 0, 0};
    std::size_t count = 0;
    for (const auto& c : clouds)
        for (const auto& p : c.points) {
            const auto f = raw_features(p, c.sensors);
            for (std::size_t k = 0; k < kFeatureChannels; ++k) sum[k] += f[k];
            ++count;
        }
    NormStats s;
    if (count == 0) return s;
    for (std::size_t k = 0; k < kFeatureChannels; ++k) s.mean[k] = sum[k] / static_cast<double>(count);
    RawFeatures sq{0, 0, 0, 0};
    for (const auto& c : clouds)
        for (const auto& p : c.points) {
            const auto f = raw_features(p, c.sensors);
            for (std::size_t k = 0; k < kFeatureChannels; ++k) sq[k] += (f[k] - s.mean[k]) * (f[k] - s.mean[k]);
        }
    for (std::size_t k = 0; k < kFeatureChannels; ++k) {
        const double var = sq[k] / static_cast<double>(count);
        s.stddev[k] = var > 0.0 ? std::sqrt(var) : 1.0;
    }
    return s;
}

std::vector<double> make_features(std::span<const RadarPoint> points, std::span<const SensorPose> sensors,
                                  const NormStats& stats, bool include_amplitude) {
    const std::size_t f = include_amplitude ? 4 : 3;
    std::vector<double> out;
    out.reserve(points.size() * f);
    for (const auto& p : points) {
        const auto raw = raw_features(p, sensors);
        for (std::size_t k = 0; k < f; ++k) out.push_back((raw[k] - stats.mean[k]) / stats.stddev[k]);
    }
    return out;
}

Sample make_sample(const PointCloud& cloud, std::span<const SensorPose> sensors, const NormStats& stats,
                   const PipelineConfig& config) {
    const auto rs = resample_fixed(cloud.points, config.sample_size);
    Sample s;
    s.size = rs.points.size();
    s.channels = config.channels();
    s.recording_id = cloud.recording_id;
    s.start_ms = cloud.start_ms;
    s.features = make_features(rs.points, sensors, stats, config.include_amplitude);
    s.duplicate = rs.duplicate;
    s.positions.reserve(s.size * 2);
    for (const auto& p : rs.points) {
        const auto raw = raw_features(p, sensors);
        s.positions.push_back(raw[0]);
        s.positions.push_back(raw[1]);
        s.amplitude.push_back(p.amplitude);
        s.labels.push_back(p.label);
    }
    return s;
}

std::vector<PointCloud> windows_for(const Dataset& ds, const std::vector<std::string>& ids, const PipelineConfig& config) {
    std::vector<PointCloud> out;
    for (const auto& id : ids) {
        const auto& rec = ds.recording(id);
        auto clouds = accumulate(rec.frames, config.window_ms, config.stride_ms, ds.spec.cycle_time_ms);
        for (auto& c : clouds) {
            c.recording_id = id;
            out.push_back(std::move(c));
        }
    }
    return out;
}

NormStats norm_stats_for(const Dataset& ds, const std::vector<PointCloud>& clouds) {
    std::vector<CloudView> views;
    views.reserve(clouds.size());
    for (const auto& c : clouds) views.push_back({c.points, ds.recording(c.recording_id).sensors});
    return compute_norm_stats(views);
}

std::vector<Sample> make_samples(const Dataset& ds, const std::vector<PointCloud>& clouds, const NormStats& stats,
                                 const PipelineConfig& config) {
    std::vector<Sample> out;
    out.reserve(clouds.size());
    for (const auto& c : clouds) out.push_back(make_sample(c, ds.recording(c.recording_id).sensors, stats, config));
    return out;
}

void write_sample_text(std::ostream& out, const Sample& s) {
    out << "# sample recording=" << s.recording_id << " start_ms=" << s.start_ms << " n=" << s.size
        << " f=" << s.channels << '\n';
    out << "x_m,y_m";
    static const char* kNames[] = {"f_x", "f_y", "f_vr", "f_amplitude"};
    for (std::size_t k = 0; k < s.channels; ++k) out << ',' << kNames[k];
    out << ",amplitude,label,duplicate\n";
    for (std::size_t i = 0; i < s.size; ++i) {
        out << format_double(s.positions[2 * i]) << ',' << format_double(s.positions[2 * i + 1]);
        for (std::size_t k = 0; k < s.channels; ++k) out << ',' << format_double(s.features[i * s.channels + k]);
        out << ',' << format_double(s.amplitude[i]) << ',' << label_name(s.labels[i]) << ','
            << (s.duplicate[i] ? 1 : 0) << '\n';
    }
}

std::string_view train_class_name(TrainClass c) {
    switch (c) {
        case TrainClass::Bg: return "bg";
        case TrainClass::Obj: return "obj";
        case TrainClass::GhostObj: return "ghost-obj";
        case TrainClass::Ped: return "ped";
        case TrainClass::Cycl: return "cycl";
        case TrainClass::GhostPed: return "ghost-ped";
        case TrainClass::GhostCycl: return "ghost-cycl";
    }
    return "?";
}

int Setup::index_of(TrainClass c) const {
    for (std::size_t i = 0; i < classes.size(); ++i)
        if (classes[i] == c) return static_cast<int>(i);
    return -1;
}

const Setup& setup_by_id(int id) {
    using C = TrainClass;
    static const Setup kSetups[kSetupCount] = {
        {1, {C::Bg, C::Obj}},
        {2, {C::Bg, C::GhostObj}},
        {3, {C::Bg, C::Obj, C::GhostObj}},
        {4, {C::Bg, C::Ped, C::Cycl}},
        {5, {C::Bg, C::GhostPed, C::GhostCycl}},
        {6, {C::Bg, C::Ped, C::Cycl, C::GhostPed, C::GhostCycl}},
    };
    if (id < 1 || id > kSetupCount)
        throw std::invalid_argument("unknown setup id " + std::to_string(id) + " (valid ids: 1, 2, 3, 4, 5, 6)");
    return kSetups[id - 1];
}

int remap_label(Label label, const Setup& setup) {
    TrainClass want = TrainClass::Bg;
    switch (label) {
        case Label::Pedestrian: want = setup.grouped() ? TrainClass::Obj : TrainClass::Ped; break;
        case Label::Cyclist: want = setup.grouped() ? TrainClass::Obj : TrainClass::Cycl; break;
        case Label::GhostPedestrian: want = setup.grouped() ? TrainClass::GhostObj : TrainClass::GhostPed; break;
        case Label::GhostCyclist: want = setup.grouped() ? TrainClass::GhostObj : TrainClass::GhostCycl; break;
        case Label::Background:
        case Label::Type1SecondBounce: want = TrainClass::Bg; break;
    }
    const int idx = setup.index_of(want);
    return idx < 0 ? 0 : idx;
}

std::vector<int> remap_labels(std::span<const Label> labels, const Setup& setup) {
    std::vector<int> out;
    out.reserve(labels.size());
    for (Label l : labels) out.push_back(remap_label(l, setup));
    return out;
}

}  // namespace ghostseg
