#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "ghostseg/simulator.hpp"

namespace ghostseg {

/// Column header of the point-table text format.
inline constexpr const char* kPointTableHeader =
    "recording_id,frame_t_ms,sensor_id,r_m,phi_deg,vr_mps,amplitude,label_name";

struct PointRow {
    std::string recording_id;
    RadarPoint point;
};

void write_point_table(std::ostream& out, const std::string& recording_id, const std::vector<Frame>& frames);
/// Throws std::runtime_error naming the line on malformed input.
std::vector<PointRow> read_point_table(std::istream& in);

/// Rebuild one frame per cycle in [0, duration) from loose rows.
std::vector<Frame> rows_to_frames(const std::vector<PointRow>& rows, std::int64_t duration_ms, double cycle_time_ms);

/// Writes recordings/<id>.csv, recordings/<id>.meta.json, metadata.json and
/// label_counts.txt under `dir` (created if missing).
void write_dataset(const std::filesystem::path& dir, const Dataset& ds);
Dataset load_dataset(const std::filesystem::path& dir);

/// Per-label detection counts laid out as one header row and one value row.
std::string render_label_counts(const LabelCounts& counts);

/// Fingerprint over every recording table and the metadata file.
std::string dataset_fingerprint(const std::filesystem::path& dir);

}  // namespace ghostseg
