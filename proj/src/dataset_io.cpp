#include "ghostseg/dataset_io.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "ghostseg/json_io.hpp"
#include "ghostseg/text_format.hpp"

namespace ghostseg {

namespace fs = std::filesystem;
using nlohmann::json;

void write_point_table(std::ostream& out, const std::string& recording_id, const std::vector<Frame>& frames) {
    out << kPointTableHeader << '\n';
    for (const auto& f : frames) {
        for (const auto& p : f.points) {
            out << recording_id << ',' << p.t << ',' << p.sensor_id << ',' << format_double(p.r) << ','
                << format_double(p.phi) << ',' << format_double(p.v_r) << ',' << format_double(p.amplitude) << ','
                << label_name(p.label) << '\n';
        }
    }
}

std::vector<PointRow> read_point_table(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("point table: missing header line");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kPointTableHeader) throw std::runtime_error("point table: unexpected header '" + line + "'");
    std::vector<PointRow> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        try {
            const auto f = split(line, ',');
            if (f.size() != 8) throw std::invalid_argument("expected 8 fields, got " + std::to_string(f.size()));
            PointRow row;
            row.recording_id = std::string(f[0]);
            row.point.t = parse_int(f[1], "frame_t_ms");
            row.point.sensor_id = static_cast<int>(parse_int(f[2], "sensor_id"));
            row.point.r = parse_double(f[3], "r_m");
            row.point.phi = parse_double(f[4], "phi_deg");
            row.point.v_r = parse_double(f[5], "vr_mps");
            row.point.amplitude = parse_double(f[6], "amplitude");
            row.point.label = parse_label(f[7]);
            if (row.point.amplitude < 0.0) throw std::invalid_argument("negative amplitude");
            rows.push_back(std::move(row));
        } catch (const std::invalid_argument& e) {
            throw std::runtime_error("point table line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return rows;
}

std::vector<Frame> rows_to_frames(const std::vector<PointRow>& rows, std::int64_t duration_ms, double cycle_time_ms) {
    const auto cycle = static_cast<std::int64_t>(cycle_time_ms);
    std::vector<Frame> frames;
    for (std::int64_t t = 0; t < duration_ms; t += cycle) frames.push_back(Frame{t, {}});
    for (const auto& row : rows) {
        const auto idx = row.point.t / cycle;
        if (row.point.t < 0 || idx >= static_cast<std::int64_t>(frames.size()))
            throw std::runtime_error("point table: frame time " + std::to_string(row.point.t) + " outside recording");
        frames[static_cast<std::size_t>(idx)].points.push_back(row.point);
    }
    return frames;
}

namespace {

json recording_meta(const Recording& rec, const SensorSpec& spec) {
    json sensors = json::array();
    for (const auto& s : rec.sensors) sensors.push_back(to_json(s));
    json refl = json::array();
    for (const auto& r : rec.reflectors) refl.push_back(to_json(r));
    return json{{"recording_id", rec.id},
                {"scenario", rec.scenario_name},
                {"scenario_index", rec.scenario_index},
                {"repeat", rec.repeat},
                {"seed", rec.seed},
                {"category", category_name(rec.category)},
                {"duration_ms", rec.duration_ms},
                {"sensor_spec", to_json(spec)},
                {"sensors", sensors},
                {"reflectors", refl}};
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    out << text;
}

std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json counts_json(const LabelCounts& c) {
    json j = json::object();
    for (const auto& [label, n] : c) j[std::string(label_name(label))] = n;
    return j;
}

}  // namespace

std::string render_label_counts(const LabelCounts& counts) {
    static const std::pair<Label, const char*> kColumns[] = {
        {Label::Pedestrian, "Pedestrian"},      {Label::GhostPedestrian, "Ghost Ped."},
        {Label::Cyclist, "Bike"},               {Label::GhostCyclist, "Ghost Cycl."},
        {Label::Background, "Garbage"},         {Label::Type1SecondBounce, "Type-1 2nd"}};
    std::ostringstream head, vals;
    for (const auto& [label, title] : kColumns) {
        const auto it = counts.find(label);
        const std::size_t n = it == counts.end() ? 0 : it->second;
        if (label == Label::Type1SecondBounce && n == 0) continue;
        head << std::setw(13) << title;
        vals << std::setw(13) << n;
    }
    return head.str() + "\n" + vals.str() + "\n";
}

void write_dataset(const fs::path& dir, const Dataset& ds) {
    fs::create_directories(dir / "recordings");
    json recs = json::array();
    for (const auto& rec : ds.recordings) {
        std::ostringstream table;
        write_point_table(table, rec.id, rec.frames);
        write_text(dir / "recordings" / (rec.id + ".csv"), table.str());
        write_text(dir / "recordings" / (rec.id + ".meta.json"), recording_meta(rec, ds.spec).dump(2) + "\n");
        recs.push_back(rec.id);
    }
    json meta{{"format", "ghostseg-dataset"},
              {"version", 1},
              {"master_seed", ds.master_seed},
              {"sensor_spec", to_json(ds.spec)},
              {"recordings", recs},
              {"train", ds.train_ids},
              {"test", ds.test_ids},
              {"label_counts",
               {{"all", counts_json(ds.label_counts())},
                {"train", counts_json(ds.label_counts(ds.train_ids))},
                {"test", counts_json(ds.label_counts(ds.test_ids))}}}};
    write_text(dir / "metadata.json", meta.dump(2) + "\n");
    write_text(dir / "label_counts.txt", render_label_counts(ds.label_counts()));
}

Dataset load_dataset(const fs::path& dir) {
    const json meta = json::parse(read_text(dir / "metadata.json"));
    if (meta.value("format", "") != "ghostseg-dataset")
        throw std::runtime_error(dir.string() + ": not a ghostseg dataset");
    Dataset ds;
    ds.master_seed = meta.at("master_seed").get<std::uint64_t>();
    ds.spec = sensor_spec_from_json(meta.at("sensor_spec"));
    ds.train_ids = meta.at("train").get<std::vector<std::string>>();
    ds.test_ids = meta.at("test").get<std::vector<std::string>>();
    for (const auto& id_json : meta.at("recordings")) {
        const auto id = id_json.get<std::string>();
        const json rm = json::parse(read_text(dir / "recordings" / (id + ".meta.json")));
        Recording rec;
        rec.id = id;
        rec.scenario_name = rm.at("scenario").get<std::string>();
        rec.scenario_index = rm.at("scenario_index").get<int>();
        rec.repeat = rm.at("repeat").get<int>();
        rec.seed = rm.at("seed").get<std::uint64_t>();
        rec.category = rm.at("category").get<std::string>() == "cyclist" ? VruCategory::Cyclist : VruCategory::Pedestrian;
        rec.duration_ms = rm.at("duration_ms").get<std::int64_t>();
        for (const auto& s : rm.at("sensors")) rec.sensors.push_back(sensor_pose_from_json(s));
        for (const auto& r : rm.at("reflectors")) rec.reflectors.push_back(reflector_from_json(r));
        std::ifstream table(dir / "recordings" / (id + ".csv"));
        if (!table) throw std::runtime_error("missing point table for " + id);
        auto rows = read_point_table(table);
        for (const auto& row : rows)
            if (row.recording_id != id)
                throw std::runtime_error("point table for " + id + " contains rows of " + row.recording_id);
        rec.frames = rows_to_frames(rows, rec.duration_ms, ds.spec.cycle_time_ms);
        ds.recordings.push_back(std::move(rec));
    }
    return ds;
}

std::string dataset_fingerprint(const fs::path& dir) {
    std::uint64_t h = fnv1a64(read_text(dir / "metadata.json"));
    const json meta = json::parse(read_text(dir / "metadata.json"));
    for (const auto& id : meta.at("recordings")) {
        h = fnv1a64(read_text(dir / "recordings" / (id.get<std::string>() + ".csv")), h);
    }
    std::ostringstream ss;
    ss << std::hex << std::setw(16) << std::setfill('0') << h;
    return ss.str();
}

}  // namespace ghostseg
