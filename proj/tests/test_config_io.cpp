#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "ghostseg/config.hpp"
#include "ghostseg/dataset_io.hpp"
#include "ghostseg/trainer.hpp"

using namespace ghostseg;
namespace fs = std::filesystem;

namespace {

const char* kSmall = R"(master_seed: 99
repeats: 2
train_fraction: 0.5
simulation:
  second_bounce: label
scenarios:
  - name: ped
    seed: 1
    duration_ms: 1500
    reflectors:
      - {a: [2, 3.5], b: [30, 3.5]}
    vru: {category: pedestrian, waypoints: [[5, 1.5], [15, 1.5]], speed: 1.4}
  - name: bike
    seed: 2
    duration_ms: 1500
    reflectors:
      - {a: [2, -3.5], b: [30, -3.5]}
    vru: {category: cyclist, waypoints: [[5, -1.5], [25, -1.5]], speed: 4.0}
)";

ConfigError config_error(const std::string& text) {
    try {
        parse_dataset_config(text);
    } catch (const ConfigError& e) {
        return e;
    }
    FAIL("expected a ConfigError");
    return ConfigError("", 0, "");
}

std::string replace(std::string s, const std::string& from, const std::string& to) {
    const auto at = s.find(from);
    REQUIRE(at != std::string::npos);
    return s.replace(at, from.size(), to);
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("a small scenario document parses") {
    const auto cfg = parse_dataset_config(kSmall);
    CHECK(cfg.master_seed == 99);
    CHECK(cfg.repeats == 2);
    CHECK(cfg.options.second_bounce == SecondBounceMode::Label);
    REQUIRE(cfg.scenarios.size() == 2);
    CHECK(cfg.scenarios[1].vru.category == VruCategory::Cyclist);
    CHECK(cfg.scenarios[1].vru.speed == 4.0);
    CHECK(cfg.scenarios[0].reflectors[0].reflectivity == 0.6);
    CHECK(cfg.scenarios[0].sensors.size() == 2);
}

TEST_CASE("config errors name the field and line") {
    auto e = config_error(replace(kSmall, "speed: 4.0", "speed: -4.0"));
    CHECK(e.field() == "scenarios[1].vru");
    CHECK(e.line() == 18);

    e = config_error(replace(kSmall, "  second_bounce: label", "  second_bounce: sometimes"));
    CHECK(e.field() == "simulation.second_bounce");
    CHECK(e.line() == 5);

    e = config_error(replace(kSmall, "repeats: 2", "repeets: 2"));
    CHECK(e.field() == "repeets");
    CHECK(e.line() == 2);

    e = config_error(replace(kSmall, "{a: [2, 3.5], b: [30, 3.5]}", "{a: [2, 3.5]}"));
    CHECK(e.field() == "scenarios[0].reflectors[0].b");

    e = config_error(replace(kSmall, "category: cyclist", "category: horse"));
    CHECK(e.field() == "scenarios[1].vru.category");
    CHECK(std::string(e.what()).find("line 18") != std::string::npos);

    CHECK_THROWS_AS(parse_dataset_config("scenarios: []\n"), ConfigError);
    CHECK_THROWS_AS(parse_dataset_config("a: [1, 2\n"), ConfigError);
}

TEST_CASE("the bundled configs parse") {
    const fs::path root = GHOSTSEG_SOURCE_DIR;
    const auto ds = load_dataset_config(root / "configs/scenarios.yaml");
    CHECK(ds.scenarios.size() >= 8);
    CHECK(ds.options.second_bounce == SecondBounceMode::Off);
    const auto ex = load_experiment_config(root / "configs/experiment.yaml");
    CHECK(ex.setups == std::vector<int>{1, 2, 3, 4, 5, 6});
    CHECK(ex.pipeline.window_ms == 200);
    CHECK(ex.train.weighted);
    CHECK_THROWS_AS(load_dataset_config(root / "configs/missing.yaml"), ConfigError);
}

TEST_CASE("experiment config rejects unknown fields") {
    CHECK_THROWS_AS(parse_experiment_config("setups: [1]\ntrian: {}\n"), ConfigError);
    CHECK_THROWS_AS(parse_experiment_config("setups: [9]\n"), std::exception);
}

TEST_CASE("point tables round-trip") {
    const auto ds = build_dataset(parse_dataset_config(kSmall));
    const auto& rec = ds.recordings.front();
    std::stringstream ss;
    write_point_table(ss, rec.id, rec.frames);
    CHECK(ss.str().rfind(std::string(kPointTableHeader) + "\n", 0) == 0);
    const auto rows = read_point_table(ss);
    REQUIRE(rows.size() == rec.point_count());
    const auto frames = rows_to_frames(rows, rec.duration_ms, ds.spec.cycle_time_ms);
    REQUIRE(frames.size() == rec.frames.size());
    for (std::size_t i = 0; i < frames.size(); ++i) CHECK(frames[i].points == rec.frames[i].points);
}

TEST_CASE("malformed point tables name the line") {
    std::stringstream ss(std::string(kPointTableHeader) + "\nrec,0,0,1.0,2.0,0.5,0.001,pedestrian\nrec,0,zero,1,2,3,4,pedestrian\n");
    try {
        read_point_table(ss);
        FAIL("expected an error");
    } catch (const std::runtime_error& e) {
        INFO(std::string(e.what()));
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
}

TEST_CASE("datasets survive a write and reload") {
    TempDir dir("ghostseg_io_roundtrip");
    const auto ds = build_dataset(parse_dataset_config(kSmall));
    write_dataset(dir.path, ds);
    CHECK(fs::exists(dir.path / "metadata.json"));
    CHECK(fs::exists(dir.path / "label_counts.txt"));
    const auto back = load_dataset(dir.path);
    CHECK(back.master_seed == ds.master_seed);
    CHECK(back.train_ids == ds.train_ids);
    CHECK(back.test_ids == ds.test_ids);
    REQUIRE(back.recordings.size() == ds.recordings.size());
    for (std::size_t i = 0; i < ds.recordings.size(); ++i) {
        CHECK(back.recordings[i].id == ds.recordings[i].id);
        CHECK(back.recordings[i].category == ds.recordings[i].category);
        CHECK(back.recordings[i].duration_ms == ds.recordings[i].duration_ms);
        CHECK(back.recordings[i].point_count() == ds.recordings[i].point_count());
        for (std::size_t f = 0; f < ds.recordings[i].frames.size(); ++f)
            CHECK(back.recordings[i].frames[f].points == ds.recordings[i].frames[f].points);
    }
    CHECK(back.label_counts() == ds.label_counts());
    CHECK(slurp(dir.path / "label_counts.txt") == render_label_counts(ds.label_counts()));
}

TEST_CASE("the same seed writes byte-identical datasets") {
    TempDir a("ghostseg_io_a"), b("ghostseg_io_b"), c("ghostseg_io_c");
    auto cfg = parse_dataset_config(kSmall);
    write_dataset(a.path, build_dataset(cfg));
    write_dataset(b.path, build_dataset(cfg));
    cfg.master_seed = 100;
    write_dataset(c.path, build_dataset(cfg));
    std::size_t files = 0;
    for (const auto& e : fs::recursive_directory_iterator(a.path)) {
        if (!e.is_regular_file()) continue;
        ++files;
        CHECK(slurp(e.path()) == slurp(b.path / fs::relative(e.path(), a.path)));
    }
    CHECK(files >= 6);
    CHECK(dataset_fingerprint(a.path) == dataset_fingerprint(b.path));
    CHECK(dataset_fingerprint(a.path) != dataset_fingerprint(c.path));
}
