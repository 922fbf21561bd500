#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ghostseg/commands.hpp"
#include "ghostseg/config.hpp"
#include "ghostseg/dataset_io.hpp"

using namespace ghostseg;
namespace fs = std::filesystem;

namespace {

const char* kScenarios = R"(master_seed: 5
repeats: 2
train_fraction: 0.5
scenarios:
  - name: ped
    seed: 1
    duration_ms: 3000
    reflectors:
      - {a: [2, 3.5], b: [30, 3.5]}
    vru: {category: pedestrian, waypoints: [[5, 1.5], [15, 1.5]], speed: 1.4}
  - name: bike
    seed: 2
    duration_ms: 3000
    reflectors:
      - {a: [2, -3.5], b: [30, -3.5]}
    vru: {category: cyclist, waypoints: [[5, -1.5], [25, -1.5]], speed: 4.0}
)";

const char* kExperiment = R"(dataset: data
setups: [3]
pipeline: {window_ms: 200, sample_size: 32}
train: {epochs: 1, batch_size: 4, seed: 3}
network: {preset: tiny, dropout: 0.0}
)";

struct Workspace {
    fs::path root;
    Workspace() : root(fs::temp_directory_path() / "ghostseg_cli_test") {
        fs::remove_all(root);
        fs::create_directories(root);
        write(root / "scenarios.yaml", kScenarios);
        write(root / "experiment.yaml", kExperiment);
    }
    ~Workspace() { fs::remove_all(root); }

    static void write(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

    CommandOptions generate(const std::string& out = "data") const {
        CommandOptions o;
        o.config = root / "scenarios.yaml";
        o.out = root / out;
        return o;
    }
    CommandOptions experiment(const std::string& out) const {
        CommandOptions o;
        o.config = root / "experiment.yaml";
        o.out = root / out;
        return o;
    }
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run(void (*cmd)(const CommandOptions&, std::ostream&), const CommandOptions& o, std::string* err = nullptr) {
    std::ostringstream log, e;
    const int code = guarded([&] { cmd(o, log); }, e);
    if (err) *err = e.str();
    return code;
}

std::size_t occurrences(const std::string& s, const std::string& needle) {
    std::size_t n = 0;
    for (auto at = s.find(needle); at != std::string::npos; at = s.find(needle, at + 1)) ++n;
    return n;
}

std::string legend_of(const std::string& svg) { return svg.substr(svg.find("<g id=\"legend\"")); }

}  // namespace

TEST_CASE("generate writes a dataset and honors the seed override") {
    Workspace ws;
    REQUIRE(run(run_generate, ws.generate()) == kExitOk);
    CHECK(fs::exists(ws.root / "data/metadata.json"));
    CHECK(!fs::exists(ws.root / "data/.ghostseg.lock"));
    auto o = ws.generate("data2");
    REQUIRE(run(run_generate, o) == kExitOk);
    CHECK(dataset_fingerprint(ws.root / "data") == dataset_fingerprint(ws.root / "data2"));
    o = ws.generate("data3");
    o.seed = 6;
    REQUIRE(run(run_generate, o) == kExitOk);
    CHECK(dataset_fingerprint(ws.root / "data") != dataset_fingerprint(ws.root / "data3"));
}

TEST_CASE("configuration problems exit with status 2") {
    Workspace ws;
    std::string err;
    auto o = ws.generate();
    o.config = ws.root / "nope.yaml";
    CHECK(run(run_generate, o, &err) == kExitConfigError);
    CHECK(err.find("nope.yaml") != std::string::npos);

    Workspace::write(ws.root / "bad.yaml", "master_seed: 1\nrepeats: 0\nscenarios: []\n");
    o.config = ws.root / "bad.yaml";
    CHECK(run(run_generate, o, &err) == kExitConfigError);
    CHECK(err.find("repeats") != std::string::npos);

    auto t = ws.experiment("model");
    t.dataset = ws.root / "empty_dir";
    CHECK(run(run_train, t, &err) == kExitConfigError);
    CHECK(err.find("dataset") != std::string::npos);
}

TEST_CASE("runtime failures exit with status 3") {
    std::ostringstream err;
    CHECK(guarded([] { throw std::runtime_error("boom"); }, err) == kExitRuntimeError);
    CHECK(err.str() == "error: boom\n");
}

TEST_CASE("a held output lock blocks a second writer") {
    Workspace ws;
    std::string err;
    {
        OutputLock lock(ws.root / "data");
        CHECK(run(run_generate, ws.generate(), &err) == kExitRuntimeError);
        CHECK(err.find("in use") != std::string::npos);
    }
    CHECK(run(run_generate, ws.generate()) == kExitOk);
}

TEST_CASE("setup lists reject unknown ids and list the valid ones") {
    CHECK(parse_setup_list("1, 3,6") == std::vector<int>{1, 3, 6});
    for (const char* bad : {"1,9", "x", ""}) {
        try {
            parse_setup_list(bad);
            FAIL("expected an error for " << bad);
        } catch (const std::invalid_argument& e) {
            CHECK(std::string(e.what()).find("1, 2, 3, 4, 5, 6") != std::string::npos);
        }
    }
}

TEST_CASE("relative outputs resolve under the output root") {
    ::setenv("GHOSTSEG_OUTPUT_ROOT", "/tmp/ghostseg_root", 1);
    CHECK(resolve_output("run1") == fs::path("/tmp/ghostseg_root/run1"));
    CHECK(resolve_output("/abs/run1") == fs::path("/abs/run1"));
    ::unsetenv("GHOSTSEG_OUTPUT_ROOT");
    CHECK(resolve_output("run1") == fs::path("run1"));
    CHECK_THROWS_AS(resolve_output(""), ConfigError);
}

TEST_CASE("train, evaluate and render end to end") {
    Workspace ws;
    REQUIRE(run(run_generate, ws.generate()) == kExitOk);

    auto t = ws.experiment("nested/model");
    std::string err;
    REQUIRE(run(run_train, t, &err) == kExitOk);
    const fs::path ckpt = ws.root / "nested/model/checkpoint_setup3.ckpt";
    CHECK(fs::exists(ckpt));
    CHECK(fs::exists(ws.root / "nested/model/history_setup3.csv"));

    CommandOptions e;
    e.config = ws.root / "experiment.yaml";
    e.checkpoint = ckpt;
    e.out = ws.root / "eval1";
    REQUIRE(run(run_evaluate, e, &err) == kExitOk);
    e.out = ws.root / "eval2";
    REQUIRE(run(run_evaluate, e) == kExitOk);
    const auto report = slurp(ws.root / "eval1/report_setup3.csv");
    CHECK(!report.empty());
    CHECK(report == slurp(ws.root / "eval2/report_setup3.csv"));

    const auto ds = load_dataset(ws.root / "data");
    CommandOptions r;
    r.dataset = ws.root / "data";
    r.recording = ds.test_ids.front();
    r.start_ms = 400;
    r.out = ws.root / "scene_a.svg";
    REQUIRE(run(run_render_scene, r, &err) == kExitOk);
    r.out = ws.root / "scene_b.svg";
    REQUIRE(run(run_render_scene, r) == kExitOk);
    const auto svg = slurp(ws.root / "scene_a.svg");
    CHECK(svg == slurp(ws.root / "scene_b.svg"));
    CHECK(svg.rfind("<svg", 0) == 0);
    // Ground-truth legend: one entry per label, type-1 omitted when absent.
    CHECK(occurrences(legend_of(svg), "<text") == 5);

    r.checkpoint = ckpt;
    r.out = ws.root / "scene_pred.svg";
    REQUIRE(run(run_render_scene, r) == kExitOk);
    CHECK(slurp(ws.root / "scene_pred.svg") != svg);

    r.recording = "no_such_recording";
    CHECK(run(run_render_scene, r) != kExitOk);
}

TEST_CASE("prediction markers show the outcome") {
    SceneSpec s;
    s.title = "a < b";
    s.sensors = Scenario::default_sensor_poses();
    s.setup_id = 3;
    const auto& setup = setup_by_id(3);
    auto cls = [&](const char* name) {
        for (std::size_t c = 0; c < setup.classes.size(); ++c)
            if (train_class_name(setup.classes[c]) == name) return static_cast<int>(c);
        return -1;
    };
    RadarPoint ghost;
    ghost.label = Label::GhostPedestrian;
    RadarPoint ped;
    ped.label = Label::Pedestrian;
    s.points = {{ped, {5, 1}, cls("obj")}, {ghost, {6, 2}, cls("obj")}};
    const auto svg = render_scene_svg(s);
    CHECK(svg.find("a &lt; b") != std::string::npos);
    const auto legend = legend_of(svg);
    CHECK(legend.find("object correct") != std::string::npos);
    CHECK(legend.find("ghost taken for object") != std::string::npos);
    CHECK(occurrences(legend, "<text") == 2);
    const auto points = svg.substr(svg.find("<g id=\"points\""));
    CHECK(occurrences(points.substr(0, points.find("</g>")), "<path") == 1);
    CHECK(occurrences(points.substr(0, points.find("</g>")), "<circle") == 1);
    CHECK(render_scene_svg(s) == svg);
}
