#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ghostseg/pipeline.hpp"
#include "ghostseg/pointseg.hpp"

namespace ghostseg {

/// Exit statuses of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitConfigError = 2, kExitRuntimeError = 3 };

struct CommandOptions {
    std::filesystem::path config;
    std::filesystem::path out;
    std::filesystem::path dataset;     // overrides the dataset named in an experiment config
    std::filesystem::path checkpoint;
    std::optional<std::uint64_t> seed;
    std::vector<int> setups;           // empty: from the config
    bool verbose = false;
    // render-scene
    std::string recording;
    std::int64_t start_ms = 0;
    std::int64_t window_ms = 200;
};

/// Holds `<dir>/.ghostseg.lock` for its lifetime; throws std::runtime_error if
/// another process owns the directory.
class OutputLock {
public:
    explicit OutputLock(const std::filesystem::path& dir);
    ~OutputLock();
    OutputLock(const OutputLock&) = delete;
    OutputLock& operator=(const OutputLock&) = delete;

private:
    std::filesystem::path path_;
};

/// Resolves a relative output path under $GHOSTSEG_OUTPUT_ROOT when set.
std::filesystem::path resolve_output(const std::filesystem::path& out);

/// Commands print progress and tables to `log`. ConfigError signals bad
/// configuration; any other exception is a runtime failure.
void run_generate(const CommandOptions& o, std::ostream& log);
void run_train(const CommandOptions& o, std::ostream& log);
void run_evaluate(const CommandOptions& o, std::ostream& log);
void run_experiment_matrix_command(const CommandOptions& o, std::ostream& log);
void run_render_scene(const CommandOptions& o, std::ostream& log);

/// Maps exceptions of `fn` to an exit status, printing the message to `err`.
int guarded(const std::function<void()>& fn, std::ostream& err);

/// "1,2,3" -> {1, 2, 3}; throws std::invalid_argument listing valid ids.
std::vector<int> parse_setup_list(const std::string& text);

// ---- scene rendering -------------------------------------------------------

struct ScenePoint {
    RadarPoint point;
    Vec2 position;                // ego frame
    std::optional<int> predicted;  // setup class index
};

struct SceneSpec {
    std::string title;
    std::vector<Reflector> reflectors;
    std::vector<SensorPose> sensors;
    std::vector<ScenePoint> points;
    std::optional<int> setup_id;  // set when predictions are present
};

/// Static SVG: walls, sensors and one marker per point. Without predictions
/// markers are colored by ground truth; with predictions, by the outcome
/// (correct object, ghost taken for an object, ...), incorrect ones drawn as
/// crosses.
std::string render_scene_svg(const SceneSpec& scene);

}  // namespace ghostseg
