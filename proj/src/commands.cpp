#include "ghostseg/commands.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "ghostseg/config.hpp"
#include "ghostseg/dataset_io.hpp"
#include "ghostseg/evaluator.hpp"
#include "ghostseg/trainer.hpp"
#include "ghostseg/text_format.hpp"

namespace fs = std::filesystem;

namespace ghostseg {

OutputLock::OutputLock(const fs::path& dir) : path_(dir / ".ghostseg.lock") {
    fs::create_directories(dir);
    std::FILE* f = std::fopen(path_.string().c_str(), "wx");
    if (!f)
        throw std::runtime_error("output directory " + dir.string() + " is in use (remove " + path_.string() +
                                 " if no other ghostseg process is running)");
    std::fclose(f);
}

OutputLock::~OutputLock() {
    std::error_code ec;
    fs::remove(path_, ec);
}

fs::path resolve_output(const fs::path& out) {
    if (out.empty()) throw ConfigError("--out", 0, "an output path is required");
    const char* root = std::getenv("GHOSTSEG_OUTPUT_ROOT");
    if (root && *root && out.is_relative()) return fs::path(root) / out;
    return out;
}

int guarded(const std::function<void()>& fn, std::ostream& err) {
    try {
        fn();
        return kExitOk;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return kExitConfigError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitRuntimeError;
    }
}

std::vector<int> parse_setup_list(const std::string& text) {
    std::vector<int> out;
    for (auto tok : split(text, ',')) {
        while (!tok.empty() && tok.front() == ' ') tok.remove_prefix(1);
        while (!tok.empty() && tok.back() == ' ') tok.remove_suffix(1);
        int id = 0;
        try {
            id = static_cast<int>(parse_int(tok, "setup id"));
        } catch (const std::invalid_argument&) {
            throw std::invalid_argument("unknown setup id '" + std::string(tok) + "' (valid ids: 1, 2, 3, 4, 5, 6)");
        }
        setup_by_id(id);
        out.push_back(id);
    }
    if (out.empty()) throw std::invalid_argument("no setup ids given (valid ids: 1, 2, 3, 4, 5, 6)");
    return out;
}

namespace {

void write_file(const fs::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << bytes;
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void require_file(const fs::path& p, const std::string& what) {
    if (p.empty()) throw ConfigError(what, 0, "a path is required");
    if (!fs::is_regular_file(p)) throw ConfigError(what, 0, "no such file: " + p.string());
}

void require_dataset(const fs::path& dir) {
    if (dir.empty()) throw ConfigError("dataset", 0, "no dataset directory given (--dataset or 'dataset' in --config)");
    if (!fs::is_regular_file(dir / "metadata.json"))
        throw ConfigError("dataset", 0, dir.string() + " does not contain a generated dataset");
}

std::string setup_file(const std::string& stem, int setup, const std::string& ext) {
    return stem + "_setup" + std::to_string(setup) + ext;
}

/// Experiment config with command-line overrides applied; dataset path checked.
ExperimentConfig experiment_from(const CommandOptions& o) {
    ExperimentConfig cfg;
    if (!o.config.empty()) {
        require_file(o.config, "--config");
        cfg = load_experiment_config(o.config);
    }
    if (!o.dataset.empty()) cfg.dataset = o.dataset;
    if (!o.setups.empty()) {
        cfg.setups = o.setups;
        cfg.train.setup = o.setups.front();
    }
    if (o.seed) cfg.train.seed = *o.seed;
    require_dataset(cfg.dataset);
    return cfg;
}

struct TrainedSetup {
    TrainResult result;
    std::string checkpoint;
};

void log_epoch(std::ostream& log, int setup, const EpochInfo& e) {
    log << "setup " << setup << " epoch " << e.epoch << ": loss " << format_double(e.train_loss) << ", val F1 "
        << format_percent(e.val_macro_f1) << (e.improved ? " *" : "") << '\n';
}

struct CheckpointContext {
    Checkpoint ck;
    int setup = 0;
    PipelineConfig pipeline;
    NormStats stats;
};

CheckpointContext open_checkpoint(const fs::path& path) {
    CheckpointContext c;
    c.ck = load_checkpoint(path);
    const auto& x = c.ck.extra;
    if (!x.contains("setup") || !x.contains("pipeline") || !x.contains("norm_stats"))
        throw std::runtime_error(path.string() + ": checkpoint lacks setup, pipeline or standardization metadata");
    c.setup = x.at("setup").get<int>();
    setup_by_id(c.setup);
    const auto& p = x.at("pipeline");
    c.pipeline.window_ms = p.at("window_ms").get<std::int64_t>();
    c.pipeline.stride_ms = p.at("stride_ms").get<std::int64_t>();
    c.pipeline.sample_size = p.at("sample_size").get<std::size_t>();
    c.pipeline.include_amplitude = p.at("include_amplitude").get<bool>();
    c.stats.mean = x.at("norm_stats").at("mean").get<RawFeatures>();
    c.stats.stddev = x.at("norm_stats").at("stddev").get<RawFeatures>();
    return c;
}

}  // namespace

void run_generate(const CommandOptions& o, std::ostream& log) {
    require_file(o.config, "--config");
    auto cfg = load_dataset_config(o.config);
    if (o.seed) cfg.master_seed = *o.seed;
    const auto out = resolve_output(o.out);
    OutputLock lock(out);
    const auto ds = build_dataset(cfg);
    write_dataset(out, ds);
    std::size_t points = 0;
    for (const auto& r : ds.recordings) points += r.point_count();
    log << "dataset " << out.string() << ": " << ds.recordings.size() << " recordings (" << ds.train_ids.size()
        << " train, " << ds.test_ids.size() << " test), " << points << " points\n";
    log << render_label_counts(ds.label_counts());
    if (o.verbose) log << "fingerprint " << dataset_fingerprint(out) << '\n';
}

void run_train(const CommandOptions& o, std::ostream& log) {
    const auto cfg = experiment_from(o);
    const auto out = resolve_output(o.out);
    OutputLock lock(out);
    const auto ds = load_dataset(cfg.dataset);
    const auto data = prepare_samples(ds, cfg.pipeline);
    log << data.train.size() << " training windows of " << cfg.pipeline.sample_size << " points\n";
    const std::vector<int> setups = o.setups.empty() ? std::vector<int>{cfg.train.setup} : o.setups;
    for (int id : setups) {
        TrainConfig tc = cfg.train;
        tc.setup = id;
        const auto result = train(data.train, tc, [&](const EpochInfo& e) {
            if (o.verbose) log_epoch(log, id, e);
        });
        const auto bytes = checkpoint_bytes(result, tc, cfg.pipeline, data.stats);
        write_file(out / setup_file("checkpoint", id, ".ckpt"), bytes);
        std::ostringstream hist;
        result.history.write(hist);
        write_file(out / setup_file("history", id, ".csv"), hist.str());
        log << "setup " << id << ": best epoch " << result.history.best_epoch << ", val F1 "
            << format_percent(result.history.val_macro_f1[static_cast<std::size_t>(result.history.best_epoch - 1)])
            << ", checkpoint " << checkpoint_id(bytes) << '\n';
    }
}

void run_evaluate(const CommandOptions& o, std::ostream& log) {
    require_file(o.checkpoint, "--checkpoint");
    fs::path dataset = o.dataset;
    if (dataset.empty() && !o.config.empty()) {
        require_file(o.config, "--config");
        dataset = load_experiment_config(o.config).dataset;
    }
    require_dataset(dataset);
    const auto out = resolve_output(o.out);
    OutputLock lock(out);
    const auto ctx = open_checkpoint(o.checkpoint);
    const auto ds = load_dataset(dataset);
    const auto windows = windows_for(ds, ds.test_ids, ctx.pipeline);
    const auto samples = make_samples(ds, windows, ctx.stats, ctx.pipeline);
    const auto& setup = setup_by_id(ctx.setup);
    const auto report = make_report(ctx.setup, checkpoint_id(read_file(o.checkpoint)), dataset_fingerprint(dataset),
                                    evaluate_samples(samples, ctx.ck.params, setup));
    write_file(out / setup_file("report", ctx.setup, ".csv"), report_text(report));
    log << render_report(report);
}

void run_experiment_matrix_command(const CommandOptions& o, std::ostream& log) {
    const auto cfg = experiment_from(o);
    const auto out = resolve_output(o.out);
    OutputLock lock(out);
    const auto ds = load_dataset(cfg.dataset);
    const auto hash = dataset_fingerprint(cfg.dataset);
    const auto data = prepare_samples(ds, cfg.pipeline);
    log << data.train.size() << " training and " << data.test.size() << " test windows of "
        << cfg.pipeline.sample_size << " points\n";
    const auto results = run_experiment_matrix(data, cfg, hash, [&](int setup, const EpochInfo& e) {
        if (o.verbose) log_epoch(log, setup, e);
    });
    std::vector<EvalReport> reports;
    for (const auto& r : results) {
        write_file(out / setup_file("checkpoint", r.setup, ".ckpt"), r.checkpoint);
        std::ostringstream hist;
        r.train.history.write(hist);
        write_file(out / setup_file("history", r.setup, ".csv"), hist.str());
        write_file(out / setup_file("report", r.setup, ".csv"), report_text(r.report));
        reports.push_back(r.report);
        if (o.verbose) log << '\n' << render_report(r.report);
    }
    const auto table = render_comparison(reports);
    write_file(out / "comparison.txt", table);
    log << '\n' << table;
}

void run_render_scene(const CommandOptions& o, std::ostream& log) {
    fs::path dataset = o.dataset;
    if (dataset.empty() && !o.config.empty()) {
        require_file(o.config, "--config");
        dataset = load_experiment_config(o.config).dataset;
    }
    require_dataset(dataset);
    if (o.recording.empty()) throw ConfigError("--recording", 0, "a recording id is required");
    if (o.window_ms <= 0) throw ConfigError("--window-ms", 0, "must be > 0");
    if (!o.checkpoint.empty()) require_file(o.checkpoint, "--checkpoint");
    const auto out = resolve_output(o.out);
    const auto parent = out.has_parent_path() ? out.parent_path() : fs::path(".");
    OutputLock lock(parent);

    const auto ds = load_dataset(dataset);
    const auto& rec = ds.recording(o.recording);
    PointCloud cloud;
    cloud.recording_id = rec.id;
    cloud.start_ms = o.start_ms;
    for (const auto& f : rec.frames)
        if (f.t >= o.start_ms && f.t < o.start_ms + o.window_ms)
            cloud.points.insert(cloud.points.end(), f.points.begin(), f.points.end());
    if (cloud.points.empty())
        throw std::runtime_error("frame window [" + std::to_string(o.start_ms) + ", " +
                                 std::to_string(o.start_ms + o.window_ms) + ") ms of " + rec.id + " has no points");

    SceneSpec scene;
    scene.title = rec.id + " (" + rec.scenario_name + "), t = " + std::to_string(o.start_ms) + " ms + " +
                  std::to_string(o.window_ms) + " ms";
    scene.reflectors = rec.reflectors;
    scene.sensors = rec.sensors;
    if (o.checkpoint.empty()) {
        for (const auto& p : cloud.points) {
            const auto f = raw_features(p, rec.sensors);
            scene.points.push_back({p, {f[0], f[1]}, std::nullopt});
        }
    } else {
        const auto ctx = open_checkpoint(o.checkpoint);
        const auto rs = resample_fixed(cloud.points, ctx.pipeline.sample_size);
        const auto sample = make_sample(cloud, rec.sensors, ctx.stats, ctx.pipeline);
        const auto pred = predict(sample, ctx.ck.params);
        scene.setup_id = ctx.setup;
        for (std::size_t i = 0; i < rs.points.size(); ++i) {
            if (rs.duplicate[i]) continue;
            const auto f = raw_features(rs.points[i], rec.sensors);
            scene.points.push_back({rs.points[i], {f[0], f[1]}, pred[i]});
        }
    }
    write_file(out, render_scene_svg(scene));
    log << "wrote " << out.string() << " (" << scene.points.size() << " points)\n";
}

}  // namespace ghostseg
