// Command line front end for the percept engine. Everything engine-side
// happens through the shared library's C interface; this file only parses
// arguments, moves frames through a small decode/process hand-off, and
// prints results.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <csignal>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include <percept/percept.h>

namespace fs = std::filesystem;

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop.store(true); }

[[noreturn]] void die(pct_status st) {
    std::fprintf(stderr, "error: %s: %s\n", pct_status_name(st), pct_last_error());
    std::exit(1);
}

void check(pct_status st) {
    if (st != PCT_OK) die(st);
}

// Options shared by the subcommands that open a pipeline.
struct PipelineArgs {
    std::string config_path;
    std::string weights;
    std::vector<std::string> outputs;
    double conf = -1.0;
    double iou = -1.0;
    std::uint64_t seed = 0;
    bool seed_given = false;

    void attach(CLI::App* cmd, bool with_outputs) {
        cmd->add_option("--config", config_path, "pipeline config (JSON)")
            ->required()
            ->check(CLI::ExistingFile);
        cmd->add_option("--weights", weights, "weight file, overriding the config");
        cmd->add_option("--conf", conf, "confidence threshold")->check(CLI::Range(0.0, 1.0));
        cmd->add_option("--iou", iou, "suppression threshold")->check(CLI::Range(0.0, 1.0));
        cmd->add_option("--seed", seed, "seed for network init / training")
            ->each([this](const std::string&) { seed_given = true; });
        if (with_outputs)
            cmd->add_option("--out", outputs, "output mode: json, braille, or phrase (repeatable)")
                ->check(CLI::IsMember({"json", "braille", "phrase"}));
    }

    pct_pipeline* open() const {
        pct_pipeline* p = nullptr;
        check(pct_pipeline_open(config_path.c_str(), &p));
        if (!weights.empty()) check(pct_pipeline_set_weights(p, weights.c_str()));
        if (conf >= 0 || iou >= 0) check(pct_pipeline_set_thresholds(p, conf, iou));
        if (seed_given) check(pct_pipeline_set_seed(p, seed));
        if (!outputs.empty()) {
            std::string csv;
            for (const auto& o : outputs) {
                if (!csv.empty()) csv += ",";
                csv += o;
            }
            check(pct_pipeline_set_outputs(p, csv.c_str()));
        }
        return p;
    }
};

struct OutputModes {
    bool json = false, braille = false, phrase = false;
};

OutputModes selected_modes(const pct_pipeline* p) {
    OutputModes m;
    const std::string csv = pct_pipeline_outputs(p);
    m.json = csv.find("json") != std::string::npos;
    m.braille = csv.find("braille") != std::string::npos;
    m.phrase = csv.find("phrase") != std::string::npos;
    return m;
}

// Prints the selected renderings for one processed frame. Returns false
// when a rendering failed (braille can).
bool emit_result(pct_result* r, const OutputModes& modes, const std::string& source) {
    bool ok = true;
    if (modes.json) std::fputs(pct_result_json(r), stdout);
    if (modes.braille) {
        const char* cells = nullptr;
        const pct_status st = pct_result_braille(r, &cells);
        if (st != PCT_OK) {
            std::fprintf(stderr, "error: %s: %s: %s\n", source.c_str(), pct_status_name(st),
                         pct_last_error());
            ok = false;
        } else {
            std::fputs(cells, stdout);
            std::fputc('\n', stdout);
        }
    }
    if (modes.phrase) {
        std::fputs(pct_result_phrase(r), stdout);
        std::fputc('\n', stdout);
    }
    std::fflush(stdout);
    return ok;
}

// One decoded frame in flight between the reader thread and the
// inference thread.
struct FrameJob {
    std::string source;
    pct_frame* frame = nullptr;  // null when decoding failed
    pct_status status = PCT_OK;
    std::string error;
    double decode_ms = 0.0;
};

// Single-slot hand-off: the reader decodes at most one frame ahead of
// the network, and frames always come out in push order.
class HandoffQueue {
public:
    void push(FrameJob job) {
        std::unique_lock<std::mutex> lock(m_);
        space_.wait(lock, [this] { return !slot_.has_value() || closed_; });
        if (closed_) {
            pct_frame_free(job.frame);
            return;
        }
        slot_ = std::move(job);
        ready_.notify_one();
    }

    bool pop(FrameJob& out) {
        std::unique_lock<std::mutex> lock(m_);
        ready_.wait(lock, [this] { return slot_.has_value() || closed_; });
        if (!slot_.has_value()) return false;
        out = std::move(*slot_);
        slot_.reset();
        space_.notify_one();
        return true;
    }

    void close() {
        {
            std::lock_guard<std::mutex> lock(m_);
            closed_ = true;
        }
        ready_.notify_all();
        space_.notify_all();
    }

private:
    std::mutex m_;
    std::condition_variable ready_, space_;
    std::optional<FrameJob> slot_;
    bool closed_ = false;
};

FrameJob load_job(const pct_engine* engine, const std::string& path) {
    FrameJob job;
    job.source = path;
    const auto t0 = std::chrono::steady_clock::now();
    const pct_status st = pct_frame_load(engine, path.c_str(), &job.frame);
    job.decode_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    if (st != PCT_OK) {
        job.status = st;
        job.error = pct_last_error();
        job.frame = nullptr;
    }
    return job;
}

int run_detect(const PipelineArgs& args, const std::vector<std::string>& images) {
    pct_pipeline* pipeline = args.open();
    pct_engine* engine = nullptr;
    check(pct_engine_open(pipeline, &engine));
    const OutputModes modes = selected_modes(pipeline);

    HandoffQueue queue;
    std::thread reader([&] {
        for (const std::string& path : images) queue.push(load_job(engine, path));
        queue.close();
    });

    int failures = 0;
    FrameJob job;
    while (queue.pop(job)) {
        if (!job.frame) {
            std::fprintf(stderr, "error: %s: %s: %s\n", job.source.c_str(),
                         pct_status_name(job.status), job.error.c_str());
            ++failures;
            continue;
        }
        pct_result* result = nullptr;
        const pct_status st = pct_engine_process(engine, job.frame, &result);
        if (st != PCT_OK) {
            std::fprintf(stderr, "error: %s: %s: %s\n", job.source.c_str(), pct_status_name(st),
                         pct_last_error());
            ++failures;
        } else {
            if (!emit_result(result, modes, job.source)) ++failures;
            pct_result_free(result);
        }
        pct_frame_free(job.frame);
    }
    reader.join();

    pct_engine_free(engine);
    pct_pipeline_free(pipeline);
    return failures == 0 ? 0 : 1;
}

int run_watch(const PipelineArgs& args, const std::string& dir) {
    if (!fs::is_directory(dir)) {
        std::fprintf(stderr, "error: io: '%s' is not a directory\n", dir.c_str());
        return 1;
    }
    pct_pipeline* pipeline = args.open();
    pct_engine* engine = nullptr;
    check(pct_engine_open(pipeline, &engine));
    const OutputModes modes = selected_modes(pipeline);

    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);

    HandoffQueue queue;
    std::thread reader([&] {
        std::set<std::string> seen;
        while (!g_stop.load()) {
            std::vector<std::string> fresh;
            std::error_code ec;
            for (const auto& entry : fs::directory_iterator(dir, ec)) {
                if (!entry.is_regular_file() || entry.path().extension() != ".ppm") continue;
                const std::string p = entry.path().string();
                if (!seen.count(p)) fresh.push_back(p);
            }
            std::sort(fresh.begin(), fresh.end());
            for (const std::string& path : fresh) {
                if (g_stop.load()) break;
                seen.insert(path);
                queue.push(load_job(engine, path));
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(200));
        }
        queue.close();
    });

    FrameJob job;
    while (queue.pop(job)) {
        if (!job.frame) {
            std::fprintf(stderr, "error: %s: %s: %s\n", job.source.c_str(),
                         pct_status_name(job.status), job.error.c_str());
            continue;
        }
        const auto t0 = std::chrono::steady_clock::now();
        pct_result* result = nullptr;
        const pct_status st = pct_engine_process(engine, job.frame, &result);
        const double process_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                .count();
        if (st != PCT_OK) {
            std::fprintf(stderr, "error: %s: %s: %s\n", job.source.c_str(), pct_status_name(st),
                         pct_last_error());
        } else {
            emit_result(result, modes, job.source);
            std::fprintf(stderr, "frame %s: decode %.1f ms, process %.1f ms\n",
                         fs::path(job.source).stem().string().c_str(), job.decode_ms, process_ms);
            pct_result_free(result);
        }
        pct_frame_free(job.frame);
    }
    reader.join();

    pct_engine_free(engine);
    pct_pipeline_free(pipeline);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"CNN object recognition and scene description for camera frames"};
    app.require_subcommand(1);

    // detect
    auto* detect = app.add_subcommand("detect", "run detection over image files");
    PipelineArgs detect_args;
    std::vector<std::string> detect_images;
    detect_args.attach(detect, true);
    detect->add_option("images", detect_images, "PPM frames to process")
        ->required()
        ->check(CLI::ExistingFile);

    // watch
    auto* watch = app.add_subcommand("watch", "watch a directory for new frames");
    PipelineArgs watch_args;
    std::string watch_dir;
    watch_args.attach(watch, true);
    watch->add_option("dir", watch_dir, "directory to watch for .ppm frames")->required();

    // generate-shapes
    auto* gen = app.add_subcommand("generate-shapes", "write a synthetic shapes dataset");
    std::string gen_dir;
    int gen_count = 0;
    std::uint64_t gen_seed = 0;
    int gen_max_shapes = 3;
    gen->add_option("dir", gen_dir, "output directory")->required();
    gen->add_option("count", gen_count, "number of frames")->required()
        ->check(CLI::PositiveNumber);
    gen->add_option("--seed", gen_seed, "generator seed");
    gen->add_option("--max-shapes", gen_max_shapes, "most shapes per frame (1 = single object)")
        ->check(CLI::Range(1, 3));

    // train-toy
    auto* train = app.add_subcommand("train-toy", "train the configured network on a dataset");
    PipelineArgs train_args;
    std::string train_dataset;
    train_args.attach(train, false);
    train->add_option("dataset", train_dataset, "dataset directory")->required();

    // eval
    auto* eval = app.add_subcommand("eval", "score the configured network on a dataset");
    PipelineArgs eval_args;
    std::string eval_dataset, eval_detections;
    eval_args.attach(eval, false);
    eval->add_option("dataset", eval_dataset, "dataset directory")->required();
    eval->add_option("--detections", eval_detections,
                     "score these result JSON lines instead of running the network")
        ->check(CLI::ExistingFile);

    // bench
    auto* bench = app.add_subcommand("bench", "time the pipeline stages on one image");
    PipelineArgs bench_args;
    std::string bench_image;
    int bench_iterations = 20;
    bench_args.attach(bench, true);
    bench->add_option("image", bench_image, "PPM frame to process repeatedly")
        ->required()
        ->check(CLI::ExistingFile);
    bench->add_option("--iterations", bench_iterations, "number of timed runs")
        ->check(CLI::PositiveNumber);

    CLI11_PARSE(app, argc, argv);

    if (detect->parsed()) return run_detect(detect_args, detect_images);
    if (watch->parsed()) return run_watch(watch_args, watch_dir);

    if (gen->parsed()) {
        check(pct_generate_shapes(gen_dir.c_str(), gen_count, gen_seed, gen_max_shapes));
        std::printf("wrote %d frames to %s\n", gen_count, gen_dir.c_str());
        return 0;
    }

    if (train->parsed()) {
        pct_pipeline* pipeline = train_args.open();
        char* metrics = nullptr;
        check(pct_train_toy(pipeline, train_dataset.c_str(),
                            train_args.weights.empty() ? nullptr : train_args.weights.c_str(),
                            &metrics));
        std::fputs(metrics, stdout);
        pct_string_free(metrics);
        pct_pipeline_free(pipeline);
        return 0;
    }

    if (eval->parsed()) {
        pct_pipeline* pipeline = eval_args.open();
        char* report = nullptr;
        check(pct_evaluate(pipeline, eval_dataset.c_str(),
                           eval_detections.empty() ? nullptr : eval_detections.c_str(), &report));
        std::fputs(report, stdout);
        pct_string_free(report);
        pct_pipeline_free(pipeline);
        return 0;
    }

    if (bench->parsed()) {
        pct_pipeline* pipeline = bench_args.open();
        char* report = nullptr;
        check(pct_bench(pipeline, bench_image.c_str(), bench_iterations, &report));
        std::fputs(report, stdout);
        pct_string_free(report);
        pct_pipeline_free(pipeline);
        return 0;
    }
    return 0;
}
