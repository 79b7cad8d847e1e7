#include "pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dataset.hpp"
#include "detect.hpp"
#include "error.hpp"
#include "evalmetrics.hpp"
#include "rng.hpp"
#include "weights_io.hpp"

namespace fs = std::filesystem;

namespace percept {

using nlohmann::json;

namespace {

// Matching threshold used when scoring detections against ground truth.
constexpr double kEvalIou = 0.5;

std::string resolve_path(const std::string& base_dir, const std::string& p) {
    if (p.empty() || base_dir.empty()) return p;
    fs::path fp(p);
    if (fp.is_absolute()) return p;
    return (fs::path(base_dir) / fp).lexically_normal().string();
}

[[noreturn]] void bad(const std::string& msg) {
    throw Error(ErrorCode::invalid_config, msg);
}

double number_field(const json& obj, const char* key, double fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_number()) bad(std::string("pipeline field '") + key + "' must be a number");
    return obj[key].get<double>();
}

std::string string_field(const json& obj, const char* key, const std::string& fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_string()) bad(std::string("pipeline field '") + key + "' must be a string");
    return obj[key].get<std::string>();
}

std::string fixed(double v, int digits) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

}  // namespace

PipelineConfig parse_pipeline_config(const std::string& json_text, const std::string& base_dir) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::parse, std::string("pipeline config is not valid JSON: ") + e.what());
    }
    if (!root.is_object()) bad("pipeline config must be a JSON object");

    PipelineConfig cfg;
    cfg.network_path = resolve_path(base_dir, string_field(root, "network", ""));
    if (cfg.network_path.empty()) bad("pipeline config needs a 'network' path");
    cfg.weights_path = resolve_path(base_dir, string_field(root, "weights", ""));
    cfg.init_weights_path = resolve_path(base_dir, string_field(root, "init_weights", ""));
    cfg.conf_threshold = number_field(root, "conf_threshold", cfg.conf_threshold);
    cfg.iou_threshold = number_field(root, "iou_threshold", cfg.iou_threshold);
    if (!(cfg.conf_threshold >= 0.0 && cfg.conf_threshold <= 1.0))
        bad("conf_threshold must lie in [0,1]");
    if (!(cfg.iou_threshold >= 0.0 && cfg.iou_threshold <= 1.0))
        bad("iou_threshold must lie in [0,1]");

    if (root.contains("outputs")) {
        if (!root["outputs"].is_array()) bad("'outputs' must be an array of mode names");
        cfg.out_json = cfg.out_braille = cfg.out_phrase = false;
        for (const auto& v : root["outputs"]) {
            if (!v.is_string()) bad("'outputs' entries must be strings");
            const std::string mode = v.get<std::string>();
            if (mode == "json") cfg.out_json = true;
            else if (mode == "braille") cfg.out_braille = true;
            else if (mode == "phrase") cfg.out_phrase = true;
            else bad("unknown output mode '" + mode + "' (expected json, braille, or phrase)");
        }
        if (!cfg.out_json && !cfg.out_braille && !cfg.out_phrase)
            bad("'outputs' must select at least one mode");
    }

    if (root.contains("elu_alpha")) {
        if (!root["elu_alpha"].is_number()) bad("'elu_alpha' must be a number");
        cfg.elu_alpha = root["elu_alpha"].get<double>();
        if (*cfg.elu_alpha < 0) bad("'elu_alpha' must be >= 0");
    }

    if (root.contains("train")) {
        const json& t = root["train"];
        if (!t.is_object()) bad("'train' must be an object");
        cfg.train.lr = number_field(t, "lr", cfg.train.lr);
        if (t.contains("epochs")) {
            if (!t["epochs"].is_number_integer()) bad("'train.epochs' must be an integer");
            cfg.train.epochs = t["epochs"].get<int>();
        }
        if (t.contains("seed")) {
            if (!t["seed"].is_number_unsigned() && !t["seed"].is_number_integer())
                bad("'train.seed' must be an integer");
            cfg.train.seed = t["seed"].get<std::uint64_t>();
        }
    }
    return cfg;
}

PipelineConfig load_pipeline_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::io, "cannot open pipeline config '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_pipeline_config(ss.str(), fs::path(path).parent_path().string());
}

namespace {

NetworkConfig load_network_for(const PipelineConfig& cfg) {
    if (cfg.network_path.empty())
        throw Error(ErrorCode::invalid_config, "pipeline config names no network");
    NetworkConfig net = load_network_config(cfg.network_path);
    if (cfg.elu_alpha)
        for (LayerSpec& l : net.layers)
            if (l.kind == LayerKind::elu) l.alpha = *cfg.elu_alpha;
    return net;
}

Tensor prepare_for(const NetworkConfig& netcfg, const ImageBuffer& img) {
    const int want_h = netcfg.input_shape[1];
    const int want_w = netcfg.input_shape[2];
    if (img.width == want_w && img.height == want_h) return to_input_tensor(img);
    return to_input_tensor(resize_bilinear(img, want_w, want_h));
}

int argmax_class(const Tensor& probs) {
    int best = 0;
    for (int i = 1; i < probs.shape[0]; ++i)
        if (probs.data[static_cast<std::size_t>(i)] > probs.data[static_cast<std::size_t>(best)])
            best = i;
    return best;
}

}  // namespace

Engine::Engine(const PipelineConfig& cfg) : cfg_(cfg) {
    const NetworkConfig netcfg = load_network_for(cfg_);
    if (!cfg_.weights_path.empty()) {
        net_ = load_weights_file(netcfg, cfg_.weights_path);
    } else {
        net_ = build_network<float>(netcfg, cfg_.train.seed);
    }
}

bool Engine::is_detector() const { return has_head(net_.config, LayerKind::detect_head); }
bool Engine::is_classifier() const { return has_head(net_.config, LayerKind::softmax_head); }

Tensor Engine::prepare(const ImageBuffer& img) const { return prepare_for(net_.config, img); }

Tensor Engine::forward_raw(const Tensor& input) const { return forward(net_, input); }

FrameResult Engine::postprocess(const Tensor& raw, const std::string& frame_id) const {
    if (!is_detector())
        throw Error(ErrorCode::invalid_config,
                    "network '" + net_.config.name + "' has no detection head");
    const LayerSpec& head = net_.config.layers.back();
    std::vector<Detection> dets = decode_grid(raw, head.boxes, head.classes, cfg_.conf_threshold);
    dets = nms(dets, cfg_.iou_threshold);
    FrameResult r;
    r.frame_id = frame_id;
    r.model_name = net_.config.name;
    r.frame_width = net_.config.input_shape[2];
    r.frame_height = net_.config.input_shape[1];
    for (const Detection& d : dets)
        r.detections.push_back(
            {net_.config.class_labels[static_cast<std::size_t>(d.class_id)], d.confidence, d.box});
    return r;
}

FrameResult Engine::process(const Tensor& input, const std::string& frame_id) const {
    return postprocess(forward(net_, input), frame_id);
}

FrameResult Engine::process_image(const ImageBuffer& img, const std::string& frame_id) const {
    return process(prepare(img), frame_id);
}

int Engine::classify(const Tensor& input) const {
    if (!is_classifier())
        throw Error(ErrorCode::invalid_config,
                    "network '" + net_.config.name + "' has no classification head");
    return argmax_class(forward(net_, input));
}

std::vector<std::string> render_outputs(const PipelineConfig& cfg, const FrameResult& result) {
    std::vector<std::string> out;
    if (cfg.out_json) out.push_back(to_json(result));
    if (cfg.out_braille) out.push_back(to_braille(describe_scene(result)) + "\n");
    if (cfg.out_phrase) out.push_back(describe_scene(result) + "\n");
    return out;
}

// ---------------------------------------------------------------------------
// training

namespace {

struct LoadedSample {
    std::string frame_id;
    Tensor input;
    int label = -1;                        // classifier target
    std::vector<TruthBoxT<float>> truths;  // detector targets
};

void check_class_ids(const std::vector<DatasetSample>& samples, std::size_t num_labels) {
    for (const auto& s : samples)
        for (const auto& t : s.truths)
            if (t.class_id >= static_cast<int>(num_labels))
                throw Error(ErrorCode::invalid_label,
                            "frame '" + s.frame_id + "' uses class id " +
                                std::to_string(t.class_id) + " but the network knows only " +
                                std::to_string(num_labels) + " labels");
}

std::vector<LoadedSample> load_training_samples(const NetworkConfig& netcfg,
                                                const std::string& dataset_dir) {
    const std::vector<DatasetSample> raw = load_dataset(dataset_dir);
    check_class_ids(raw, netcfg.class_labels.size());
    std::vector<LoadedSample> samples;
    samples.reserve(raw.size());
    for (const auto& s : raw) {
        if (s.truths.empty())
            throw Error(ErrorCode::invalid_input,
                        "frame '" + s.frame_id +
                            "' has no annotations; every training frame needs at least one");
        LoadedSample ls;
        ls.frame_id = s.frame_id;
        ls.input = prepare_for(netcfg, load_ppm(s.path));
        ls.label = classifier_label(s.truths);
        for (const GroundTruth& t : s.truths)
            ls.truths.push_back({t.class_id,
                                 {static_cast<float>(t.box.cx), static_cast<float>(t.box.cy),
                                  static_cast<float>(t.box.w), static_cast<float>(t.box.h)}});
        samples.push_back(std::move(ls));
    }
    return samples;
}

void shuffle_indices(std::vector<std::size_t>& idx, SplitMix64& rng) {
    for (std::size_t i = idx.size(); i > 1; --i)
        std::swap(idx[i - 1], idx[rng.below(i)]);
}

}  // namespace

std::string train_toy(const PipelineConfig& cfg, const std::string& dataset_dir,
                      const std::string& weights_out, std::ostream& log) {
    if (weights_out.empty())
        throw Error(ErrorCode::invalid_argument, "training needs a weights output path");
    if (!(cfg.train.lr > 0))
        throw Error(ErrorCode::invalid_hyperparameter,
                    "learning rate must be > 0, got " + std::to_string(cfg.train.lr));
    if (cfg.train.epochs < 1)
        throw Error(ErrorCode::invalid_hyperparameter,
                    "epochs must be >= 1, got " + std::to_string(cfg.train.epochs));

    const NetworkConfig netcfg = load_network_for(cfg);
    const bool detector = has_head(netcfg, LayerKind::detect_head);
    const bool classifier = has_head(netcfg, LayerKind::softmax_head);
    if (!detector && !classifier)
        throw Error(ErrorCode::invalid_config,
                    "network '" + netcfg.name + "' has no trainable head");

    const std::vector<LoadedSample> samples = load_training_samples(netcfg, dataset_dir);
    Network net = build_network<float>(netcfg, cfg.train.seed);
    if (!cfg.init_weights_path.empty()) {
        const int assigned = load_weights_prefix_file(net, cfg.init_weights_path);
        if (assigned == 0)
            throw Error(ErrorCode::invalid_input,
                        "no leading tensors of '" + cfg.init_weights_path +
                            "' match this network; cannot warm start");
        log << "warm start: " << assigned << " tensors from " << cfg.init_weights_path << "\n";
    }

    const int n_layers = static_cast<int>(netcfg.layers.size());
    const LayerSpec& head = netcfg.layers.back();
    const float lr = static_cast<float>(cfg.train.lr);

    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);

    double first_epoch_loss = 0.0, last_epoch_loss = 0.0;
    for (int epoch = 0; epoch < cfg.train.epochs; ++epoch) {
        SplitMix64 shuffle_rng(derive_seed(cfg.train.seed, 1000 + static_cast<std::uint64_t>(epoch)));
        shuffle_indices(order, shuffle_rng);
        double loss_sum = 0.0;
        for (std::size_t si : order) {
            const LoadedSample& s = samples[si];
            ForwardTraceT<float> trace;
            forward(net, s.input, &trace);
            if (classifier) {
                // The loss differentiates through its own softmax, so the
                // gradient enters at the logits feeding the head.
                const Tensor& logits = trace.activations[static_cast<std::size_t>(n_layers) - 1];
                auto ce = softmax_cross_entropy(logits, s.label);
                loss_sum += ce.loss;
                auto grads = backward(net, trace, std::move(ce.grad_logits), n_layers - 2);
                sgd_step(net, grads, lr);
            } else {
                const Tensor& grid = trace.activations[static_cast<std::size_t>(n_layers)];
                auto dl = detection_loss(grid, s.truths, head.boxes, head.classes);
                loss_sum += dl.loss;
                auto grads = backward(net, trace, std::move(dl.grad), n_layers - 1);
                sgd_step(net, grads, lr);
            }
        }
        const double mean_loss = loss_sum / static_cast<double>(samples.size());
        if (epoch == 0) first_epoch_loss = mean_loss;
        last_epoch_loss = mean_loss;
        log << "epoch " << (epoch + 1) << "/" << cfg.train.epochs << ": loss "
            << fixed(mean_loss, 6) << "\n";
        log.flush();
    }

    save_weights_file(net, weights_out);

    std::string metrics = std::string("{\"mode\":\"") + (classifier ? "classifier" : "detector") +
                          "\",\"frames\":" + std::to_string(samples.size()) +
                          ",\"epochs\":" + std::to_string(cfg.train.epochs) +
                          ",\"first_epoch_loss\":" + fixed(first_epoch_loss, 6) +
                          ",\"final_epoch_loss\":" + fixed(last_epoch_loss, 6);
    if (classifier) {
        std::vector<int> preds, labels;
        for (const LoadedSample& s : samples) {
            preds.push_back(argmax_class(forward(net, s.input)));
            labels.push_back(s.label);
        }
        metrics += ",\"top1\":" + fixed(top1_accuracy(preds, labels), 6);
    }
    metrics += ",\"weights\":\"" + weights_out + "\"}\n";
    return metrics;
}

// ---------------------------------------------------------------------------
// evaluation

namespace {

// Reads result lines previously emitted by the JSON output mode and
// resolves labels back to class ids.
std::vector<FrameDetection> parse_result_lines(const std::string& path,
                                               const std::vector<std::string>& labels,
                                               const std::map<std::string, char>& known_frames) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::io, "cannot open detections file '" + path + "'");
    std::map<std::string, int> label_ids;
    for (std::size_t i = 0; i < labels.size(); ++i)
        label_ids[labels[i]] = static_cast<int>(i);

    std::vector<FrameDetection> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json root;
        try {
            root = json::parse(line);
        } catch (const json::parse_error& e) {
            throw Error(ErrorCode::parse, "detections line " + std::to_string(lineno) +
                                              " is not valid JSON: " + e.what());
        }
        if (!root.is_object() || !root.contains("frame_id") || !root["frame_id"].is_string() ||
            !root.contains("detections") || !root["detections"].is_array())
            throw Error(ErrorCode::invalid_input,
                        "detections line " + std::to_string(lineno) +
                            " is not a frame result object");
        const std::string frame_id = root["frame_id"].get<std::string>();
        if (!known_frames.count(frame_id))
            throw Error(ErrorCode::invalid_input,
                        "detections line " + std::to_string(lineno) + " names unknown frame '" +
                            frame_id + "'");
        for (const auto& d : root["detections"]) {
            if (!d.is_object() || !d.contains("label") || !d["label"].is_string() ||
                !d.contains("confidence") || !d["confidence"].is_number() ||
                !d.contains("box") || !d["box"].is_object())
                throw Error(ErrorCode::invalid_input,
                            "detections line " + std::to_string(lineno) +
                                " holds a malformed detection");
            const auto it = label_ids.find(d["label"].get<std::string>());
            if (it == label_ids.end())
                throw Error(ErrorCode::invalid_input,
                            "detections line " + std::to_string(lineno) + " uses unknown label '" +
                                d["label"].get<std::string>() + "'");
            const json& box = d["box"];
            for (const char* k : {"cx", "cy", "w", "h"})
                if (!box.contains(k) || !box[k].is_number())
                    throw Error(ErrorCode::invalid_input,
                                "detections line " + std::to_string(lineno) +
                                    " box is missing field '" + k + "'");
            FrameDetection fd;
            fd.frame_id = frame_id;
            fd.det.class_id = it->second;
            fd.det.confidence = d["confidence"].get<double>();
            fd.det.box = {box["cx"].get<double>(), box["cy"].get<double>(), box["w"].get<double>(),
                          box["h"].get<double>()};
            out.push_back(std::move(fd));
        }
    }
    return out;
}

}  // namespace

std::string evaluate(const PipelineConfig& cfg, const std::string& dataset_dir,
                     const std::string& detections_path) {
    const NetworkConfig netcfg = load_network_for(cfg);
    const std::vector<DatasetSample> samples = load_dataset(dataset_dir);
    check_class_ids(samples, netcfg.class_labels.size());

    std::vector<GroundTruth> truths;
    for (const auto& s : samples)
        truths.insert(truths.end(), s.truths.begin(), s.truths.end());

    EvalReport report;
    if (has_head(netcfg, LayerKind::detect_head)) {
        std::vector<FrameDetection> dets;
        if (!detections_path.empty()) {
            std::map<std::string, char> known;
            for (const auto& s : samples) known[s.frame_id] = 1;
            dets = parse_result_lines(detections_path, netcfg.class_labels, known);
        } else {
            Engine engine(cfg);
            for (const auto& s : samples) {
                const FrameResult fr = engine.process_image(load_ppm(s.path), s.frame_id);
                for (const LabeledDetection& d : fr.detections) {
                    // postprocess labeled these from the config's own list, so
                    // the lookup cannot fail.
                    const auto it = std::find(netcfg.class_labels.begin(),
                                              netcfg.class_labels.end(), d.label);
                    FrameDetection fd;
                    fd.frame_id = s.frame_id;
                    fd.det.class_id =
                        static_cast<int>(std::distance(netcfg.class_labels.begin(), it));
                    fd.det.confidence = d.confidence;
                    fd.det.box = d.box;
                    dets.push_back(std::move(fd));
                }
            }
        }
        report = mean_ap(dets, truths, kEvalIou);
        report.frames = static_cast<std::int64_t>(samples.size());
    } else if (has_head(netcfg, LayerKind::softmax_head)) {
        if (!detections_path.empty())
            throw Error(ErrorCode::invalid_config,
                        "a detections file only makes sense with a detection network");
        Engine engine(cfg);
        std::vector<int> preds, labels;
        for (const auto& s : samples) {
            if (s.truths.empty())
                throw Error(ErrorCode::invalid_input,
                            "frame '" + s.frame_id + "' has no annotations to score against");
            preds.push_back(engine.classify(engine.prepare(load_ppm(s.path))));
            labels.push_back(classifier_label(s.truths));
        }
        report.frames = static_cast<std::int64_t>(samples.size());
        report.truths = static_cast<std::int64_t>(truths.size());
        report.detections = 0;
        report.top1 = top1_accuracy(preds, labels);
    } else {
        throw Error(ErrorCode::invalid_config,
                    "network '" + netcfg.name + "' has no head to evaluate");
    }
    return report_json(report, netcfg.class_labels);
}

// ---------------------------------------------------------------------------
// benchmarking

namespace {

struct StageStats {
    double mean_ms = 0.0;
    double p95_ms = 0.0;
};

StageStats summarize(std::vector<double>& ms) {
    StageStats s;
    for (double v : ms) s.mean_ms += v;
    s.mean_ms /= static_cast<double>(ms.size());
    std::sort(ms.begin(), ms.end());
    const std::size_t idx = std::min(
        ms.size() - 1,
        static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(ms.size()))) - 1);
    s.p95_ms = ms[idx];
    return s;
}

}  // namespace

std::string bench(const PipelineConfig& cfg, const std::string& image_path, int iterations) {
    if (iterations < 1)
        throw Error(ErrorCode::invalid_argument,
                    "bench needs at least one iteration, got " + std::to_string(iterations));
    Engine engine(cfg);
    if (!engine.is_detector())
        throw Error(ErrorCode::invalid_config, "bench needs a detection network");

    std::ifstream in(image_path, std::ios::binary);
    if (!in) throw Error(ErrorCode::io, "cannot open image '" + image_path + "'");
    const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                          std::istreambuf_iterator<char>());

    using clock = std::chrono::steady_clock;
    auto ms_between = [](clock::time_point a, clock::time_point b) {
        return std::chrono::duration<double, std::milli>(b - a).count();
    };

    const char* stage_names[5] = {"decode", "resize", "forward", "postprocess", "render"};
    std::vector<double> stage_ms[5];
    std::vector<double> total_ms;
    for (int it = 0; it < iterations; ++it) {
        const auto t0 = clock::now();
        const ImageBuffer img = decode_ppm(bytes);
        const auto t1 = clock::now();
        const Tensor input = engine.prepare(img);
        const auto t2 = clock::now();
        const Tensor raw = engine.forward_raw(input);
        const auto t3 = clock::now();
        const FrameResult result = engine.postprocess(raw, "bench");
        const auto t4 = clock::now();
        const std::vector<std::string> rendered = render_outputs(cfg, result);
        const auto t5 = clock::now();
        (void)rendered;
        const clock::time_point ts[6] = {t0, t1, t2, t3, t4, t5};
        for (int s = 0; s < 5; ++s) stage_ms[s].push_back(ms_between(ts[s], ts[s + 1]));
        total_ms.push_back(ms_between(t0, t5));
    }

    std::string out = "{\"image\":\"" + image_path + "\",\"iterations\":" +
                      std::to_string(iterations) + ",\"stages\":{";
    for (int s = 0; s < 5; ++s) {
        const StageStats st = summarize(stage_ms[s]);
        if (s) out += ",";
        out += std::string("\"") + stage_names[s] + "\":{\"mean_ms\":" + fixed(st.mean_ms, 3) +
               ",\"p95_ms\":" + fixed(st.p95_ms, 3) + "}";
    }
    const StageStats tot = summarize(total_ms);
    out += "},\"total\":{\"mean_ms\":" + fixed(tot.mean_ms, 3) +
           ",\"p95_ms\":" + fixed(tot.p95_ms, 3) + "}}\n";
    return out;
}

}  // namespace percept
