#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "config.hpp"
#include "image.hpp"
#include "network.hpp"
#include "output.hpp"

namespace percept {

struct TrainParams {
    double lr = 0.01;
    int epochs = 10;
    std::uint64_t seed = 0;
};

// Everything a run needs beyond the network description: file locations,
// thresholds, which renderings to emit, and training hyperparameters.
struct PipelineConfig {
    std::string network_path;
    std::string weights_path;       // inference weights; also the training output default
    std::string init_weights_path;  // optional warm start for training (leading tensors)
    double conf_threshold = 0.25;
    double iou_threshold = 0.45;
    bool out_json = true;
    bool out_braille = false;
    bool out_phrase = false;
    std::optional<double> elu_alpha;  // overrides every elu layer when set
    TrainParams train;
};

PipelineConfig parse_pipeline_config(const std::string& json_text, const std::string& base_dir);
PipelineConfig load_pipeline_config(const std::string& path);

// A loaded network ready to process frames. Construction resolves the
// network description, applies overrides, and loads weights when the
// config names them (otherwise the seeded random initialization stands,
// which is useful for smoke runs).
class Engine {
public:
    explicit Engine(const PipelineConfig& cfg);

    const PipelineConfig& pipeline() const { return cfg_; }
    const NetworkConfig& network_config() const { return net_.config; }
    const Network& network() const { return net_; }
    bool is_detector() const;
    bool is_classifier() const;

    // Resize + scale a decoded frame to the network's input tensor.
    Tensor prepare(const ImageBuffer& img) const;

    // The two halves of a detection pass, split out so callers can time
    // them separately; process() is their composition.
    Tensor forward_raw(const Tensor& input) const;
    FrameResult postprocess(const Tensor& raw, const std::string& frame_id) const;

    // Full detection pass over a prepared tensor. Detector networks only.
    FrameResult process(const Tensor& input, const std::string& frame_id) const;
    FrameResult process_image(const ImageBuffer& img, const std::string& frame_id) const;

    // Argmax class for classifier networks.
    int classify(const Tensor& input) const;

private:
    PipelineConfig cfg_;
    Network net_;
};

// Renders the outputs selected in the config, in the fixed order json,
// braille, phrase, one line each.
std::vector<std::string> render_outputs(const PipelineConfig& cfg, const FrameResult& result);

// Trains the configured network on a generated shapes directory with
// plain SGD and writes the result to weights_out. Classifier heads train
// on cross entropy against each frame's dominant shape; detector heads on
// the grid detection loss. Per-epoch losses go to `log`; the returned
// string is a one-line JSON metrics summary.
std::string train_toy(const PipelineConfig& cfg, const std::string& dataset_dir,
                      const std::string& weights_out, std::ostream& log);

// Scores the configured network on a dataset directory: mAP at IoU 0.5
// for detectors, top-1 accuracy for classifiers. When detections_path is
// nonempty it must hold previously emitted result JSON (one frame per
// line) which is scored instead of running the network.
std::string evaluate(const PipelineConfig& cfg, const std::string& dataset_dir,
                     const std::string& detections_path);

// Times the stages of the frame pipeline (decode, resize, forward,
// postprocess, render) over `iterations` runs of one image and reports
// mean and p95 per stage as one-line JSON.
std::string bench(const PipelineConfig& cfg, const std::string& image_path, int iterations);

}  // namespace percept
