#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "boxes.hpp"
#include "detect.hpp"

namespace percept {

struct GroundTruth {
    std::string frame_id;
    int class_id{};
    Box box;
};

struct FrameDetection {
    std::string frame_id;
    Detection det;
};

struct EvalReport {
    std::int64_t frames = 0;
    std::int64_t truths = 0;
    std::int64_t detections = 0;
    // Detector runs fill these two; classifier runs fill top1 instead.
    std::map<int, double> per_class_ap;
    std::optional<double> map_score;
    std::optional<double> top1;
};

// Fraction of positions where prediction equals label. Both vectors must
// be the same nonzero length.
double top1_accuracy(const std::vector<int>& predictions, const std::vector<int>& labels);

// Average precision for one class with all-point interpolation:
// detections are matched greedily in confidence order to the unmatched
// same-frame truth with the highest IoU when that IoU reaches iou_thr,
// then AP is the area under the monotone precision envelope. A class with
// no truths has no defined AP.
double average_precision(const std::vector<FrameDetection>& dets,
                         const std::vector<GroundTruth>& truths, double iou_thr);

// Per-class AP over every class that has at least one ground truth, and
// their unweighted mean. Detections for classes without truths count as
// nothing (they belong to no evaluated class).
EvalReport mean_ap(const std::vector<FrameDetection>& dets,
                   const std::vector<GroundTruth>& truths, double iou_thr);

// Text annotations: one `<frame_id> <class_id> <cx> <cy> <w> <h>` record
// per line, blank lines and '#' comment lines skipped.
std::vector<GroundTruth> parse_annotations(std::istream& in);
std::vector<GroundTruth> load_annotations(const std::string& path);

// Canonical JSON for an eval report (single line, newline terminated).
std::string report_json(const EvalReport& report, const std::vector<std::string>& class_labels);

}  // namespace percept
