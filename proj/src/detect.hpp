#pragma once

#include <vector>

#include "boxes.hpp"
#include "tensor.hpp"

namespace percept {

struct Detection {
    int class_id{};
    double confidence{};
    Box box;
};

// Turns a raw [S,S,B*5+C] head output into detections. Per box the four
// coordinates and the objectness pass through sigmoid (coordinates offset
// by the cell); the C class slots are softmaxed once per cell and shared
// by the cell's boxes. A detection's confidence is objectness times the
// best class probability; its class is the argmax (ties to the lowest
// id). Results keep at-or-above conf_threshold only, ordered by
// confidence descending (ties: lower class id first, then scan order).
std::vector<Detection> decode_grid(const Tensor& raw, int boxes_per_cell, int num_classes,
                                   double conf_threshold);

// Greedy per-class suppression: walk detections by descending confidence
// (ties as in decode_grid) and keep each one unless it overlaps an
// already-kept detection of the same class at IoU >= iou_threshold.
std::vector<Detection> nms(const std::vector<Detection>& dets, double iou_threshold);

}  // namespace percept
