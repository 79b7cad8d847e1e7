#include "detect.hpp"

#include <algorithm>
#include <numeric>

#include "error.hpp"
#include "layers.hpp"

namespace percept {

namespace {

// Confidence descending; ties broken by class id then original position
// so the order never depends on sort internals.
void order_detections(std::vector<Detection>& dets) {
    std::vector<std::size_t> idx(dets.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&dets](std::size_t a, std::size_t b) {
        if (dets[a].confidence != dets[b].confidence)
            return dets[a].confidence > dets[b].confidence;
        if (dets[a].class_id != dets[b].class_id) return dets[a].class_id < dets[b].class_id;
        return a < b;
    });
    std::vector<Detection> sorted;
    sorted.reserve(dets.size());
    for (std::size_t i : idx) sorted.push_back(dets[i]);
    dets = std::move(sorted);
}

}  // namespace

std::vector<Detection> decode_grid(const Tensor& raw, int boxes_per_cell, int num_classes,
                                   double conf_threshold) {
    if (raw.rank() != 3)
        throw Error(ErrorCode::shape_mismatch,
                    "detection grid must be rank 3, got " + shape_str(raw.shape));
    if (boxes_per_cell < 1 || num_classes < 1)
        throw Error(ErrorCode::invalid_argument,
                    "detection grid needs at least one box and one class per cell");
    const int rows = raw.shape[0], cols = raw.shape[1], depth = raw.shape[2];
    const int B = boxes_per_cell, C = num_classes;
    if (depth != B * 5 + C)
        throw Error(ErrorCode::shape_mismatch,
                    "grid depth " + std::to_string(depth) + " does not match " + std::to_string(B) +
                        " boxes and " + std::to_string(C) + " classes");
    if (!(conf_threshold >= 0.0 && conf_threshold <= 1.0))
        throw Error(ErrorCode::invalid_argument,
                    "confidence threshold must lie in [0,1], got " + std::to_string(conf_threshold));

    std::vector<Detection> out;
    std::vector<double> probs(static_cast<std::size_t>(C));
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) {
            const std::size_t base = (static_cast<std::size_t>(i) * cols + j) * depth;
            for (int c = 0; c < C; ++c)
                probs[static_cast<std::size_t>(c)] =
                    static_cast<double>(raw.data[base + static_cast<std::size_t>(B) * 5 + c]);
            softmax_inplace(probs.data(), C);
            int best_class = 0;
            for (int c = 1; c < C; ++c)
                if (probs[static_cast<std::size_t>(c)] > probs[static_cast<std::size_t>(best_class)])
                    best_class = c;
            const double best_prob = probs[static_cast<std::size_t>(best_class)];

            for (int b = 0; b < B; ++b) {
                const std::size_t off = base + static_cast<std::size_t>(b) * 5;
                double coords[4];
                for (int q = 0; q < 4; ++q) coords[q] = static_cast<double>(raw.data[off + q]);
                Detection d;
                d.box = decode_cell_box(coords, i, j, rows, cols);
                d.confidence = sigmoid(static_cast<double>(raw.data[off + 4])) * best_prob;
                d.class_id = best_class;
                if (d.confidence >= conf_threshold) out.push_back(d);
            }
        }
    order_detections(out);
    return out;
}

std::vector<Detection> nms(const std::vector<Detection>& dets, double iou_threshold) {
    if (!(iou_threshold >= 0.0 && iou_threshold <= 1.0))
        throw Error(ErrorCode::invalid_argument,
                    "suppression threshold must lie in [0,1], got " + std::to_string(iou_threshold));
    std::vector<Detection> ordered = dets;
    order_detections(ordered);
    std::vector<Detection> kept;
    for (const Detection& d : ordered) {
        bool suppressed = false;
        for (const Detection& k : kept) {
            if (k.class_id == d.class_id && iou(k.box, d.box) >= iou_threshold) {
                suppressed = true;
                break;
            }
        }
        if (!suppressed) kept.push_back(d);
    }
    return kept;
}

}  // namespace percept
