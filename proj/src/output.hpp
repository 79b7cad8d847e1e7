#pragma once

#include <string>
#include <vector>

#include "boxes.hpp"

namespace percept {

struct LabeledDetection {
    std::string label;
    double confidence{};
    Box box;
};

// One processed frame, detections already ordered by confidence
// descending.
struct FrameResult {
    std::string frame_id;
    std::string model_name;
    int frame_width = 0;
    int frame_height = 0;
    std::vector<LabeledDetection> detections;
};

// Canonical single-line JSON: fixed key order (frame_id, model, width,
// height, detections; per detection label, confidence, box with cx, cy,
// w, h), no whitespace, confidence to 4 decimals, box fields to 6,
// newline terminated. Byte-stable for identical results.
std::string to_json(const FrameResult& result);

// Grade-1 braille transliteration (one cell per character): letters a-z,
// digits behind a number indicator, capitals behind a capital indicator,
// space and basic punctuation. Unmappable characters are an error.
std::string to_braille(const std::string& text);

// Short spoken-style summary of a frame: detections grouped by label,
// each group counted and placed left/ahead/right by the horizontal
// position of its most confident member. Empty frames come back as
// "nothing recognized".
std::string describe_scene(const FrameResult& result);

}  // namespace percept
