#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "evalmetrics.hpp"

namespace percept {

// Class ids used by the generated shapes data, in id order.
const std::vector<std::string>& shapes_class_labels();

// Writes `count` little 64x64 RGB frames (frame_00000.ppm, ...) plus an
// annotations.txt into dir. Each frame holds 1 to max_shapes (at most 3)
// non-overlapping filled shapes (square, disk, triangle) on a dark
// background. Same seed, same bytes, independent of when or where it
// runs. max_shapes=1 gives the single-object variant used to train the
// toy detector.
void generate_shapes_dataset(const std::string& dir, int count, std::uint64_t seed,
                             int max_shapes = 3);

struct DatasetSample {
    std::string frame_id;
    std::string path;  // frame image on disk
    std::vector<GroundTruth> truths;
};

// Loads a directory produced by the generator (or arranged the same way:
// *.ppm frames plus annotations.txt). Samples come back sorted by
// frame id; every annotation must reference an existing frame.
std::vector<DatasetSample> load_dataset(const std::string& dir);

// The single class a whole frame is filed under when training or scoring
// a classifier on detection data: the class of its largest box by area,
// ties to the earliest annotation.
int classifier_label(const std::vector<GroundTruth>& truths);

}  // namespace percept
