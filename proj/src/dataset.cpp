#include "dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>

#include "error.hpp"
#include "image.hpp"
#include "rng.hpp"

namespace fs = std::filesystem;

namespace percept {

const std::vector<std::string>& shapes_class_labels() {
    static const std::vector<std::string> labels = {"square", "disk", "triangle"};
    return labels;
}

namespace {

constexpr int kFrameSize = 64;
constexpr int kMinShape = 12;
constexpr int kMaxShape = 28;

struct PlacedShape {
    int cls;
    int x0, y0, size;
    std::uint8_t color[3];
};

bool boxes_clear(const PlacedShape& a, const PlacedShape& b) {
    // Demand a 1px gap so neighbouring shapes never touch.
    return a.x0 + a.size + 1 <= b.x0 || b.x0 + b.size + 1 <= a.x0 ||
           a.y0 + a.size + 1 <= b.y0 || b.y0 + b.size + 1 <= a.y0;
}

void paint(ImageBuffer& img, const PlacedShape& s) {
    const double c = (s.size - 1) / 2.0;
    const double cx = s.x0 + c, cy = s.y0 + c;
    for (int y = s.y0; y < s.y0 + s.size; ++y)
        for (int x = s.x0; x < s.x0 + s.size; ++x) {
            bool in = false;
            switch (s.cls) {
                case 0:
                    in = true;
                    break;
                case 1: {
                    const double dx = x - cx, dy = y - cy;
                    in = dx * dx + dy * dy <= c * c;
                    break;
                }
                case 2: {
                    // Apex at the top row, widening half a pixel per row to
                    // the full base.
                    const int t = y - s.y0;
                    in = std::abs(x - cx) <= t / 2.0 + 0.5;
                    break;
                }
            }
            if (in) {
                auto* px = &img.pixels[(static_cast<std::size_t>(y) * img.width + x) * 3];
                px[0] = s.color[0];
                px[1] = s.color[1];
                px[2] = s.color[2];
            }
        }
}

}  // namespace

void generate_shapes_dataset(const std::string& dir, int count, std::uint64_t seed,
                             int max_shapes) {
    if (count < 1)
        throw Error(ErrorCode::invalid_argument,
                    "dataset frame count must be >= 1, got " + std::to_string(count));
    if (max_shapes < 1 || max_shapes > 3)
        throw Error(ErrorCode::invalid_argument,
                    "shapes per frame must lie in 1..3, got " + std::to_string(max_shapes));
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::io, "cannot create dataset directory '" + dir + "'");

    std::ofstream ann(fs::path(dir) / "annotations.txt", std::ios::trunc);
    if (!ann) throw Error(ErrorCode::io, "cannot write annotations in '" + dir + "'");
    ann << "# <frame_id> <class_id> <cx> <cy> <w> <h>, coordinates relative to the frame\n";
    ann << "# classes: 0=square 1=disk 2=triangle\n";

    for (int f = 0; f < count; ++f) {
        // One generator per frame, derived from the master seed, so frame
        // N's content does not depend on how many frames precede it.
        SplitMix64 rng(derive_seed(seed, static_cast<std::uint64_t>(f)));
        char id[32];
        std::snprintf(id, sizeof id, "frame_%05d", f);

        ImageBuffer img;
        img.width = kFrameSize;
        img.height = kFrameSize;
        img.pixels.resize(static_cast<std::size_t>(kFrameSize) * kFrameSize * 3);
        std::uint8_t bg[3];
        for (auto& ch : bg) ch = static_cast<std::uint8_t>(rng.below(60));
        for (std::size_t i = 0; i < img.pixels.size(); i += 3) {
            img.pixels[i] = bg[0];
            img.pixels[i + 1] = bg[1];
            img.pixels[i + 2] = bg[2];
        }

        const int want = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_shapes)));
        std::vector<PlacedShape> placed;
        for (int n = 0; n < want; ++n) {
            for (int attempt = 0; attempt < 40; ++attempt) {
                PlacedShape s;
                s.cls = static_cast<int>(rng.below(3));
                s.size = kMinShape + static_cast<int>(rng.below(kMaxShape - kMinShape + 1));
                s.x0 = static_cast<int>(rng.below(kFrameSize - s.size + 1));
                s.y0 = static_cast<int>(rng.below(kFrameSize - s.size + 1));
                for (auto& ch : s.color) ch = static_cast<std::uint8_t>(128 + rng.below(128));
                const bool clear = std::all_of(placed.begin(), placed.end(),
                                               [&s](const PlacedShape& p) { return boxes_clear(p, s); });
                if (clear) {
                    placed.push_back(s);
                    break;
                }
                // Crowded frame: give up on this shape after the attempts run
                // out and keep what fits.
            }
        }

        for (const PlacedShape& s : placed) paint(img, s);
        save_ppm(img, (fs::path(dir) / (std::string(id) + ".ppm")).string());
        for (const PlacedShape& s : placed) {
            char line[160];
            std::snprintf(line, sizeof line, "%s %d %.6f %.6f %.6f %.6f\n", id, s.cls,
                          (s.x0 + s.size / 2.0) / kFrameSize, (s.y0 + s.size / 2.0) / kFrameSize,
                          static_cast<double>(s.size) / kFrameSize,
                          static_cast<double>(s.size) / kFrameSize);
            ann << line;
        }
    }
    ann.close();
    if (!ann) throw Error(ErrorCode::io, "failed writing annotations in '" + dir + "'");
}

std::vector<DatasetSample> load_dataset(const std::string& dir) {
    if (!fs::is_directory(dir))
        throw Error(ErrorCode::io, "dataset directory '" + dir + "' does not exist");
    std::vector<DatasetSample> samples;
    std::map<std::string, std::size_t> by_id;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".ppm") continue;
        DatasetSample s;
        s.frame_id = entry.path().stem().string();
        s.path = entry.path().string();
        samples.push_back(std::move(s));
    }
    if (samples.empty())
        throw Error(ErrorCode::invalid_input, "dataset directory '" + dir + "' holds no .ppm frames");
    std::sort(samples.begin(), samples.end(),
              [](const DatasetSample& a, const DatasetSample& b) { return a.frame_id < b.frame_id; });
    for (std::size_t i = 0; i < samples.size(); ++i) by_id[samples[i].frame_id] = i;

    const fs::path ann_path = fs::path(dir) / "annotations.txt";
    if (!fs::exists(ann_path))
        throw Error(ErrorCode::io, "dataset '" + dir + "' has no annotations.txt");
    for (GroundTruth& t : load_annotations(ann_path.string())) {
        const auto it = by_id.find(t.frame_id);
        if (it == by_id.end())
            throw Error(ErrorCode::invalid_input,
                        "annotation references missing frame '" + t.frame_id + "'");
        samples[it->second].truths.push_back(std::move(t));
    }
    return samples;
}

int classifier_label(const std::vector<GroundTruth>& truths) {
    if (truths.empty())
        throw Error(ErrorCode::invalid_input, "cannot derive a frame label from zero annotations");
    std::size_t best = 0;
    double best_area = truths[0].box.w * truths[0].box.h;
    for (std::size_t i = 1; i < truths.size(); ++i) {
        const double area = truths[i].box.w * truths[i].box.h;
        if (area > best_area) {
            best_area = area;
            best = i;
        }
    }
    return truths[best].class_id;
}

}  // namespace percept
