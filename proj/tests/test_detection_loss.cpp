#include <doctest.h>

#include <cmath>
#include <cstddef>
#include <vector>

#include "layers.hpp"
#include "support.hpp"

using namespace percept;
using testsupport::check_grads;
using testsupport::expect_error;
using testsupport::random_tensor;

namespace {

using Truths = std::vector<TruthBoxT<double>>;

// Raw grid whose every slot is `fill` except the confidence slots, which are
// pushed to -1000 so they sigmoid to exactly zero.
TensorT<double> silent_grid(int rows, int cols, int B, int C, SplitMix64& rng) {
    TensorT<double> g = random_tensor<double>({rows, cols, B * 5 + C}, rng, -2.0, 2.0);
    const int depth = B * 5 + C;
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j)
            for (int b = 0; b < B; ++b)
                g.data[static_cast<std::size_t>((i * cols + j) * depth + b * 5 + 4)] = -1000.0;
    return g;
}

// Rejects grids where a truth's best and runner-up box overlap scores sit
// within the finite difference step, so the argmax cannot flip mid-check.
bool responsibility_is_stable(const TensorT<double>& grid, const Truths& truths, int B, int C) {
    const int rows = grid.shape[0], cols = grid.shape[1], depth = B * 5 + C;
    for (const auto& t : truths) {
        const int i = std::min(static_cast<int>(t.box.cy * rows), rows - 1);
        const int j = std::min(static_cast<int>(t.box.cx * cols), cols - 1);
        double best = -1.0, second = -2.0;
        for (int b = 0; b < B; ++b) {
            const std::size_t off = static_cast<std::size_t>((i * cols + j) * depth + b * 5);
            const BoxT<double> p = decode_cell_box(&grid.data[off], i, j, rows, cols);
            const double ov = iou(p, t.box);
            if (ov > best) {
                second = best;
                best = ov;
            } else if (ov > second) {
                second = ov;
            }
        }
        if (B > 1 && best - second < 1e-3) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("detection loss is exactly zero with no truths and silent boxes") {
    SplitMix64 rng(67);
    TensorT<double> grid = silent_grid(3, 3, 2, 4, rng);
    DetectionLossResult<double> r = detection_loss(grid, Truths{}, 2, 4);
    CHECK(r.loss == 0.0);
    for (double v : r.grad.data) CHECK(v == 0.0);
}

TEST_CASE("detection loss is exactly zero when the grid already fits") {
    // S=2, B=1, C=2. Cell (0,0) owns the truth: raw zeros decode its box to
    // (0.25, 0.25, 0.5, 0.5), saturated logits give confidence 1 and a
    // one-hot class distribution. Every other confidence saturates to 0.
    const int depth = 7;
    TensorT<double> grid({2, 2, depth}, 0.0);
    for (int cell = 0; cell < 4; ++cell)
        grid.data[static_cast<std::size_t>(cell * depth + 4)] = -1000.0;
    grid.data[4] = 1000.0;   // cell (0,0) confidence
    grid.data[5] = 1000.0;   // class 0 logit
    grid.data[6] = -1000.0;  // class 1 logit

    Truths truths{{0, {0.25, 0.25, 0.5, 0.5}}};
    DetectionLossResult<double> r = detection_loss(grid, truths, 1, 2);
    CHECK(r.loss == 0.0);
    for (double v : r.grad.data) CHECK(v == 0.0);
}

TEST_CASE("detection loss validates its inputs") {
    TensorT<double> grid({2, 2, 7}, 0.0);
    expect_error(ErrorCode::shape_mismatch,
                 [] { detection_loss(TensorT<double>({2, 7}, 0.0), Truths{}, 1, 2); });
    expect_error(ErrorCode::invalid_argument, [&] { detection_loss(grid, Truths{}, 0, 2); });
    expect_error(ErrorCode::invalid_argument, [&] { detection_loss(grid, Truths{}, 1, 0); });
    expect_error(ErrorCode::shape_mismatch, [&] { detection_loss(grid, Truths{}, 2, 2); });
    expect_error(ErrorCode::invalid_label,
                 [&] { detection_loss(grid, Truths{{2, {0.5, 0.5, 0.1, 0.1}}}, 1, 2); });
    expect_error(ErrorCode::invalid_annotation,
                 [&] { detection_loss(grid, Truths{{0, {1.5, 0.5, 0.1, 0.1}}}, 1, 2); });
    expect_error(ErrorCode::invalid_annotation,
                 [&] { detection_loss(grid, Truths{{0, {0.5, 0.5, -0.1, 0.1}}}, 1, 2); });
}

TEST_CASE("detection loss leaves unrelated slots alone") {
    SplitMix64 rng(71);
    const int B = 2, C = 3, depth = B * 5 + C;
    TensorT<double> grid = random_tensor<double>({2, 2, depth}, rng, -1.5, 1.5);
    // one truth centered in cell (0,1)
    Truths truths{{1, {0.8, 0.2, 0.3, 0.3}}};
    while (!responsibility_is_stable(grid, truths, B, C))
        grid = random_tensor<double>({2, 2, depth}, rng, -1.5, 1.5);
    DetectionLossResult<double> r = detection_loss(grid, truths, B, C);
    CHECK(r.loss > 0.0);
    for (int cell = 0; cell < 4; ++cell) {
        const bool truth_cell = cell == 1;  // row 0, col 1
        int responsible_boxes = 0;
        for (int b = 0; b < B; ++b) {
            const std::size_t off = static_cast<std::size_t>(cell * depth + b * 5);
            const bool coords_touched = r.grad.data[off] != 0.0 || r.grad.data[off + 1] != 0.0 ||
                                        r.grad.data[off + 2] != 0.0 || r.grad.data[off + 3] != 0.0;
            if (coords_touched) {
                CHECK(truth_cell);
                ++responsible_boxes;
            }
            // every box pays a confidence term
            CHECK(r.grad.data[off + 4] != 0.0);
        }
        if (truth_cell) CHECK(responsible_boxes == 1);
        for (int c = 0; c < C; ++c) {
            const double gv = r.grad.data[static_cast<std::size_t>(cell * depth + B * 5 + c)];
            if (!truth_cell) CHECK(gv == 0.0);
        }
    }
}

TEST_CASE("tied boxes hand responsibility to the lowest index") {
    SplitMix64 rng(73);
    const int B = 2, C = 2, depth = B * 5 + C;
    TensorT<double> grid({1, 1, depth}, 0.0);
    // both boxes share identical raw coordinates, so their overlap ties
    for (int s = 0; s < 5; ++s) {
        const double v = rng.range(-1.0, 1.0);
        grid.data[static_cast<std::size_t>(s)] = v;
        grid.data[static_cast<std::size_t>(5 + s)] = v;
    }
    Truths truths{{0, {0.5, 0.5, 0.4, 0.4}}};
    DetectionLossResult<double> r = detection_loss(grid, truths, B, C);
    bool box0_coords = false, box1_coords = false;
    for (int s = 0; s < 4; ++s) {
        box0_coords = box0_coords || r.grad.data[static_cast<std::size_t>(s)] != 0.0;
        box1_coords = box1_coords || r.grad.data[static_cast<std::size_t>(5 + s)] != 0.0;
    }
    CHECK(box0_coords);
    CHECK_FALSE(box1_coords);
}

TEST_CASE("detection loss gradient matches finite differences on the worked size") {
    SplitMix64 rng(79);
    for (int trial = 0; trial < 8; ++trial) {
        TensorT<double> grid = random_tensor<double>({2, 2, 7}, rng, -2.0, 2.0);
        Truths truths;
        const int n = 1 + static_cast<int>(rng.below(2));
        for (int t = 0; t < n; ++t)
            truths.push_back({static_cast<int>(rng.below(2)),
                              {rng.range(0.05, 0.95), rng.range(0.05, 0.95),
                               rng.range(0.05, 0.6), rng.range(0.05, 0.6)}});
        auto loss = [&] { return detection_loss(grid, truths, 1, 2).loss; };
        DetectionLossResult<double> r = detection_loss(grid, truths, 1, 2);
        check_grads(grid.data, r.grad.data, loss, 1e-5);
    }
}

TEST_CASE("detection loss gradient matches finite differences across geometries") {
    SplitMix64 rng(83);
    for (int trial = 0; trial < 6; ++trial) {
        const int S = 1 + static_cast<int>(rng.below(3));
        const int B = 1 + static_cast<int>(rng.below(2));
        const int C = 1 + static_cast<int>(rng.below(3));
        TensorT<double> grid({1}, 0.0);
        Truths truths;
        do {
            grid = random_tensor<double>({S, S, B * 5 + C}, rng, -2.0, 2.0);
            truths.clear();
            const int n = static_cast<int>(rng.below(3));
            for (int t = 0; t < n; ++t)
                truths.push_back({static_cast<int>(rng.below(static_cast<std::uint64_t>(C))),
                                  {rng.range(0.05, 0.95), rng.range(0.05, 0.95),
                                   rng.range(0.05, 0.6), rng.range(0.05, 0.6)}});
        } while (!responsibility_is_stable(grid, truths, B, C));
        auto loss = [&] { return detection_loss(grid, truths, B, C).loss; };
        DetectionLossResult<double> r = detection_loss(grid, truths, B, C);
        check_grads(grid.data, r.grad.data, loss, 1e-5);
    }
}

TEST_CASE("a small step against the gradient lowers the loss") {
    SplitMix64 rng(89);
    TensorT<double> grid = random_tensor<double>({2, 2, 7}, rng, -2.0, 2.0);
    Truths truths{{0, {0.3, 0.7, 0.2, 0.4}}, {1, {0.75, 0.25, 0.3, 0.3}}};
    DetectionLossResult<double> r = detection_loss(grid, truths, 1, 2);
    REQUIRE(r.loss > 0.0);
    TensorT<double> stepped = grid;
    for (std::size_t i = 0; i < stepped.size(); ++i) stepped.data[i] -= 1e-3 * r.grad.data[i];
    CHECK(detection_loss(stepped, truths, 1, 2).loss < r.loss);
}
