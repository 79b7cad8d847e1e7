#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "boxes.hpp"
#include "detect.hpp"
#include "support.hpp"

using namespace percept;
using testsupport::expect_error;
using testsupport::random_tensor;

namespace {

// Corner-form overlap, written independently of the center-form production
// routine.
double corner_iou(const Box& a, const Box& b) {
    const double ax0 = a.cx - a.w / 2, ay0 = a.cy - a.h / 2;
    const double ax1 = ax0 + a.w, ay1 = ay0 + a.h;
    const double bx0 = b.cx - b.w / 2, by0 = b.cy - b.h / 2;
    const double bx1 = bx0 + b.w, by1 = by0 + b.h;
    const double ix = std::max(0.0, std::min(ax1, bx1) - std::max(ax0, bx0));
    const double iy = std::max(0.0, std::min(ay1, by1) - std::max(ay0, by0));
    const double inter = ix * iy;
    const double ua = std::max(0.0, ax1 - ax0) * std::max(0.0, ay1 - ay0) +
                      std::max(0.0, bx1 - bx0) * std::max(0.0, by1 - by0) - inter;
    return ua > 0.0 ? inter / ua : 0.0;
}

// Reference suppression: rank every detection, then keep each one exactly
// when no earlier-ranked kept detection of its class overlaps it at or
// above the threshold. Pairs are checked exhaustively.
std::vector<Detection> nms_reference(const std::vector<Detection>& in, double thr) {
    std::vector<std::size_t> order(in.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&in](std::size_t a, std::size_t b) {
        if (in[a].confidence != in[b].confidence) return in[a].confidence > in[b].confidence;
        if (in[a].class_id != in[b].class_id) return in[a].class_id < in[b].class_id;
        return a < b;
    });
    std::vector<char> kept(in.size(), 0);
    std::vector<Detection> out;
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
        const Detection& d = in[order[pos]];
        bool ok = true;
        for (std::size_t q = 0; q < pos && ok; ++q) {
            if (!kept[q]) continue;
            const Detection& e = in[order[q]];
            if (e.class_id == d.class_id && corner_iou(e.box, d.box) >= thr) ok = false;
        }
        kept[pos] = ok;
        if (ok) out.push_back(d);
    }
    return out;
}

bool same_dets(const std::vector<Detection>& a, const std::vector<Detection>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].class_id != b[i].class_id) return false;
        if (a[i].confidence != b[i].confidence) return false;
        if (a[i].box.cx != b[i].box.cx || a[i].box.cy != b[i].box.cy) return false;
        if (a[i].box.w != b[i].box.w || a[i].box.h != b[i].box.h) return false;
    }
    return true;
}

Detection det(int cls, double conf, double cx, double cy, double w, double h) {
    Detection d;
    d.class_id = cls;
    d.confidence = conf;
    d.box = {cx, cy, w, h};
    return d;
}

}  // namespace

// ---------------------------------------------------------------------------
// grid decode

TEST_CASE("silent grids decode to nothing above threshold zero") {
    Tensor raw({13, 13, 7}, -1000.0f);
    CHECK(decode_grid(raw, 1, 2, 0.1).empty());
    CHECK(decode_grid(raw, 1, 2, 0.5).empty());
    CHECK(decode_grid(raw, 1, 2, 1.0).empty());
    // at threshold 0 every box survives, confidence exactly 0
    std::vector<Detection> all = decode_grid(raw, 1, 2, 0.0);
    CHECK(all.size() == 13 * 13);
    for (const Detection& d : all) CHECK(d.confidence == 0.0);
}

TEST_CASE("zero offsets decode to cell centers") {
    Tensor raw({13, 13, 7}, 0.0f);
    std::vector<Detection> dets = decode_grid(raw, 1, 2, 0.0);
    REQUIRE(dets.size() == 13 * 13);
    // ties resolve to scan order, so the first detection is cell (0,0)
    CHECK(dets[0].box.cx == doctest::Approx(0.5 / 13.0).epsilon(1e-12));
    CHECK(dets[0].box.cy == doctest::Approx(0.5 / 13.0).epsilon(1e-12));
    CHECK(dets[0].box.w == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(dets[0].box.h == doctest::Approx(0.5).epsilon(1e-12));
    // every cell center lands strictly inside the frame
    for (const Detection& d : dets) {
        CHECK(d.box.cx > 0.0);
        CHECK(d.box.cx < 1.0);
    }
}

TEST_CASE("threshold zero yields one detection per box slot") {
    SplitMix64 rng(97);
    Tensor raw = random_tensor<float>({4, 4, 13}, rng, -3.0, 3.0);  // B=2, C=3
    CHECK(decode_grid(raw, 2, 3, 0.0).size() == 4 * 4 * 2);
}

TEST_CASE("decoded coordinates always land in the unit square") {
    SplitMix64 rng(103);
    int boxes_seen = 0;
    for (int trial = 0; trial < 1100; ++trial) {
        const int S = 1 + static_cast<int>(rng.below(3));
        Tensor raw = random_tensor<float>({S, S, 13}, rng, -50.0, 50.0);
        for (const Detection& d : decode_grid(raw, 2, 3, 0.0)) {
            ++boxes_seen;
            CHECK(d.box.cx >= 0.0);
            CHECK(d.box.cx <= 1.0);
            CHECK(d.box.cy >= 0.0);
            CHECK(d.box.cy <= 1.0);
            CHECK(d.box.w >= 0.0);
            CHECK(d.box.w <= 1.0);
            CHECK(d.box.h >= 0.0);
            CHECK(d.box.h <= 1.0);
            CHECK(d.confidence >= 0.0);
            CHECK(d.confidence <= 1.0);
            CHECK(d.class_id >= 0);
            CHECK(d.class_id < 3);
        }
    }
    CHECK(boxes_seen >= 1000);
}

TEST_CASE("decode orders by confidence with class id breaking ties") {
    // two cells with mirrored class logits produce bitwise-equal confidences
    // for different classes; the lower class id must come first
    Tensor raw({1, 2, 7}, 0.0f);
    // cell (0,0): objectness 1, class logits favor class 1
    raw.data[4] = 1.0f;
    raw.data[5] = 0.0f;
    raw.data[6] = 5.0f;
    // cell (0,1): objectness 1, class logits favor class 0
    raw.data[7 + 4] = 1.0f;
    raw.data[7 + 5] = 5.0f;
    raw.data[7 + 6] = 0.0f;
    std::vector<Detection> dets = decode_grid(raw, 1, 2, 0.3);
    REQUIRE(dets.size() == 2);
    CHECK(dets[0].confidence == dets[1].confidence);
    CHECK(dets[0].class_id == 0);
    CHECK(dets[1].class_id == 1);
}

TEST_CASE("decode validates its arguments") {
    Tensor raw({2, 2, 7}, 0.0f);
    expect_error(ErrorCode::shape_mismatch, [] { decode_grid(Tensor({2, 7}, 0.0f), 1, 2, 0.5); });
    expect_error(ErrorCode::shape_mismatch, [&] { decode_grid(raw, 2, 2, 0.5); });
    expect_error(ErrorCode::invalid_argument, [&] { decode_grid(raw, 0, 7, 0.5); });
    expect_error(ErrorCode::invalid_argument, [&] { decode_grid(raw, 1, 2, -0.1); });
    expect_error(ErrorCode::invalid_argument, [&] { decode_grid(raw, 1, 2, 1.5); });
}

// ---------------------------------------------------------------------------
// IoU

TEST_CASE("iou matches the hand examples") {
    const Box a{0.5, 0.5, 0.5, 0.5};
    CHECK(iou(a, a) == 1.0);

    const Box far1{0.2, 0.2, 0.1, 0.1};
    const Box far2{0.8, 0.8, 0.1, 0.1};
    CHECK(iou(far1, far2) == 0.0);

    const Box inner{0.5, 0.5, 0.25, 0.25};
    CHECK(iou(a, inner) == doctest::Approx(0.25).epsilon(1e-12));

    const Box point{0.4, 0.4, 0.0, 0.0};
    CHECK(iou(point, point) == 0.0);  // empty union guards the 0/0 case
}

TEST_CASE("iou is symmetric, bounded, and agrees with the corner form") {
    SplitMix64 rng(107);
    for (int trial = 0; trial < 500; ++trial) {
        const Box a{rng.range(0.0, 1.0), rng.range(0.0, 1.0), rng.range(0.0, 0.6),
                    rng.range(0.0, 0.6)};
        const Box b{rng.range(0.0, 1.0), rng.range(0.0, 1.0), rng.range(0.0, 0.6),
                    rng.range(0.0, 0.6)};
        const double ab = iou(a, b);
        CHECK(ab == iou(b, a));
        CHECK(ab >= 0.0);
        CHECK(ab <= 1.0);
        CHECK(std::fabs(ab - corner_iou(a, b)) <= 1e-12);
        if (a.w > 0.0 && a.h > 0.0) CHECK(iou(a, a) == 1.0);
    }
}

// ---------------------------------------------------------------------------
// non-maximum suppression

TEST_CASE("nms keeps the strongest of overlapping same-class boxes") {
    CHECK(nms({}, 0.5).empty());

    std::vector<Detection> same = {det(0, 0.9, 0.5, 0.5, 0.2, 0.2),
                                   det(0, 0.8, 0.5, 0.5, 0.2, 0.2)};
    std::vector<Detection> kept = nms(same, 0.5);
    REQUIRE(kept.size() == 1);
    CHECK(kept[0].confidence == 0.9);

    std::vector<Detection> cross = {det(0, 0.9, 0.5, 0.5, 0.2, 0.2),
                                    det(1, 0.8, 0.5, 0.5, 0.2, 0.2)};
    CHECK(nms(cross, 0.5).size() == 2);
}

TEST_CASE("nms threshold endpoints behave as contracted") {
    std::vector<Detection> dets = {det(0, 0.9, 0.2, 0.2, 0.1, 0.1),
                                   det(0, 0.8, 0.8, 0.8, 0.1, 0.1),
                                   det(0, 0.7, 0.5, 0.5, 0.1, 0.1),
                                   det(1, 0.6, 0.5, 0.5, 0.1, 0.1)};
    // threshold 0: even non-overlapping boxes suppress, one survivor per class
    std::vector<Detection> zero = nms(dets, 0.0);
    REQUIRE(zero.size() == 2);
    CHECK(zero[0].confidence == 0.9);
    CHECK(zero[1].class_id == 1);

    // threshold 1: only exact duplicates are suppressed
    std::vector<Detection> dup = {det(0, 0.9, 0.5, 0.5, 0.2, 0.2),
                                  det(0, 0.7, 0.5, 0.5, 0.2, 0.2),
                                  det(0, 0.8, 0.3, 0.3, 0.2, 0.2)};
    std::vector<Detection> one = nms(dup, 1.0);
    REQUIRE(one.size() == 2);
    CHECK(one[0].confidence == 0.9);
    CHECK(one[1].confidence == 0.8);

    expect_error(ErrorCode::invalid_argument, [&] { nms(dets, -0.2); });
    expect_error(ErrorCode::invalid_argument, [&] { nms(dets, 1.2); });
}

TEST_CASE("nms agrees with the exhaustive reference") {
    SplitMix64 rng(109);
    const double confs[] = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
    for (int trial = 0; trial < 240; ++trial) {
        const int n = static_cast<int>(rng.below(11));
        std::vector<Detection> dets;
        for (int i = 0; i < n; ++i) {
            if (i > 0 && rng.below(4) == 0) {
                // exact geometric duplicate of an earlier box
                Detection d = dets[static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(i)))];
                d.confidence = confs[rng.below(9)];
                dets.push_back(d);
            } else {
                dets.push_back(det(static_cast<int>(rng.below(3)), confs[rng.below(9)],
                                   rng.range(0.1, 0.9), rng.range(0.1, 0.9), rng.range(0.05, 0.5),
                                   rng.range(0.05, 0.5)));
            }
        }
        const double thr = trial % 5 == 0 ? 0.0 : (trial % 5 == 1 ? 1.0 : rng.range(0.0, 1.0));
        std::vector<Detection> got = nms(dets, thr);
        std::vector<Detection> want = nms_reference(dets, thr);
        CHECK_MESSAGE(same_dets(got, want),
                      "trial " << trial << ": got " << got.size() << " kept, reference "
                               << want.size());
        // every suppressed box really overlaps a kept one of its class
        for (const Detection& d : dets) {
            bool in_out = false;
            for (const Detection& k : got)
                in_out = in_out || (k.class_id == d.class_id && k.confidence == d.confidence &&
                                    k.box.cx == d.box.cx && k.box.cy == d.box.cy &&
                                    k.box.w == d.box.w && k.box.h == d.box.h);
            if (!in_out) {
                bool covered = false;
                for (const Detection& k : got)
                    covered = covered ||
                              (k.class_id == d.class_id && corner_iou(k.box, d.box) >= thr);
                CHECK(covered);
            }
        }
    }
}
