#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "evalmetrics.hpp"
#include "support.hpp"

using namespace percept;
using testsupport::expect_error;

namespace {

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

// Brute-force PR-curve evaluator for a single class. Simulates the greedy
// matching itself, then integrates max-precision-to-the-right directly.
double ap_reference(std::vector<FrameDetection> dets, const std::vector<GroundTruth>& truths,
                    double thr) {
    std::stable_sort(dets.begin(), dets.end(),
                     [](const FrameDetection& a, const FrameDetection& b) {
                         return a.det.confidence > b.det.confidence;
                     });
    std::vector<char> used(truths.size(), 0);
    std::vector<char> is_tp(dets.size(), 0);
    for (std::size_t d = 0; d < dets.size(); ++d) {
        int best = -1;
        double best_iou = -1.0;
        for (std::size_t t = 0; t < truths.size(); ++t) {
            if (used[t] || truths[t].frame_id != dets[d].frame_id) continue;
            const double ov = corner_iou(dets[d].det.box, truths[t].box);
            if (ov > best_iou) {
                best_iou = ov;
                best = static_cast<int>(t);
            }
        }
        if (best >= 0 && best_iou >= thr) {
            used[static_cast<std::size_t>(best)] = 1;
            is_tp[d] = 1;
        }
    }
    std::vector<double> prec(dets.size()), rec(dets.size());
    std::size_t tp = 0;
    for (std::size_t d = 0; d < dets.size(); ++d) {
        tp += static_cast<std::size_t>(is_tp[d]);
        prec[d] = static_cast<double>(tp) / static_cast<double>(d + 1);
        rec[d] = static_cast<double>(tp) / static_cast<double>(truths.size());
    }
    double ap = 0.0, prev = 0.0;
    for (std::size_t d = 0; d < dets.size(); ++d) {
        double pmax = 0.0;
        for (std::size_t j = d; j < dets.size(); ++j) pmax = std::max(pmax, prec[j]);
        ap += (rec[d] - prev) * pmax;
        prev = rec[d];
    }
    return ap;
}

GroundTruth truth(const std::string& frame, int cls, double cx, double cy, double w, double h) {
    GroundTruth t;
    t.frame_id = frame;
    t.class_id = cls;
    t.box = {cx, cy, w, h};
    return t;
}

FrameDetection fdet(const std::string& frame, int cls, double conf, double cx, double cy,
                    double w, double h) {
    FrameDetection d;
    d.frame_id = frame;
    d.det.class_id = cls;
    d.det.confidence = conf;
    d.det.box = {cx, cy, w, h};
    return d;
}

}  // namespace

// ---------------------------------------------------------------------------
// top-1 accuracy

TEST_CASE("top1 accuracy counts exact agreement") {
    CHECK(top1_accuracy({1, 2, 3}, {1, 2, 3}) == 1.0);
    CHECK(top1_accuracy({0, 0, 0}, {1, 2, 3}) == 0.0);
    CHECK(top1_accuracy({1, 2, 3}, {1, 2, 4}) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    expect_error(ErrorCode::invalid_input, [] { top1_accuracy({1, 2}, {1}); });
    expect_error(ErrorCode::invalid_input, [] { top1_accuracy({}, {}); });
}

// ---------------------------------------------------------------------------
// average precision

TEST_CASE("ap matches the worked examples") {
    const std::vector<GroundTruth> one = {truth("f", 0, 0.5, 0.5, 0.2, 0.2)};

    // a perfect detection scores 1.0
    CHECK(average_precision({fdet("f", 0, 0.95, 0.5, 0.5, 0.2, 0.2)}, one, 0.5) == 1.0);

    // a confident miss ranked above a perfect hit halves the area
    const std::vector<FrameDetection> fp_first = {fdet("f", 0, 0.9, 0.1, 0.1, 0.05, 0.05),
                                                  fdet("f", 0, 0.8, 0.5, 0.5, 0.2, 0.2)};
    CHECK(average_precision(fp_first, one, 0.5) == 0.5);

    // zero-overlap detections score 0
    const std::vector<FrameDetection> misses = {fdet("f", 0, 0.9, 0.1, 0.1, 0.05, 0.05),
                                                fdet("f", 0, 0.8, 0.9, 0.9, 0.05, 0.05)};
    CHECK(average_precision(misses, one, 0.5) == 0.0);

    // no detections at all score 0
    CHECK(average_precision({}, one, 0.5) == 0.0);

    expect_error(ErrorCode::invalid_input,
                 [&] { average_precision(fp_first, {}, 0.5); });
    expect_error(ErrorCode::invalid_argument,
                 [&] { average_precision(fp_first, one, 1.5); });
}

TEST_CASE("a second detection of a matched truth counts as a false positive") {
    const std::vector<GroundTruth> one = {truth("f", 0, 0.5, 0.5, 0.2, 0.2)};
    const std::vector<FrameDetection> dets = {fdet("f", 0, 0.9, 0.5, 0.5, 0.2, 0.2),
                                              fdet("f", 0, 0.8, 0.5, 0.5, 0.2, 0.2)};
    // recall hits 1.0 on the first detection, so AP stays 1.0, but the
    // duplicate must not create a second match
    CHECK(average_precision(dets, one, 0.5) == 1.0);

    // with two truths in different frames the duplicate wastes a slot
    const std::vector<GroundTruth> two = {truth("f", 0, 0.5, 0.5, 0.2, 0.2),
                                          truth("g", 0, 0.5, 0.5, 0.2, 0.2)};
    const std::vector<FrameDetection> dup_then_hit = {fdet("f", 0, 0.9, 0.5, 0.5, 0.2, 0.2),
                                                      fdet("f", 0, 0.8, 0.5, 0.5, 0.2, 0.2),
                                                      fdet("g", 0, 0.7, 0.5, 0.5, 0.2, 0.2)};
    // precision after each rank: 1, 1/2, 2/3; recall: 1/2, 1/2, 1
    // envelope at the two recall steps: 1 and 2/3
    CHECK(average_precision(dup_then_hit, two, 0.5) ==
          doctest::Approx(0.5 * 1.0 + 0.5 * (2.0 / 3.0)).epsilon(1e-12));
}

TEST_CASE("ap is invariant under order-preserving confidence transforms") {
    SplitMix64 rng(113);
    for (int trial = 0; trial < 40; ++trial) {
        std::vector<GroundTruth> truths;
        std::vector<FrameDetection> dets;
        const int nt = 1 + static_cast<int>(rng.below(4));
        for (int t = 0; t < nt; ++t)
            truths.push_back(truth("f" + std::to_string(rng.below(3)), 0, rng.range(0.2, 0.8),
                                   rng.range(0.2, 0.8), rng.range(0.05, 0.3),
                                   rng.range(0.05, 0.3)));
        const int nd = static_cast<int>(rng.below(6));
        for (int d = 0; d < nd; ++d)
            dets.push_back(fdet("f" + std::to_string(rng.below(3)), 0, rng.range(0.05, 0.99),
                                rng.range(0.2, 0.8), rng.range(0.2, 0.8), rng.range(0.05, 0.3),
                                rng.range(0.05, 0.3)));
        const double base = average_precision(dets, truths, 0.5);
        std::vector<FrameDetection> cubed = dets;
        for (auto& d : cubed) d.det.confidence = d.det.confidence * d.det.confidence * d.det.confidence;
        CHECK(average_precision(cubed, truths, 0.5) == base);
    }
}

TEST_CASE("ap agrees with the brute force evaluator") {
    SplitMix64 rng(127);
    for (int trial = 0; trial < 150; ++trial) {
        std::vector<GroundTruth> truths;
        std::vector<FrameDetection> dets;
        const int nt = 1 + static_cast<int>(rng.below(5));
        for (int t = 0; t < nt; ++t)
            truths.push_back(truth("f" + std::to_string(rng.below(3)), 0, rng.range(0.15, 0.85),
                                   rng.range(0.15, 0.85), rng.range(0.05, 0.3),
                                   rng.range(0.05, 0.3)));
        const int nd = static_cast<int>(rng.below(6));
        for (int d = 0; d < nd; ++d) {
            if (!truths.empty() && rng.below(3) == 0) {
                // near-exact redetection of some truth
                const GroundTruth& t = truths[rng.below(truths.size())];
                dets.push_back(fdet(t.frame_id, 0, rng.range(0.05, 0.99), t.box.cx, t.box.cy,
                                    t.box.w, t.box.h));
            } else {
                dets.push_back(fdet("f" + std::to_string(rng.below(3)), 0, rng.range(0.05, 0.99),
                                    rng.range(0.15, 0.85), rng.range(0.15, 0.85),
                                    rng.range(0.05, 0.3), rng.range(0.05, 0.3)));
            }
        }
        const double thr = trial % 3 == 0 ? 0.5 : rng.range(0.1, 0.9);
        CHECK(average_precision(dets, truths, thr) == ap_reference(dets, truths, thr));
    }
}

// ---------------------------------------------------------------------------
// mean AP

TEST_CASE("mean ap averages per-class scores") {
    // class 0 detected perfectly, class 1 missed entirely
    const std::vector<GroundTruth> truths = {truth("f", 0, 0.3, 0.3, 0.2, 0.2),
                                             truth("f", 1, 0.7, 0.7, 0.2, 0.2)};
    const std::vector<FrameDetection> dets = {fdet("f", 0, 0.9, 0.3, 0.3, 0.2, 0.2),
                                              fdet("f", 1, 0.8, 0.1, 0.1, 0.05, 0.05)};
    EvalReport r = mean_ap(dets, truths, 0.5);
    REQUIRE(r.map_score.has_value());
    CHECK(*r.map_score == 0.5);
    CHECK(r.per_class_ap.at(0) == 1.0);
    CHECK(r.per_class_ap.at(1) == 0.0);
    CHECK(r.frames == 1);
    CHECK(r.truths == 2);
    CHECK(r.detections == 2);

    // single class degenerates to plain AP
    const std::vector<GroundTruth> single = {truth("f", 2, 0.5, 0.5, 0.2, 0.2)};
    const std::vector<FrameDetection> sdets = {fdet("f", 2, 0.9, 0.5, 0.5, 0.2, 0.2)};
    EvalReport s = mean_ap(sdets, single, 0.5);
    CHECK(*s.map_score == average_precision(sdets, single, 0.5));

    // detections for a class with no truths are excluded, not penalized
    const std::vector<FrameDetection> stray = {fdet("f", 2, 0.9, 0.5, 0.5, 0.2, 0.2),
                                               fdet("f", 7, 0.9, 0.5, 0.5, 0.2, 0.2)};
    EvalReport st = mean_ap(stray, single, 0.5);
    CHECK(*st.map_score == 1.0);
    CHECK(st.per_class_ap.count(7) == 0);
    CHECK(st.detections == 2);

    expect_error(ErrorCode::invalid_input, [&] { mean_ap(dets, {}, 0.5); });
}

TEST_CASE("mean ap agrees with the brute force evaluator on micro instances") {
    SplitMix64 rng(131);
    for (int trial = 0; trial < 120; ++trial) {
        std::vector<GroundTruth> truths;
        std::vector<FrameDetection> dets;
        const int nt = 1 + static_cast<int>(rng.below(5));
        for (int t = 0; t < nt; ++t)
            truths.push_back(truth("f" + std::to_string(rng.below(3)),
                                   static_cast<int>(rng.below(3)), rng.range(0.15, 0.85),
                                   rng.range(0.15, 0.85), rng.range(0.05, 0.3),
                                   rng.range(0.05, 0.3)));
        const int nd = static_cast<int>(rng.below(6));
        for (int d = 0; d < nd; ++d) {
            if (rng.below(3) == 0) {
                const GroundTruth& t = truths[rng.below(truths.size())];
                dets.push_back(fdet(t.frame_id, t.class_id, rng.range(0.05, 0.99), t.box.cx,
                                    t.box.cy, t.box.w, t.box.h));
            } else {
                dets.push_back(fdet("f" + std::to_string(rng.below(3)),
                                    static_cast<int>(rng.below(3)), rng.range(0.05, 0.99),
                                    rng.range(0.15, 0.85), rng.range(0.15, 0.85),
                                    rng.range(0.05, 0.3), rng.range(0.05, 0.3)));
            }
        }
        EvalReport r = mean_ap(dets, truths, 0.5);

        std::map<int, std::vector<GroundTruth>> tb;
        for (const auto& t : truths) tb[t.class_id].push_back(t);
        double sum = 0.0;
        for (const auto& [cls, cls_truths] : tb) {
            std::vector<FrameDetection> cls_dets;
            for (const auto& d : dets)
                if (d.det.class_id == cls) cls_dets.push_back(d);
            const double want = ap_reference(cls_dets, cls_truths, 0.5);
            REQUIRE(r.per_class_ap.count(cls) == 1);
            CHECK(r.per_class_ap.at(cls) == want);
            sum += want;
        }
        CHECK(r.per_class_ap.size() == tb.size());
        CHECK(*r.map_score == sum / static_cast<double>(tb.size()));

        std::set<std::string> frames;
        for (const auto& t : truths) frames.insert(t.frame_id);
        for (const auto& d : dets) frames.insert(d.frame_id);
        CHECK(r.frames == static_cast<std::int64_t>(frames.size()));
    }
}

TEST_CASE("mean ap is invariant under input permutations") {
    SplitMix64 rng(137);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<GroundTruth> truths;
        std::vector<FrameDetection> dets;
        const int nt = 2 + static_cast<int>(rng.below(4));
        for (int t = 0; t < nt; ++t)
            truths.push_back(truth("f" + std::to_string(rng.below(3)),
                                   static_cast<int>(rng.below(3)), rng.range(0.15, 0.85),
                                   rng.range(0.15, 0.85), rng.range(0.05, 0.3),
                                   rng.range(0.05, 0.3)));
        const int nd = 2 + static_cast<int>(rng.below(5));
        for (int d = 0; d < nd; ++d)
            dets.push_back(fdet("f" + std::to_string(rng.below(3)),
                                static_cast<int>(rng.below(3)), rng.range(0.05, 0.99),
                                rng.range(0.15, 0.85), rng.range(0.15, 0.85),
                                rng.range(0.05, 0.3), rng.range(0.05, 0.3)));
        EvalReport base = mean_ap(dets, truths, 0.5);

        std::vector<GroundTruth> pt = truths;
        std::vector<FrameDetection> pd = dets;
        for (std::size_t i = pt.size(); i > 1; --i) std::swap(pt[i - 1], pt[rng.below(i)]);
        for (std::size_t i = pd.size(); i > 1; --i) std::swap(pd[i - 1], pd[rng.below(i)]);
        EvalReport perm = mean_ap(pd, pt, 0.5);
        CHECK(*base.map_score == *perm.map_score);
        CHECK(base.per_class_ap == perm.per_class_ap);
        CHECK(base.frames == perm.frames);
    }
}

// ---------------------------------------------------------------------------
// annotation parsing

TEST_CASE("annotation parsing handles the worked examples") {
    std::istringstream one("img1 2 0.5 0.5 0.2 0.2\n");
    std::vector<GroundTruth> t = parse_annotations(one);
    REQUIRE(t.size() == 1);
    CHECK(t[0].frame_id == "img1");
    CHECK(t[0].class_id == 2);
    CHECK(t[0].box.cx == 0.5);
    CHECK(t[0].box.w == 0.2);

    std::istringstream empty("");
    CHECK(parse_annotations(empty).empty());

    std::istringstream commented("# header\n\n  # another\nimg1 0 0.1 0.2 0.3 0.4\n");
    CHECK(parse_annotations(commented).size() == 1);
}

TEST_CASE("annotation parsing rejects malformed lines with line numbers") {
    expect_error(ErrorCode::invalid_annotation, [] {
        std::istringstream in("img1 0 1.5 0.5 0.2 0.2\n");
        parse_annotations(in);
    });
    expect_error(ErrorCode::invalid_annotation, [] {
        std::istringstream in("img1 -3 0.5 0.5 0.2 0.2\n");
        parse_annotations(in);
    });
    try {
        std::istringstream in("img1 0 0.1 0.2 0.3 0.4\nimg1 0 0.1 0.2 0.3 0.4\nimg1 zero 0.1\n");
        parse_annotations(in);
        FAIL("expected a parse error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::parse);
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
    expect_error(ErrorCode::parse, [] {
        std::istringstream in("img1 0 0.1 0.2 0.3 0.4 extra\n");
        parse_annotations(in);
    });
    expect_error(ErrorCode::parse, [] {
        std::istringstream in("img1 0 0.1 0.2\n");
        parse_annotations(in);
    });
}

// ---------------------------------------------------------------------------
// report serialization

TEST_CASE("eval report json is canonical") {
    EvalReport r;
    r.frames = 3;
    r.truths = 4;
    r.detections = 5;
    r.map_score = 0.75;
    r.per_class_ap[0] = 1.0;
    r.per_class_ap[1] = 0.5;
    CHECK(report_json(r, {"square", "disk", "triangle"}) ==
          "{\"frames\":3,\"truths\":4,\"detections\":5,\"map\":0.750000,"
          "\"per_class_ap\":{\"square\":1.000000,\"disk\":0.500000}}\n");

    EvalReport c;
    c.frames = 10;
    c.truths = 10;
    c.detections = 0;
    c.top1 = 2.0 / 3.0;
    CHECK(report_json(c, {}) ==
          "{\"frames\":10,\"truths\":10,\"detections\":0,\"top1\":0.666667}\n");
}
