#include "evalmetrics.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "error.hpp"

namespace percept {

double top1_accuracy(const std::vector<int>& predictions, const std::vector<int>& labels) {
    if (predictions.empty() || predictions.size() != labels.size())
        throw Error(ErrorCode::invalid_input,
                    "accuracy needs equally many predictions and labels, got " +
                        std::to_string(predictions.size()) + " and " +
                        std::to_string(labels.size()));
    std::size_t hits = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i)
        if (predictions[i] == labels[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

double average_precision(const std::vector<FrameDetection>& dets,
                         const std::vector<GroundTruth>& truths, double iou_thr) {
    if (!(iou_thr >= 0.0 && iou_thr <= 1.0))
        throw Error(ErrorCode::invalid_argument,
                    "matching threshold must lie in [0,1], got " + std::to_string(iou_thr));
    if (truths.empty())
        throw Error(ErrorCode::invalid_input,
                    "average precision is undefined for a class with no ground truths");
    if (dets.empty()) return 0.0;

    // Confidence descending, ties keeping input order.
    std::vector<std::size_t> order(dets.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&dets](std::size_t a, std::size_t b) {
        return dets[a].det.confidence > dets[b].det.confidence;
    });

    std::map<std::string, std::vector<std::size_t>> truths_by_frame;
    for (std::size_t i = 0; i < truths.size(); ++i)
        truths_by_frame[truths[i].frame_id].push_back(i);
    std::vector<char> matched(truths.size(), 0);

    const std::size_t n = dets.size();
    std::vector<double> precision(n), recall(n);
    std::size_t tp = 0;
    for (std::size_t k = 0; k < n; ++k) {
        const FrameDetection& d = dets[order[k]];
        double best_iou = -1.0;
        std::size_t best = truths.size();
        auto it = truths_by_frame.find(d.frame_id);
        if (it != truths_by_frame.end()) {
            // Highest-overlap unmatched truth in this frame; ties keep the
            // first one (annotation order).
            for (std::size_t ti : it->second) {
                if (matched[ti]) continue;
                const double ov = iou(d.det.box, truths[ti].box);
                if (ov > best_iou) {
                    best_iou = ov;
                    best = ti;
                }
            }
        }
        if (best != truths.size() && best_iou >= iou_thr) {
            matched[best] = 1;
            ++tp;
        }
        precision[k] = static_cast<double>(tp) / static_cast<double>(k + 1);
        recall[k] = static_cast<double>(tp) / static_cast<double>(truths.size());
    }

    // Area under the monotone precision envelope, evaluated at every
    // recall step (all-point interpolation).
    double ap = 0.0, prev_recall = 0.0, envelope = 0.0;
    std::vector<double> env(n);
    for (std::size_t k = n; k-- > 0;) {
        envelope = std::max(envelope, precision[k]);
        env[k] = envelope;
    }
    for (std::size_t k = 0; k < n; ++k) {
        ap += (recall[k] - prev_recall) * env[k];
        prev_recall = recall[k];
    }
    return ap;
}

EvalReport mean_ap(const std::vector<FrameDetection>& dets,
                   const std::vector<GroundTruth>& truths, double iou_thr) {
    if (truths.empty())
        throw Error(ErrorCode::invalid_input, "mean average precision needs at least one ground truth");
    std::map<int, std::vector<GroundTruth>> truths_by_class;
    for (const auto& t : truths) truths_by_class[t.class_id].push_back(t);
    std::map<int, std::vector<FrameDetection>> dets_by_class;
    for (const auto& d : dets) dets_by_class[d.det.class_id].push_back(d);

    EvalReport r;
    r.truths = static_cast<std::int64_t>(truths.size());
    r.detections = static_cast<std::int64_t>(dets.size());
    std::map<std::string, char> frames;
    for (const auto& t : truths) frames[t.frame_id] = 1;
    for (const auto& d : dets) frames[d.frame_id] = 1;
    r.frames = static_cast<std::int64_t>(frames.size());

    double sum = 0.0;
    for (const auto& [cls, cls_truths] : truths_by_class) {
        const auto it = dets_by_class.find(cls);
        static const std::vector<FrameDetection> none;
        const double ap = average_precision(it == dets_by_class.end() ? none : it->second,
                                            cls_truths, iou_thr);
        r.per_class_ap[cls] = ap;
        sum += ap;
    }
    r.map_score = sum / static_cast<double>(truths_by_class.size());
    return r;
}

std::vector<GroundTruth> parse_annotations(std::istream& in) {
    std::vector<GroundTruth> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::size_t first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        std::istringstream ls(line);
        GroundTruth t;
        double vals[4];
        if (!(ls >> t.frame_id >> t.class_id >> vals[0] >> vals[1] >> vals[2] >> vals[3]))
            throw Error(ErrorCode::parse,
                        "annotation line " + std::to_string(lineno) +
                            ": expected <frame_id> <class_id> <cx> <cy> <w> <h>");
        std::string extra;
        if (ls >> extra)
            throw Error(ErrorCode::parse, "annotation line " + std::to_string(lineno) +
                                              ": unexpected trailing token '" + extra + "'");
        if (t.class_id < 0)
            throw Error(ErrorCode::invalid_annotation,
                        "annotation line " + std::to_string(lineno) + ": class id must be >= 0");
        for (double v : vals)
            if (!(v >= 0.0 && v <= 1.0))
                throw Error(ErrorCode::invalid_annotation,
                            "annotation line " + std::to_string(lineno) +
                                ": box coordinates must lie in [0,1]");
        t.box = {vals[0], vals[1], vals[2], vals[3]};
        out.push_back(std::move(t));
    }
    return out;
}

std::vector<GroundTruth> load_annotations(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::io, "cannot open annotations '" + path + "'");
    return parse_annotations(in);
}

namespace {

std::string fixed6(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

}  // namespace

std::string report_json(const EvalReport& report, const std::vector<std::string>& class_labels) {
    std::string out = "{";
    out += "\"frames\":" + std::to_string(report.frames);
    out += ",\"truths\":" + std::to_string(report.truths);
    out += ",\"detections\":" + std::to_string(report.detections);
    if (report.map_score) {
        out += ",\"map\":" + fixed6(*report.map_score);
        out += ",\"per_class_ap\":{";
        bool first = true;
        for (const auto& [cls, ap] : report.per_class_ap) {
            if (!first) out += ",";
            first = false;
            const std::string label = cls >= 0 && cls < static_cast<int>(class_labels.size())
                                          ? class_labels[static_cast<std::size_t>(cls)]
                                          : std::to_string(cls);
            out += "\"" + label + "\":" + fixed6(ap);
        }
        out += "}";
    }
    if (report.top1) out += ",\"top1\":" + fixed6(*report.top1);
    out += "}\n";
    return out;
}

}  // namespace percept
