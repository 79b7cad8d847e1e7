#pragma once

#include <algorithm>

namespace percept {

// Axis-aligned box in center form. All pipeline coordinates are
// normalized to [0,1] relative to the frame.
template <typename T>
struct BoxT {
    T cx{}, cy{}, w{}, h{};
};

using Box = BoxT<double>;

// Intersection over union. Degenerate boxes (zero or negative extent)
// produce zero intersection and, when the union is empty too, an IoU of 0
// rather than 0/0.
template <typename T>
T iou(const BoxT<T>& a, const BoxT<T>& b) {
    const T ax0 = a.cx - a.w / 2, ax1 = a.cx + a.w / 2;
    const T ay0 = a.cy - a.h / 2, ay1 = a.cy + a.h / 2;
    const T bx0 = b.cx - b.w / 2, bx1 = b.cx + b.w / 2;
    const T by0 = b.cy - b.h / 2, by1 = b.cy + b.h / 2;
    const T iw = std::max(T(0), std::min(ax1, bx1) - std::max(ax0, bx0));
    const T ih = std::max(T(0), std::min(ay1, by1) - std::max(ay0, by0));
    const T inter = iw * ih;
    const T area_a = std::max(T(0), ax1 - ax0) * std::max(T(0), ay1 - ay0);
    const T area_b = std::max(T(0), bx1 - bx0) * std::max(T(0), by1 - by0);
    const T uni = area_a + area_b - inter;
    if (uni <= T(0)) return T(0);
    return inter / uni;
}

}  // namespace percept
