#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "boxes.hpp"
#include "error.hpp"
#include "tensor.hpp"

namespace percept {

// ---------------------------------------------------------------------------
// convolution

template <typename T>
struct ConvParams {
    TensorT<T> weights;  // [out_c, in_c, kh, kw]
    TensorT<T> bias;     // [out_c]
    int stride = 1;
    int padding = 0;
};

template <typename T>
struct ConvGrads {
    TensorT<T> input;
    TensorT<T> weights;
    TensorT<T> bias;
};

namespace detail {

template <typename T>
void check_conv_args(const TensorT<T>& input, const ConvParams<T>& p) {
    if (input.rank() != 3)
        throw Error(ErrorCode::shape_mismatch,
                    "conv input must be [channels,height,width], got " + shape_str(input.shape));
    if (p.weights.rank() != 4)
        throw Error(ErrorCode::shape_mismatch,
                    "conv weights must be [out,in,kh,kw], got " + shape_str(p.weights.shape));
    if (p.bias.rank() != 1 || p.bias.shape[0] != p.weights.shape[0])
        throw Error(ErrorCode::shape_mismatch,
                    "conv bias must be [out_channels], got " + shape_str(p.bias.shape));
    if (p.weights.shape[1] != input.shape[0])
        throw Error(ErrorCode::shape_mismatch,
                    "conv expects " + std::to_string(p.weights.shape[1]) + " input channels, got " +
                        std::to_string(input.shape[0]));
    if (p.stride < 1)
        throw Error(ErrorCode::invalid_geometry,
                    "conv stride must be >= 1, got " + std::to_string(p.stride));
    if (p.padding < 0)
        throw Error(ErrorCode::invalid_geometry,
                    "conv padding must be >= 0, got " + std::to_string(p.padding));
    const int kh = p.weights.shape[2], kw = p.weights.shape[3];
    const int ph = input.shape[1] + 2 * p.padding, pw = input.shape[2] + 2 * p.padding;
    if (kh > ph || kw > pw)
        throw Error(ErrorCode::invalid_geometry,
                    "conv kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                        " exceeds padded input " + std::to_string(ph) + "x" + std::to_string(pw));
}

// Zero-pads a [C,H,W] image on both spatial sides.
template <typename T>
TensorT<T> pad_image(const TensorT<T>& in, int pad) {
    if (pad == 0) return in;
    const int c = in.shape[0], h = in.shape[1], w = in.shape[2];
    TensorT<T> out({c, h + 2 * pad, w + 2 * pad}, T(0));
    for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < h; ++y)
            std::copy_n(&in.data[(static_cast<std::size_t>(ci) * h + y) * w], w,
                        &out.data[(static_cast<std::size_t>(ci) * (h + 2 * pad) + y + pad) *
                                      (w + 2 * pad) +
                                  pad]);
    return out;
}

}  // namespace detail

template <typename T>
Shape conv2d_output_shape(const Shape& input, const ConvParams<T>& p) {
    const int kh = p.weights.shape[2], kw = p.weights.shape[3];
    const int oh = (input[1] + 2 * p.padding - kh) / p.stride + 1;
    const int ow = (input[2] + 2 * p.padding - kw) / p.stride + 1;
    return {p.weights.shape[0], oh, ow};
}

// Direct cross-correlation. The kernel element is hoisted so the inner
// loop runs contiguously along the output row; at stride 1 it also reads
// the input contiguously, which the compiler vectorizes well enough for
// the network sizes used here.
template <typename T>
TensorT<T> conv2d_forward(const TensorT<T>& input, const ConvParams<T>& p) {
    detail::check_conv_args(input, p);
    const int in_c = input.shape[0];
    const int out_c = p.weights.shape[0], kh = p.weights.shape[2], kw = p.weights.shape[3];
    const int s = p.stride;
    const TensorT<T> padded = detail::pad_image(input, p.padding);
    const int ph = padded.shape[1], pw = padded.shape[2];
    const int oh = (ph - kh) / s + 1, ow = (pw - kw) / s + 1;
    TensorT<T> out({out_c, oh, ow}, T(0));
    for (int o = 0; o < out_c; ++o) {
        T* oplane = &out.data[static_cast<std::size_t>(o) * oh * ow];
        std::fill_n(oplane, static_cast<std::size_t>(oh) * ow, p.bias.data[o]);
        for (int c = 0; c < in_c; ++c) {
            const T* iplane = &padded.data[static_cast<std::size_t>(c) * ph * pw];
            for (int u = 0; u < kh; ++u)
                for (int v = 0; v < kw; ++v) {
                    const T wv = p.weights.data[((static_cast<std::size_t>(o) * in_c + c) * kh + u) * kw + v];
                    for (int i = 0; i < oh; ++i) {
                        const T* irow = iplane + static_cast<std::size_t>(i * s + u) * pw + v;
                        T* orow = oplane + static_cast<std::size_t>(i) * ow;
                        if (s == 1) {
                            for (int j = 0; j < ow; ++j) orow[j] += wv * irow[j];
                        } else {
                            for (int j = 0; j < ow; ++j) orow[j] += wv * irow[static_cast<std::size_t>(j) * s];
                        }
                    }
                }
        }
    }
    return out;
}

template <typename T>
ConvGrads<T> conv2d_backward(const TensorT<T>& input, const ConvParams<T>& p,
                             const TensorT<T>& grad_out) {
    detail::check_conv_args(input, p);
    const Shape want = conv2d_output_shape(input.shape, p);
    if (grad_out.shape != want)
        throw Error(ErrorCode::shape_mismatch,
                    "conv output gradient shape " + shape_str(grad_out.shape) +
                        " does not match forward output " + shape_str(want));
    const int in_c = input.shape[0], h = input.shape[1], w = input.shape[2];
    const int out_c = p.weights.shape[0], kh = p.weights.shape[2], kw = p.weights.shape[3];
    const int s = p.stride, pad = p.padding;
    const TensorT<T> padded = detail::pad_image(input, pad);
    const int ph = padded.shape[1], pw = padded.shape[2];
    const int oh = want[1], ow = want[2];

    ConvGrads<T> g;
    g.weights = TensorT<T>(p.weights.shape, T(0));
    g.bias = TensorT<T>(p.bias.shape, T(0));
    TensorT<T> gpad({in_c, ph, pw}, T(0));

    for (int o = 0; o < out_c; ++o) {
        const T* gplane = &grad_out.data[static_cast<std::size_t>(o) * oh * ow];
        T acc = T(0);
        for (std::size_t n = 0; n < static_cast<std::size_t>(oh) * ow; ++n) acc += gplane[n];
        g.bias.data[o] = acc;
        for (int c = 0; c < in_c; ++c) {
            const T* iplane = &padded.data[static_cast<std::size_t>(c) * ph * pw];
            T* gip = &gpad.data[static_cast<std::size_t>(c) * ph * pw];
            for (int u = 0; u < kh; ++u)
                for (int v = 0; v < kw; ++v) {
                    const std::size_t widx =
                        ((static_cast<std::size_t>(o) * in_c + c) * kh + u) * kw + v;
                    const T wv = p.weights.data[widx];
                    T wacc = T(0);
                    for (int i = 0; i < oh; ++i) {
                        const T* irow = iplane + static_cast<std::size_t>(i * s + u) * pw + v;
                        T* grow = gip + static_cast<std::size_t>(i * s + u) * pw + v;
                        const T* gorow = gplane + static_cast<std::size_t>(i) * ow;
                        for (int j = 0; j < ow; ++j) {
                            const T gv = gorow[j];
                            wacc += gv * irow[static_cast<std::size_t>(j) * s];
                            grow[static_cast<std::size_t>(j) * s] += gv * wv;
                        }
                    }
                    g.weights.data[widx] += wacc;
                }
        }
    }

    // Crop the padding back off the input gradient.
    if (pad == 0) {
        g.input = std::move(gpad);
    } else {
        g.input = TensorT<T>({in_c, h, w}, T(0));
        for (int c = 0; c < in_c; ++c)
            for (int y = 0; y < h; ++y)
                std::copy_n(&gpad.data[(static_cast<std::size_t>(c) * ph + y + pad) * pw + pad], w,
                            &g.input.data[(static_cast<std::size_t>(c) * h + y) * w]);
    }
    return g;
}

// ---------------------------------------------------------------------------
// max pooling

template <typename T>
struct PoolRecord {
    TensorT<T> output;
    // Flat index into the pooled input per output element, so the backward
    // pass can route gradients without rescanning windows.
    std::vector<std::int64_t> argmax;
};

template <typename T>
PoolRecord<T> maxpool2d_forward(const TensorT<T>& input, int size, int stride) {
    if (input.rank() != 3)
        throw Error(ErrorCode::shape_mismatch,
                    "maxpool input must be [channels,height,width], got " + shape_str(input.shape));
    if (size < 1)
        throw Error(ErrorCode::invalid_geometry,
                    "maxpool window must be >= 1, got " + std::to_string(size));
    if (stride < 1)
        throw Error(ErrorCode::invalid_geometry,
                    "maxpool stride must be >= 1, got " + std::to_string(stride));
    const int c = input.shape[0], h = input.shape[1], w = input.shape[2];
    if (size > h || size > w)
        throw Error(ErrorCode::invalid_geometry,
                    "maxpool window " + std::to_string(size) + " exceeds input " +
                        std::to_string(h) + "x" + std::to_string(w));
    const int oh = (h - size) / stride + 1, ow = (w - size) / stride + 1;
    PoolRecord<T> rec;
    rec.output = TensorT<T>({c, oh, ow}, T(0));
    rec.argmax.resize(rec.output.size());
    std::size_t n = 0;
    for (int ci = 0; ci < c; ++ci)
        for (int i = 0; i < oh; ++i)
            for (int j = 0; j < ow; ++j, ++n) {
                std::int64_t best_idx = -1;
                T best = T(0);
                for (int u = 0; u < size; ++u)
                    for (int v = 0; v < size; ++v) {
                        const std::int64_t idx =
                            (static_cast<std::int64_t>(ci) * h + i * stride + u) * w +
                            j * stride + v;
                        const T val = input.data[static_cast<std::size_t>(idx)];
                        // Strict > keeps the first (lowest flat index) element
                        // on ties, so gradient routing is deterministic.
                        if (best_idx < 0 || val > best) {
                            best = val;
                            best_idx = idx;
                        }
                    }
                rec.output.data[n] = best;
                rec.argmax[n] = best_idx;
            }
    return rec;
}

template <typename T>
TensorT<T> maxpool2d_backward(const PoolRecord<T>& rec, const TensorT<T>& grad_out,
                              const Shape& input_shape) {
    if (grad_out.shape != rec.output.shape)
        throw Error(ErrorCode::shape_mismatch,
                    "maxpool output gradient shape " + shape_str(grad_out.shape) +
                        " does not match pooled output " + shape_str(rec.output.shape));
    TensorT<T> g(input_shape, T(0));
    for (std::size_t n = 0; n < rec.argmax.size(); ++n) {
        const std::int64_t idx = rec.argmax[n];
        if (idx < 0 || idx >= static_cast<std::int64_t>(g.size()))
            throw Error(ErrorCode::internal, "maxpool argmax record out of range");
        // += not =: overlapping windows (stride < size) can select the same
        // input element more than once.
        g.data[static_cast<std::size_t>(idx)] += grad_out.data[n];
    }
    return g;
}

// ---------------------------------------------------------------------------
// ELU

template <typename T>
void check_elu_alpha(T alpha) {
    if (!(alpha >= T(0)))
        throw Error(ErrorCode::invalid_hyperparameter,
                    "elu alpha must be >= 0, got " + std::to_string(alpha));
}

template <typename T>
TensorT<T> elu_forward(const TensorT<T>& x, T alpha) {
    check_elu_alpha(alpha);
    TensorT<T> out = x;
    for (T& v : out.data) v = v >= T(0) ? v : alpha * std::expm1(v);
    return out;
}

template <typename T>
TensorT<T> elu_backward(const TensorT<T>& x, T alpha, const TensorT<T>& grad_out) {
    check_elu_alpha(alpha);
    if (grad_out.shape != x.shape)
        throw Error(ErrorCode::shape_mismatch,
                    "elu gradient shape " + shape_str(grad_out.shape) + " does not match input " +
                        shape_str(x.shape));
    TensorT<T> g = grad_out;
    for (std::size_t i = 0; i < g.size(); ++i) {
        const T xv = x.data[i];
        if (xv < T(0)) g.data[i] *= alpha * std::exp(xv);
    }
    return g;
}

// ---------------------------------------------------------------------------
// fully connected

template <typename T>
struct FcGrads {
    TensorT<T> input;
    TensorT<T> weights;
    TensorT<T> bias;
};

namespace detail {

template <typename T>
void check_fc_args(const TensorT<T>& x, const TensorT<T>& weights, const TensorT<T>& bias) {
    if (x.rank() != 1)
        throw Error(ErrorCode::shape_mismatch,
                    "fc input must be rank 1, got " + shape_str(x.shape));
    if (weights.rank() != 2)
        throw Error(ErrorCode::shape_mismatch,
                    "fc weights must be [units,inputs], got " + shape_str(weights.shape));
    if (weights.shape[1] != x.shape[0])
        throw Error(ErrorCode::shape_mismatch,
                    "fc expects " + std::to_string(weights.shape[1]) + " inputs, got " +
                        std::to_string(x.shape[0]));
    if (bias.rank() != 1 || bias.shape[0] != weights.shape[0])
        throw Error(ErrorCode::shape_mismatch,
                    "fc bias must be [units], got " + shape_str(bias.shape));
}

}  // namespace detail

template <typename T>
TensorT<T> fc_forward(const TensorT<T>& x, const TensorT<T>& weights, const TensorT<T>& bias) {
    detail::check_fc_args(x, weights, bias);
    const int m = weights.shape[0], n = weights.shape[1];
    TensorT<T> y({m}, T(0));
    for (int i = 0; i < m; ++i) {
        const T* row = &weights.data[static_cast<std::size_t>(i) * n];
        T acc = bias.data[i];
        for (int j = 0; j < n; ++j) acc += row[j] * x.data[j];
        y.data[i] = acc;
    }
    return y;
}

template <typename T>
FcGrads<T> fc_backward(const TensorT<T>& x, const TensorT<T>& weights, const TensorT<T>& bias,
                       const TensorT<T>& grad_out) {
    detail::check_fc_args(x, weights, bias);
    if (grad_out.rank() != 1 || grad_out.shape[0] != weights.shape[0])
        throw Error(ErrorCode::shape_mismatch,
                    "fc output gradient shape " + shape_str(grad_out.shape) +
                        " does not match " + std::to_string(weights.shape[0]) + " units");
    const int m = weights.shape[0], n = weights.shape[1];
    FcGrads<T> g;
    g.input = TensorT<T>({n}, T(0));
    g.weights = TensorT<T>(weights.shape, T(0));
    g.bias = grad_out;
    for (int i = 0; i < m; ++i) {
        const T gv = grad_out.data[i];
        const T* wrow = &weights.data[static_cast<std::size_t>(i) * n];
        T* gwrow = &g.weights.data[static_cast<std::size_t>(i) * n];
        for (int j = 0; j < n; ++j) {
            g.input.data[j] += gv * wrow[j];
            gwrow[j] = gv * x.data[j];
        }
    }
    return g;
}

// ---------------------------------------------------------------------------
// softmax and cross entropy

// Sigmoid evaluated branch-wise so that large |x| saturates to exactly 0
// or 1 instead of overflowing: exp(-x) overflows to inf for x <= -746 and
// 1/inf is a clean 0.
template <typename T>
T sigmoid(T x) {
    if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
    const T e = std::exp(x);
    return e / (T(1) + e);
}

// In-place stabilized softmax over n values.
template <typename T>
void softmax_inplace(T* v, int n) {
    T m = v[0];
    for (int i = 1; i < n; ++i) m = std::max(m, v[i]);
    T z = T(0);
    for (int i = 0; i < n; ++i) {
        v[i] = std::exp(v[i] - m);
        z += v[i];
    }
    for (int i = 0; i < n; ++i) v[i] /= z;
}

template <typename T>
struct SoftmaxXentResult {
    T loss{};
    TensorT<T> probs;
    TensorT<T> grad_logits;
};

// Softmax followed by cross entropy against a single label, computed in
// max-subtracted form so large logits cannot overflow: loss =
// log(sum exp(l - m)) - (l[label] - m).
template <typename T>
SoftmaxXentResult<T> softmax_cross_entropy(const TensorT<T>& logits, int label) {
    if (logits.rank() != 1)
        throw Error(ErrorCode::shape_mismatch,
                    "cross entropy expects rank-1 logits, got " + shape_str(logits.shape));
    const int n = logits.shape[0];
    if (label < 0 || label >= n)
        throw Error(ErrorCode::invalid_label,
                    "label " + std::to_string(label) + " out of range for " + std::to_string(n) +
                        " classes");
    T m = logits.data[0];
    for (int i = 1; i < n; ++i) m = std::max(m, logits.data[i]);
    SoftmaxXentResult<T> r;
    r.probs = TensorT<T>({n}, T(0));
    T z = T(0);
    for (int i = 0; i < n; ++i) {
        r.probs.data[i] = std::exp(logits.data[i] - m);
        z += r.probs.data[i];
    }
    for (int i = 0; i < n; ++i) r.probs.data[i] /= z;
    r.loss = std::log(z) - (logits.data[label] - m);
    r.grad_logits = r.probs;
    r.grad_logits.data[label] -= T(1);
    return r;
}

// ---------------------------------------------------------------------------
// detection grid decode primitives

// Decodes the 4 coordinate slots of one grid box. The raw cell offsets are
// squashed through sigmoid and shifted by the cell position, so any raw
// value maps into the frame; width and height are sigmoids directly.
template <typename T>
BoxT<T> decode_cell_box(const T* raw, int row, int col, int rows, int cols) {
    BoxT<T> b;
    b.cx = (T(col) + sigmoid(raw[0])) / T(cols);
    b.cy = (T(row) + sigmoid(raw[1])) / T(rows);
    b.w = sigmoid(raw[2]);
    b.h = sigmoid(raw[3]);
    return b;
}

// ---------------------------------------------------------------------------
// detection loss

template <typename T>
struct TruthBoxT {
    int class_id{};
    BoxT<T> box;
};

template <typename T>
struct DetectionLossResult {
    T loss{};
    TensorT<T> grad;  // same shape as the raw grid
};

// Sum-squared detection loss over a decoded [rows,cols,B*5+C] grid:
//   - the truth's cell is the one containing its center,
//   - within that cell the box whose decoded coordinates best overlap the
//     truth (highest IoU, ties to the lowest box index) is responsible,
//   - responsible boxes pay coordinate error and a confidence target of 1,
//     every other box pays confidence toward 0,
//   - each truth adds squared error between the cell's softmaxed class
//     distribution and its one-hot label.
// All terms carry unit weight. The gradient flows through the sigmoid and
// softmax decode back to the raw grid.
template <typename T>
DetectionLossResult<T> detection_loss(const TensorT<T>& grid,
                                      const std::vector<TruthBoxT<T>>& truths,
                                      int boxes_per_cell, int num_classes) {
    if (grid.rank() != 3)
        throw Error(ErrorCode::shape_mismatch,
                    "detection grid must be rank 3, got " + shape_str(grid.shape));
    if (boxes_per_cell < 1 || num_classes < 1)
        throw Error(ErrorCode::invalid_argument,
                    "detection grid needs at least one box and one class per cell");
    const int rows = grid.shape[0], cols = grid.shape[1], depth = grid.shape[2];
    const int B = boxes_per_cell, C = num_classes;
    if (depth != B * 5 + C)
        throw Error(ErrorCode::shape_mismatch,
                    "grid depth " + std::to_string(depth) + " does not match " +
                        std::to_string(B) + " boxes and " + std::to_string(C) + " classes");
    for (const auto& t : truths) {
        if (t.class_id < 0 || t.class_id >= C)
            throw Error(ErrorCode::invalid_label,
                        "truth class " + std::to_string(t.class_id) + " out of range for " +
                            std::to_string(C) + " classes");
        const T vals[4] = {t.box.cx, t.box.cy, t.box.w, t.box.h};
        for (T v : vals)
            if (!(v >= T(0) && v <= T(1)))
                throw Error(ErrorCode::invalid_annotation,
                            "truth box coordinates must lie in [0,1]");
    }

    DetectionLossResult<T> r;
    r.grad = TensorT<T>(grid.shape, T(0));
    T loss = T(0);

    // Confidence target per box, switched to 1 below for responsible boxes.
    std::vector<char> responsible(static_cast<std::size_t>(rows) * cols * B, 0);

    // Cache each cell's softmax distribution lazily; several truths can
    // share a cell and the class gradient accumulates there.
    std::vector<std::vector<T>> cell_probs(static_cast<std::size_t>(rows) * cols);

    auto cell_base = [&](int i, int j) {
        return (static_cast<std::size_t>(i) * cols + j) * depth;
    };

    for (const auto& t : truths) {
        int i = static_cast<int>(t.box.cy * rows);
        int j = static_cast<int>(t.box.cx * cols);
        i = std::min(i, rows - 1);
        j = std::min(j, cols - 1);
        const std::size_t base = cell_base(i, j);

        int best_b = 0;
        T best_iou = T(-1);
        for (int b = 0; b < B; ++b) {
            const BoxT<T> pred =
                decode_cell_box(&grid.data[base + static_cast<std::size_t>(b) * 5], i, j, rows, cols);
            const T ov = iou(pred, t.box);
            if (ov > best_iou) {
                best_iou = ov;
                best_b = b;
            }
        }
        responsible[(static_cast<std::size_t>(i) * cols + j) * B + best_b] = 1;

        // Coordinate error on the responsible box, with the chain through
        // the sigmoid decode: d cx / d tx = s(1-s)/cols and so on.
        const std::size_t boff = base + static_cast<std::size_t>(best_b) * 5;
        const T sx = sigmoid(grid.data[boff + 0]);
        const T sy = sigmoid(grid.data[boff + 1]);
        const T sw = sigmoid(grid.data[boff + 2]);
        const T sh = sigmoid(grid.data[boff + 3]);
        const T dcx = (T(j) + sx) / T(cols) - t.box.cx;
        const T dcy = (T(i) + sy) / T(rows) - t.box.cy;
        const T dw = sw - t.box.w;
        const T dh = sh - t.box.h;
        loss += dcx * dcx + dcy * dcy + dw * dw + dh * dh;
        r.grad.data[boff + 0] += T(2) * dcx * sx * (T(1) - sx) / T(cols);
        r.grad.data[boff + 1] += T(2) * dcy * sy * (T(1) - sy) / T(rows);
        r.grad.data[boff + 2] += T(2) * dw * sw * (T(1) - sw);
        r.grad.data[boff + 3] += T(2) * dh * sh * (T(1) - sh);

        // Class error against the cell's softmax distribution.
        auto& probs = cell_probs[static_cast<std::size_t>(i) * cols + j];
        if (probs.empty()) {
            probs.assign(C, T(0));
            for (int c = 0; c < C; ++c)
                probs[static_cast<std::size_t>(c)] =
                    grid.data[base + static_cast<std::size_t>(B) * 5 + c];
            softmax_inplace(probs.data(), C);
        }
        T dot = T(0);
        std::vector<T> gp(C);
        for (int c = 0; c < C; ++c) {
            const T y = c == t.class_id ? T(1) : T(0);
            const T d = probs[static_cast<std::size_t>(c)] - y;
            loss += d * d;
            gp[static_cast<std::size_t>(c)] = T(2) * d;
            dot += gp[static_cast<std::size_t>(c)] * probs[static_cast<std::size_t>(c)];
        }
        for (int c = 0; c < C; ++c)
            r.grad.data[base + static_cast<std::size_t>(B) * 5 + c] +=
                probs[static_cast<std::size_t>(c)] * (gp[static_cast<std::size_t>(c)] - dot);
    }

    // Confidence error for every box in the grid.
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j)
            for (int b = 0; b < B; ++b) {
                const std::size_t off = cell_base(i, j) + static_cast<std::size_t>(b) * 5 + 4;
                const T sc = sigmoid(grid.data[off]);
                const T target =
                    responsible[(static_cast<std::size_t>(i) * cols + j) * B + b] ? T(1) : T(0);
                const T d = sc - target;
                loss += d * d;
                r.grad.data[off] += T(2) * d * sc * (T(1) - sc);
            }

    r.loss = loss;
    return r;
}

}  // namespace percept
