#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "config.hpp"
#include "layers.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace percept {

// Parameters for one layer. Parameterless layers leave everything empty;
// conv fills `conv`, fc fills the two fc tensors. A variant would also
// work but this keeps the save/load tensor walk trivial.
template <typename T>
struct LayerParamsT {
    ConvParams<T> conv;
    TensorT<T> fc_weights;
    TensorT<T> fc_bias;
};

template <typename T>
struct NetworkT {
    NetworkConfig config;
    std::vector<LayerParamsT<T>> params;  // one entry per config layer
};

using Network = NetworkT<float>;

// Builds a network with deterministic initial parameters: weights drawn
// uniformly from +-sqrt(6/(fan_in+fan_out)) in row-major draw order,
// biases zero. The same seed always yields bit-identical parameters.
template <typename T>
NetworkT<T> build_network(const NetworkConfig& cfg, std::uint64_t seed) {
    const std::vector<Shape> shapes = layer_shapes(cfg);
    NetworkT<T> net;
    net.config = cfg;
    net.params.resize(cfg.layers.size());
    SplitMix64 rng(seed);
    auto fill_uniform = [&rng](TensorT<T>& t, double limit) {
        for (T& v : t.data) v = static_cast<T>(rng.range(-limit, limit));
    };
    for (std::size_t i = 0; i < cfg.layers.size(); ++i) {
        const LayerSpec& s = cfg.layers[i];
        LayerParamsT<T>& p = net.params[i];
        if (s.kind == LayerKind::conv) {
            const int in_c = shapes[i][0];
            const int fan_in = in_c * s.kernel * s.kernel;
            const int fan_out = s.filters * s.kernel * s.kernel;
            p.conv.weights = TensorT<T>({s.filters, in_c, s.kernel, s.kernel}, T(0));
            fill_uniform(p.conv.weights, std::sqrt(6.0 / (fan_in + fan_out)));
            p.conv.bias = TensorT<T>({s.filters}, T(0));
            p.conv.stride = s.stride;
            p.conv.padding = s.padding;
        } else if (s.kind == LayerKind::fc) {
            const int fan_in = shapes[i][0];
            p.fc_weights = TensorT<T>({s.units, fan_in}, T(0));
            fill_uniform(p.fc_weights, std::sqrt(6.0 / (fan_in + s.units)));
            p.fc_bias = TensorT<T>({s.units}, T(0));
        }
    }
    return net;
}

// Everything the backward pass needs from a forward run: the activation
// entering each layer plus the pool winner records.
template <typename T>
struct ForwardTraceT {
    std::vector<TensorT<T>> activations;  // size layers+1; [0] is the input
    std::vector<PoolRecord<T>> pools;     // parallel to layers; unused entries empty
};

template <typename T>
TensorT<T> forward(const NetworkT<T>& net, const TensorT<T>& input,
                   ForwardTraceT<T>* trace = nullptr) {
    if (input.shape != net.config.input_shape)
        throw Error(ErrorCode::shape_mismatch,
                    "network expects input " + shape_str(net.config.input_shape) + ", got " +
                        shape_str(input.shape));
    if (trace) {
        trace->activations.clear();
        trace->pools.clear();
        trace->pools.resize(net.config.layers.size());
        trace->activations.push_back(input);
    }
    TensorT<T> cur = input;
    for (std::size_t i = 0; i < net.config.layers.size(); ++i) {
        const LayerSpec& s = net.config.layers[i];
        const LayerParamsT<T>& p = net.params[i];
        switch (s.kind) {
            case LayerKind::conv:
                cur = conv2d_forward(cur, p.conv);
                break;
            case LayerKind::maxpool: {
                PoolRecord<T> rec = maxpool2d_forward(cur, s.pool_size, s.stride);
                cur = rec.output;
                if (trace) trace->pools[i] = std::move(rec);
                break;
            }
            case LayerKind::elu:
                cur = elu_forward(cur, static_cast<T>(s.alpha));
                break;
            case LayerKind::flatten:
                cur = reshape(cur, {static_cast<int>(shape_elems(cur.shape))});
                break;
            case LayerKind::fc:
                cur = fc_forward(cur, p.fc_weights, p.fc_bias);
                break;
            case LayerKind::softmax_head: {
                TensorT<T> out = cur;
                softmax_inplace(out.data.data(), out.shape[0]);
                cur = std::move(out);
                break;
            }
            case LayerKind::detect_head:
                cur = reshape(cur, {s.grid, s.grid, s.boxes * 5 + s.classes});
                break;
        }
        if (trace) trace->activations.push_back(cur);
    }
    return cur;
}

// Parameter gradients mirror the parameter layout; `input` is the
// gradient with respect to the network input.
template <typename T>
struct NetworkGradsT {
    std::vector<LayerParamsT<T>> layers;
    TensorT<T> input;
};

// Propagates `grad`, the loss gradient at the output of layer `top`
// (0-based), down to the input. Training losses attach either above the
// final reshape head or directly on logits below a softmax_head; the
// softmax itself is folded into the loss, so crossing it here is a usage
// bug.
template <typename T>
NetworkGradsT<T> backward(const NetworkT<T>& net, const ForwardTraceT<T>& trace, TensorT<T> grad,
                          int top) {
    if (top < 0 || top >= static_cast<int>(net.config.layers.size()))
        throw Error(ErrorCode::invalid_argument, "backward start layer out of range");
    if (trace.activations.size() != net.config.layers.size() + 1)
        throw Error(ErrorCode::invalid_argument, "forward trace does not match network");
    NetworkGradsT<T> g;
    g.layers.resize(net.config.layers.size());
    for (int i = top; i >= 0; --i) {
        const LayerSpec& s = net.config.layers[i];
        const LayerParamsT<T>& p = net.params[i];
        const TensorT<T>& in = trace.activations[static_cast<std::size_t>(i)];
        switch (s.kind) {
            case LayerKind::conv: {
                ConvGrads<T> cg = conv2d_backward(in, p.conv, grad);
                g.layers[i].conv.weights = std::move(cg.weights);
                g.layers[i].conv.bias = std::move(cg.bias);
                grad = std::move(cg.input);
                break;
            }
            case LayerKind::maxpool:
                if (trace.pools[i].argmax.empty())
                    throw Error(ErrorCode::invalid_argument, "forward trace is missing pool records");
                grad = maxpool2d_backward(trace.pools[i], grad, in.shape);
                break;
            case LayerKind::elu:
                grad = elu_backward(in, static_cast<T>(s.alpha), grad);
                break;
            case LayerKind::flatten:
            case LayerKind::detect_head:
                grad = reshape(grad, in.shape);
                break;
            case LayerKind::fc: {
                FcGrads<T> fg = fc_backward(in, p.fc_weights, p.fc_bias, grad);
                g.layers[i].fc_weights = std::move(fg.weights);
                g.layers[i].fc_bias = std::move(fg.bias);
                grad = std::move(fg.input);
                break;
            }
            case LayerKind::softmax_head:
                throw Error(ErrorCode::invalid_argument,
                            "backward cannot cross softmax_head; start from the logits below it");
        }
    }
    g.input = std::move(grad);
    return g;
}

// Vanilla SGD: p -= lr * g for every parameter tensor that has gradients.
template <typename T>
void sgd_step(NetworkT<T>& net, const NetworkGradsT<T>& grads, T lr) {
    if (!(lr > T(0)))
        throw Error(ErrorCode::invalid_hyperparameter,
                    "learning rate must be > 0, got " + std::to_string(lr));
    if (grads.layers.size() != net.params.size())
        throw Error(ErrorCode::shape_mismatch, "gradient layer count does not match network");
    auto apply = [lr](TensorT<T>& p, const TensorT<T>& g) {
        if (g.data.empty()) return;
        if (g.shape != p.shape)
            throw Error(ErrorCode::shape_mismatch, "gradient shape " + shape_str(g.shape) +
                                                       " does not match parameter " +
                                                       shape_str(p.shape));
        for (std::size_t i = 0; i < p.size(); ++i) p.data[i] -= lr * g.data[i];
    };
    for (std::size_t i = 0; i < net.params.size(); ++i) {
        apply(net.params[i].conv.weights, grads.layers[i].conv.weights);
        apply(net.params[i].conv.bias, grads.layers[i].conv.bias);
        apply(net.params[i].fc_weights, grads.layers[i].fc_weights);
        apply(net.params[i].fc_bias, grads.layers[i].fc_bias);
    }
}

// The network's parameter tensors in serialization order: for each layer,
// conv weights then conv bias, or fc weights then fc bias.
template <typename T>
std::vector<TensorT<T>*> parameter_tensors(NetworkT<T>& net) {
    std::vector<TensorT<T>*> out;
    for (auto& p : net.params) {
        if (!p.conv.weights.data.empty()) {
            out.push_back(&p.conv.weights);
            out.push_back(&p.conv.bias);
        }
        if (!p.fc_weights.data.empty()) {
            out.push_back(&p.fc_weights);
            out.push_back(&p.fc_bias);
        }
    }
    return out;
}

template <typename T>
std::vector<const TensorT<T>*> parameter_tensors(const NetworkT<T>& net) {
    std::vector<const TensorT<T>*> out;
    for (const auto& p : net.params) {
        if (!p.conv.weights.data.empty()) {
            out.push_back(&p.conv.weights);
            out.push_back(&p.conv.bias);
        }
        if (!p.fc_weights.data.empty()) {
            out.push_back(&p.fc_weights);
            out.push_back(&p.fc_bias);
        }
    }
    return out;
}

}  // namespace percept
