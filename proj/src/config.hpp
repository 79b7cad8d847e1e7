#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace percept {

enum class LayerKind { conv, maxpool, elu, flatten, fc, softmax_head, detect_head };

const char* layer_kind_name(LayerKind k);

struct LayerSpec {
    LayerKind kind{};
    // conv
    int filters = 0;
    int kernel = 0;
    int stride = 1;
    int padding = 0;
    // maxpool (reuses stride)
    int pool_size = 0;
    // elu
    double alpha = 1.0;
    // fc
    int units = 0;
    // detect_head
    int grid = 0;
    int boxes = 0;
    int classes = 0;
};

struct NetworkConfig {
    std::string name;
    Shape input_shape;
    std::vector<std::string> class_labels;
    std::vector<LayerSpec> layers;
};

// Parses a network description from JSON text. Syntax problems raise
// parse errors; structurally valid JSON that asks for an impossible or
// incomplete network raises invalid-config.
NetworkConfig parse_network_config(const std::string& json_text);
NetworkConfig load_network_config(const std::string& path);

// The byte string that gets fingerprinted into weight files: every field
// in a fixed order with no formatting freedom, so equal configs always
// serialize to equal bytes.
std::string canonical_config_json(const NetworkConfig& cfg);
std::array<std::uint8_t, 32> config_fingerprint(const NetworkConfig& cfg);

// Validates the whole stack and returns the activation shape after every
// layer: result[0] is the input shape, result[i+1] the output of layer i.
// Any inconsistency raises invalid-config naming the offending layer.
std::vector<Shape> layer_shapes(const NetworkConfig& cfg);

// True if the final layer is the given head kind.
bool has_head(const NetworkConfig& cfg, LayerKind head);

}  // namespace percept
