#include "config.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "error.hpp"
#include "sha256.hpp"

namespace percept {

using nlohmann::json;
using nlohmann::ordered_json;

const char* layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::conv: return "conv";
        case LayerKind::maxpool: return "maxpool";
        case LayerKind::elu: return "elu";
        case LayerKind::flatten: return "flatten";
        case LayerKind::fc: return "fc";
        case LayerKind::softmax_head: return "softmax_head";
        case LayerKind::detect_head: return "detect_head";
    }
    return "unknown";
}

namespace {

[[noreturn]] void bad(const std::string& msg) {
    throw Error(ErrorCode::invalid_config, msg);
}

int require_int(const json& obj, const char* key, const std::string& where) {
    if (!obj.contains(key) || !obj[key].is_number_integer())
        bad(where + " needs integer field '" + key + "'");
    return obj[key].get<int>();
}

int optional_int(const json& obj, const char* key, int fallback, const std::string& where) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_number_integer()) bad(where + " field '" + key + "' must be an integer");
    return obj[key].get<int>();
}

LayerSpec parse_layer(const json& obj, std::size_t index) {
    const std::string where = "layer " + std::to_string(index);
    if (!obj.is_object()) bad(where + " must be an object");
    if (!obj.contains("kind") || !obj["kind"].is_string())
        bad(where + " needs a string field 'kind'");
    const std::string kind = obj["kind"].get<std::string>();
    LayerSpec s;
    if (kind == "conv") {
        s.kind = LayerKind::conv;
        s.filters = require_int(obj, "filters", where);
        s.kernel = require_int(obj, "kernel", where);
        s.stride = optional_int(obj, "stride", 1, where);
        s.padding = optional_int(obj, "padding", 0, where);
    } else if (kind == "maxpool") {
        s.kind = LayerKind::maxpool;
        s.pool_size = require_int(obj, "size", where);
        s.stride = optional_int(obj, "stride", s.pool_size, where);
    } else if (kind == "elu") {
        s.kind = LayerKind::elu;
        if (obj.contains("alpha")) {
            if (!obj["alpha"].is_number()) bad(where + " field 'alpha' must be a number");
            s.alpha = obj["alpha"].get<double>();
        }
    } else if (kind == "flatten") {
        s.kind = LayerKind::flatten;
    } else if (kind == "fc") {
        s.kind = LayerKind::fc;
        s.units = require_int(obj, "units", where);
    } else if (kind == "softmax_head") {
        s.kind = LayerKind::softmax_head;
    } else if (kind == "detect_head") {
        s.kind = LayerKind::detect_head;
        s.grid = require_int(obj, "grid", where);
        s.boxes = require_int(obj, "boxes", where);
        s.classes = require_int(obj, "classes", where);
    } else {
        bad(where + " has unknown kind '" + kind + "'");
    }
    return s;
}

}  // namespace

NetworkConfig parse_network_config(const std::string& json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::parse, std::string("network config is not valid JSON: ") + e.what());
    }
    if (!root.is_object()) bad("network config must be a JSON object");
    NetworkConfig cfg;
    if (!root.contains("name") || !root["name"].is_string())
        bad("network config needs a string field 'name'");
    cfg.name = root["name"].get<std::string>();
    if (!root.contains("input_shape") || !root["input_shape"].is_array())
        bad("network config needs an array field 'input_shape'");
    for (const auto& v : root["input_shape"]) {
        if (!v.is_number_integer()) bad("input_shape entries must be integers");
        cfg.input_shape.push_back(v.get<int>());
    }
    if (root.contains("class_labels")) {
        if (!root["class_labels"].is_array()) bad("class_labels must be an array of strings");
        for (const auto& v : root["class_labels"]) {
            if (!v.is_string()) bad("class_labels entries must be strings");
            cfg.class_labels.push_back(v.get<std::string>());
        }
    }
    if (!root.contains("layers") || !root["layers"].is_array())
        bad("network config needs an array field 'layers'");
    std::size_t i = 0;
    for (const auto& l : root["layers"]) cfg.layers.push_back(parse_layer(l, i++));
    // Surface structural problems at load time, not first use.
    layer_shapes(cfg);
    return cfg;
}

NetworkConfig load_network_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::io, "cannot open network config '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_network_config(ss.str());
}

std::string canonical_config_json(const NetworkConfig& cfg) {
    ordered_json root;
    root["name"] = cfg.name;
    root["input_shape"] = cfg.input_shape;
    root["class_labels"] = cfg.class_labels;
    ordered_json layers = ordered_json::array();
    for (const auto& s : cfg.layers) {
        ordered_json l;
        l["kind"] = layer_kind_name(s.kind);
        switch (s.kind) {
            case LayerKind::conv:
                l["filters"] = s.filters;
                l["kernel"] = s.kernel;
                l["stride"] = s.stride;
                l["padding"] = s.padding;
                break;
            case LayerKind::maxpool:
                l["size"] = s.pool_size;
                l["stride"] = s.stride;
                break;
            case LayerKind::elu:
                l["alpha"] = s.alpha;
                break;
            case LayerKind::flatten:
            case LayerKind::softmax_head:
                break;
            case LayerKind::fc:
                l["units"] = s.units;
                break;
            case LayerKind::detect_head:
                l["grid"] = s.grid;
                l["boxes"] = s.boxes;
                l["classes"] = s.classes;
                break;
        }
        layers.push_back(std::move(l));
    }
    root["layers"] = std::move(layers);
    return root.dump();
}

std::array<std::uint8_t, 32> config_fingerprint(const NetworkConfig& cfg) {
    return sha256(canonical_config_json(cfg));
}

namespace {

[[noreturn]] void bad_layer(std::size_t index, LayerKind kind, const std::string& msg) {
    bad("layer " + std::to_string(index) + " (" + layer_kind_name(kind) + "): " + msg);
}

}  // namespace

std::vector<Shape> layer_shapes(const NetworkConfig& cfg) {
    if (cfg.name.empty()) bad("network name must not be empty");
    if (cfg.input_shape.size() != 3)
        bad("input_shape must be [channels,height,width], got " + shape_str(cfg.input_shape));
    for (int d : cfg.input_shape)
        if (d < 1) bad("input_shape dimensions must be positive, got " + shape_str(cfg.input_shape));

    std::vector<Shape> shapes;
    shapes.push_back(cfg.input_shape);
    bool saw_conv = false;
    Shape cur = cfg.input_shape;

    for (std::size_t i = 0; i < cfg.layers.size(); ++i) {
        const LayerSpec& s = cfg.layers[i];
        const bool last = i + 1 == cfg.layers.size();
        switch (s.kind) {
            case LayerKind::conv: {
                saw_conv = true;
                if (cur.size() != 3)
                    bad_layer(i, s.kind, "needs a [channels,height,width] input, got " + shape_str(cur));
                if (s.filters < 1) bad_layer(i, s.kind, "filters must be >= 1");
                if (s.kernel < 1) bad_layer(i, s.kind, "kernel must be >= 1");
                if (s.stride < 1) bad_layer(i, s.kind, "stride must be >= 1");
                if (s.padding < 0) bad_layer(i, s.kind, "padding must be >= 0");
                const int ph = cur[1] + 2 * s.padding, pw = cur[2] + 2 * s.padding;
                if (s.kernel > ph || s.kernel > pw)
                    bad_layer(i, s.kind,
                              "kernel " + std::to_string(s.kernel) + " exceeds padded input " +
                                  std::to_string(ph) + "x" + std::to_string(pw));
                cur = {s.filters, (ph - s.kernel) / s.stride + 1, (pw - s.kernel) / s.stride + 1};
                break;
            }
            case LayerKind::maxpool: {
                if (cur.size() != 3)
                    bad_layer(i, s.kind, "needs a [channels,height,width] input, got " + shape_str(cur));
                if (s.pool_size < 1) bad_layer(i, s.kind, "size must be >= 1");
                if (s.stride < 1) bad_layer(i, s.kind, "stride must be >= 1");
                if (s.pool_size > cur[1] || s.pool_size > cur[2])
                    bad_layer(i, s.kind,
                              "window " + std::to_string(s.pool_size) + " exceeds input " +
                                  std::to_string(cur[1]) + "x" + std::to_string(cur[2]));
                cur = {cur[0], (cur[1] - s.pool_size) / s.stride + 1,
                       (cur[2] - s.pool_size) / s.stride + 1};
                break;
            }
            case LayerKind::elu:
                if (s.alpha < 0) bad_layer(i, s.kind, "alpha must be >= 0");
                break;
            case LayerKind::flatten: {
                const std::int64_t n = shape_elems(cur);
                if (n > (std::int64_t(1) << 30)) bad_layer(i, s.kind, "flattened size is unreasonably large");
                cur = {static_cast<int>(n)};
                break;
            }
            case LayerKind::fc:
                if (cur.size() != 1)
                    bad_layer(i, s.kind, "needs a flat input, got " + shape_str(cur) +
                                             " (insert a flatten layer)");
                if (s.units < 1) bad_layer(i, s.kind, "units must be >= 1");
                cur = {s.units};
                break;
            case LayerKind::softmax_head:
                if (!last) bad_layer(i, s.kind, "must be the final layer");
                if (cur.size() != 1)
                    bad_layer(i, s.kind, "needs a flat input, got " + shape_str(cur));
                if (cfg.class_labels.empty())
                    bad_layer(i, s.kind, "network has no class_labels");
                if (cur[0] != static_cast<int>(cfg.class_labels.size()))
                    bad_layer(i, s.kind,
                              "input length " + std::to_string(cur[0]) + " does not match " +
                                  std::to_string(cfg.class_labels.size()) + " class labels");
                break;
            case LayerKind::detect_head: {
                if (!last) bad_layer(i, s.kind, "must be the final layer");
                if (cur.size() != 1)
                    bad_layer(i, s.kind, "needs a flat input, got " + shape_str(cur));
                if (s.grid < 1) bad_layer(i, s.kind, "grid must be >= 1");
                if (s.boxes < 1) bad_layer(i, s.kind, "boxes must be >= 1");
                if (s.classes < 1) bad_layer(i, s.kind, "classes must be >= 1");
                if (cfg.class_labels.empty())
                    bad_layer(i, s.kind, "network has no class_labels");
                if (s.classes != static_cast<int>(cfg.class_labels.size()))
                    bad_layer(i, s.kind,
                              "classes " + std::to_string(s.classes) + " does not match " +
                                  std::to_string(cfg.class_labels.size()) + " class labels");
                const std::int64_t want =
                    std::int64_t(s.grid) * s.grid * (std::int64_t(s.boxes) * 5 + s.classes);
                if (cur[0] != want)
                    bad_layer(i, s.kind,
                              "input length " + std::to_string(cur[0]) + " does not match grid " +
                                  std::to_string(s.grid) + "x" + std::to_string(s.grid) + " with " +
                                  std::to_string(s.boxes) + " boxes and " +
                                  std::to_string(s.classes) + " classes (" + std::to_string(want) +
                                  " values)");
                cur = {s.grid, s.grid, s.boxes * 5 + s.classes};
                break;
            }
        }
        shapes.push_back(cur);
    }
    if (!saw_conv) bad("network must contain at least one conv layer");
    return shapes;
}

bool has_head(const NetworkConfig& cfg, LayerKind head) {
    return !cfg.layers.empty() && cfg.layers.back().kind == head;
}

}  // namespace percept
