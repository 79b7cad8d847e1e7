#include "weights_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "error.hpp"

namespace percept {

namespace {

constexpr char kMagic[4] = {'C', 'N', 'W', 'B'};
constexpr std::uint32_t kVersion = 1;

static_assert(sizeof(float) == 4, "weight files assume 32-bit floats");

void write_u32(std::ostream& out, std::uint32_t v) {
    const std::uint8_t b[4] = {static_cast<std::uint8_t>(v), static_cast<std::uint8_t>(v >> 8),
                               static_cast<std::uint8_t>(v >> 16),
                               static_cast<std::uint8_t>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& in, const char* what) {
    std::uint8_t b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (in.gcount() != 4)
        throw Error(ErrorCode::truncated_payload,
                    std::string("weight file ends inside ") + what);
    return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
           (std::uint32_t(b[3]) << 24);
}

void write_f32_block(std::ostream& out, const float* data, std::size_t count) {
    if constexpr (std::endian::native == std::endian::little) {
        out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * 4));
    } else {
        for (std::size_t i = 0; i < count; ++i) {
            std::uint32_t bits;
            std::memcpy(&bits, &data[i], 4);
            write_u32(out, bits);
        }
    }
}

void read_f32_block(std::istream& in, float* data, std::size_t count) {
    if constexpr (std::endian::native == std::endian::little) {
        in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(count * 4));
        if (static_cast<std::size_t>(in.gcount()) != count * 4)
            throw Error(ErrorCode::truncated_payload, "weight file ends inside a tensor payload");
    } else {
        for (std::size_t i = 0; i < count; ++i) {
            const std::uint32_t bits = read_u32(in, "a tensor payload");
            std::memcpy(&data[i], &bits, 4);
        }
    }
}

// Allocates the parameter tensors for cfg zero-filled, skipping the
// random init that build_network would pay for.
Network make_empty_network(const NetworkConfig& cfg) {
    const std::vector<Shape> shapes = layer_shapes(cfg);
    Network net;
    net.config = cfg;
    net.params.resize(cfg.layers.size());
    for (std::size_t i = 0; i < cfg.layers.size(); ++i) {
        const LayerSpec& s = cfg.layers[i];
        LayerParamsT<float>& p = net.params[i];
        if (s.kind == LayerKind::conv) {
            p.conv.weights = Tensor({s.filters, shapes[i][0], s.kernel, s.kernel}, 0.0f);
            p.conv.bias = Tensor({s.filters}, 0.0f);
            p.conv.stride = s.stride;
            p.conv.padding = s.padding;
        } else if (s.kind == LayerKind::fc) {
            p.fc_weights = Tensor({s.units, shapes[i][0]}, 0.0f);
            p.fc_bias = Tensor({s.units}, 0.0f);
        }
    }
    return net;
}

struct Header {
    std::array<std::uint8_t, 32> fingerprint;
    std::uint32_t tensor_count;
};

Header read_header(std::istream& in) {
    char magic[4];
    in.read(magic, 4);
    if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0)
        throw Error(ErrorCode::bad_magic, "not a weight file (bad magic)");
    const std::uint32_t version = read_u32(in, "the version field");
    if (version != kVersion)
        throw Error(ErrorCode::bad_version,
                    "unsupported weight file version " + std::to_string(version));
    Header h;
    in.read(reinterpret_cast<char*>(h.fingerprint.data()), 32);
    if (in.gcount() != 32)
        throw Error(ErrorCode::truncated_payload, "weight file ends inside the fingerprint");
    h.tensor_count = read_u32(in, "the tensor count");
    return h;
}

// Reads one tensor record's rank and dims.
Shape read_dims(std::istream& in) {
    const std::uint32_t rank = read_u32(in, "a tensor rank");
    if (rank == 0 || rank > 8)
        throw Error(ErrorCode::invalid_input,
                    "weight file tensor rank " + std::to_string(rank) + " is not plausible");
    Shape dims;
    for (std::uint32_t i = 0; i < rank; ++i) {
        const std::uint32_t d = read_u32(in, "a tensor dimension");
        if (d == 0 || d > (1u << 30))
            throw Error(ErrorCode::invalid_input, "weight file tensor dimension is not plausible");
        dims.push_back(static_cast<int>(d));
    }
    return dims;
}

}  // namespace

void save_weights(const Network& net, std::ostream& out) {
    out.write(kMagic, 4);
    write_u32(out, kVersion);
    const auto fp = config_fingerprint(net.config);
    out.write(reinterpret_cast<const char*>(fp.data()), 32);
    auto tensors = parameter_tensors(net);
    write_u32(out, static_cast<std::uint32_t>(tensors.size()));
    for (const Tensor* t : tensors) {
        write_u32(out, static_cast<std::uint32_t>(t->shape.size()));
        for (int d : t->shape) write_u32(out, static_cast<std::uint32_t>(d));
        write_f32_block(out, t->data.data(), t->size());
    }
    if (!out) throw Error(ErrorCode::io, "failed writing weight data");
}

void save_weights_file(const Network& net, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::io, "cannot open '" + path + "' for writing");
    save_weights(net, out);
    out.close();
    if (!out) throw Error(ErrorCode::io, "failed writing '" + path + "'");
}

Network load_weights(const NetworkConfig& cfg, std::istream& in) {
    const Header h = read_header(in);
    if (h.fingerprint != config_fingerprint(cfg))
        throw Error(ErrorCode::invalid_config,
                    "weight file fingerprint does not match this network config");
    Network net = make_empty_network(cfg);
    auto tensors = parameter_tensors(net);
    if (h.tensor_count != tensors.size())
        throw Error(ErrorCode::shape_mismatch,
                    "weight file holds " + std::to_string(h.tensor_count) +
                        " tensors, network has " + std::to_string(tensors.size()));
    for (Tensor* t : tensors) {
        const Shape dims = read_dims(in);
        if (dims != t->shape)
            throw Error(ErrorCode::shape_mismatch,
                        "weight file tensor shape " + shape_str(dims) +
                            " does not match parameter " + shape_str(t->shape));
        read_f32_block(in, t->data.data(), t->size());
    }
    // A well-formed file ends exactly after the last payload.
    char extra;
    in.read(&extra, 1);
    if (in.gcount() != 0)
        throw Error(ErrorCode::invalid_input, "weight file has trailing bytes after the last tensor");
    return net;
}

Network load_weights_file(const NetworkConfig& cfg, const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::io, "cannot open weight file '" + path + "'");
    return load_weights(cfg, in);
}

int load_weights_prefix(Network& net, std::istream& in) {
    const Header h = read_header(in);
    auto tensors = parameter_tensors(net);
    int assigned = 0;
    for (std::uint32_t rec = 0; rec < h.tensor_count; ++rec) {
        if (assigned == static_cast<int>(tensors.size())) break;
        const Shape dims = read_dims(in);
        if (dims != tensors[static_cast<std::size_t>(assigned)]->shape) break;
        Tensor* t = tensors[static_cast<std::size_t>(assigned)];
        read_f32_block(in, t->data.data(), t->size());
        ++assigned;
    }
    return assigned;
}

int load_weights_prefix_file(Network& net, const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::io, "cannot open weight file '" + path + "'");
    return load_weights_prefix(net, in);
}

}  // namespace percept
