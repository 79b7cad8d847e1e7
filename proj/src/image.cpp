#include "image.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "error.hpp"

namespace percept {

namespace {

// Cursor over the PPM header bytes. Whitespace separates tokens and a '#'
// anywhere whitespace may appear starts a comment running to end of line.
struct HeaderCursor {
    const std::uint8_t* p;
    std::size_t len;
    std::size_t pos = 0;

    bool eof() const { return pos >= len; }

    void skip_space_and_comments() {
        while (!eof()) {
            if (std::isspace(p[pos])) {
                ++pos;
            } else if (p[pos] == '#') {
                while (!eof() && p[pos] != '\n') ++pos;
            } else {
                break;
            }
        }
    }

    long read_number(const char* what) {
        skip_space_and_comments();
        if (eof() || !std::isdigit(p[pos]))
            throw Error(ErrorCode::parse,
                        std::string("image header: expected ") + what + ", found " +
                            (eof() ? "end of data" : "a non-numeric byte"));
        long v = 0;
        while (!eof() && std::isdigit(p[pos])) {
            v = v * 10 + (p[pos] - '0');
            if (v > 1000000000L)
                throw Error(ErrorCode::parse, std::string("image header: ") + what + " is absurdly large");
            ++pos;
        }
        return v;
    }
};

}  // namespace

ImageBuffer decode_ppm(const std::uint8_t* bytes, std::size_t len) {
    if (len < 2 || bytes[0] != 'P' || bytes[1] != '6')
        throw Error(ErrorCode::bad_magic, "not a binary PPM image (magic is not P6)");
    HeaderCursor cur{bytes, len, 2};
    const long w = cur.read_number("width");
    const long h = cur.read_number("height");
    const long maxval = cur.read_number("maxval");
    if (w < 1 || h < 1)
        throw Error(ErrorCode::parse, "image dimensions must be positive, got " +
                                          std::to_string(w) + "x" + std::to_string(h));
    if (maxval != 255)
        throw Error(ErrorCode::bad_maxval,
                    "only maxval 255 images are supported, got " + std::to_string(maxval));
    // Exactly one whitespace byte separates the header from the pixels.
    if (cur.eof() || !std::isspace(bytes[cur.pos]))
        throw Error(ErrorCode::parse, "image header: expected whitespace before pixel data");
    ++cur.pos;
    const std::size_t need = static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3;
    if (len - cur.pos < need)
        throw Error(ErrorCode::truncated_payload,
                    "image pixel data is truncated: need " + std::to_string(need) + " bytes, have " +
                        std::to_string(len - cur.pos));
    ImageBuffer img;
    img.width = static_cast<int>(w);
    img.height = static_cast<int>(h);
    img.pixels.assign(bytes + cur.pos, bytes + cur.pos + need);
    return img;
}

ImageBuffer decode_ppm(const std::vector<std::uint8_t>& bytes) {
    return decode_ppm(bytes.data(), bytes.size());
}

std::vector<std::uint8_t> encode_ppm(const ImageBuffer& img) {
    if (img.width < 1 || img.height < 1 ||
        img.pixels.size() != static_cast<std::size_t>(img.width) * img.height * 3)
        throw Error(ErrorCode::invalid_input, "image buffer is inconsistent");
    char header[64];
    const int n = std::snprintf(header, sizeof header, "P6\n%d %d\n255\n", img.width, img.height);
    std::vector<std::uint8_t> out(header, header + n);
    out.insert(out.end(), img.pixels.begin(), img.pixels.end());
    return out;
}

ImageBuffer load_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::io, "cannot open image '" + path + "'");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return decode_ppm(bytes);
}

void save_ppm(const ImageBuffer& img, const std::string& path) {
    const std::vector<std::uint8_t> bytes = encode_ppm(img);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::io, "cannot open '" + path + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::io, "failed writing '" + path + "'");
}

ImageBuffer resize_bilinear(const ImageBuffer& src, int out_w, int out_h) {
    if (src.width < 1 || src.height < 1)
        throw Error(ErrorCode::invalid_input, "cannot resize an empty image");
    if (out_w < 1 || out_h < 1)
        throw Error(ErrorCode::invalid_argument, "resize target must be at least 1x1");
    ImageBuffer out;
    out.width = out_w;
    out.height = out_h;
    out.pixels.resize(static_cast<std::size_t>(out_w) * out_h * 3);
    const double sx = static_cast<double>(src.width) / out_w;
    const double sy = static_cast<double>(src.height) / out_h;
    for (int oy = 0; oy < out_h; ++oy) {
        double fy = (oy + 0.5) * sy - 0.5;
        fy = std::min(std::max(fy, 0.0), static_cast<double>(src.height - 1));
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, src.height - 1);
        const double wy = fy - y0;
        for (int ox = 0; ox < out_w; ++ox) {
            double fx = (ox + 0.5) * sx - 0.5;
            fx = std::min(std::max(fx, 0.0), static_cast<double>(src.width - 1));
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, src.width - 1);
            const double wx = fx - x0;
            for (int c = 0; c < 3; ++c) {
                const double top = (1.0 - wx) * src.channel(x0, y0, c) + wx * src.channel(x1, y0, c);
                const double bot = (1.0 - wx) * src.channel(x0, y1, c) + wx * src.channel(x1, y1, c);
                const double v = (1.0 - wy) * top + wy * bot;
                const double rounded = std::floor(v + 0.5);  // round half up
                out.pixels[(static_cast<std::size_t>(oy) * out_w + ox) * 3 + c] =
                    static_cast<std::uint8_t>(std::min(255.0, std::max(0.0, rounded)));
            }
        }
    }
    return out;
}

Tensor to_input_tensor(const ImageBuffer& img) {
    if (img.width < 1 || img.height < 1 ||
        img.pixels.size() != static_cast<std::size_t>(img.width) * img.height * 3)
        throw Error(ErrorCode::invalid_input, "image buffer is inconsistent");
    Tensor t({3, img.height, img.width}, 0.0f);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x)
                t.at3(c, y, x) = static_cast<float>(img.channel(x, y, c)) / 255.0f;
    return t;
}

}  // namespace percept
