#include "output.hpp"

#include <array>
#include <cstdio>
#include <map>

#include "error.hpp"

namespace percept {

namespace {

std::string json_escape(const std::string& s) {
    std::string out;
    out.reserve(s.size() + 2);
    for (unsigned char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\b': out += "\\b"; break;
            case '\f': out += "\\f"; break;
            case '\n': out += "\\n"; break;
            case '\r': out += "\\r"; break;
            case '\t': out += "\\t"; break;
            default:
                if (c < 0x20) {
                    char buf[8];
                    std::snprintf(buf, sizeof buf, "\\u%04x", c);
                    out += buf;
                } else {
                    out += static_cast<char>(c);
                }
        }
    }
    return out;
}

std::string fixed(double v, int digits) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

}  // namespace

std::string to_json(const FrameResult& result) {
    std::string out = "{\"frame_id\":\"" + json_escape(result.frame_id) + "\",\"model\":\"" +
                      json_escape(result.model_name) + "\",\"width\":" +
                      std::to_string(result.frame_width) + ",\"height\":" +
                      std::to_string(result.frame_height) + ",\"detections\":[";
    for (std::size_t i = 0; i < result.detections.size(); ++i) {
        const LabeledDetection& d = result.detections[i];
        if (i) out += ",";
        out += "{\"label\":\"" + json_escape(d.label) + "\",\"confidence\":" +
               fixed(d.confidence, 4) + ",\"box\":{\"cx\":" + fixed(d.box.cx, 6) +
               ",\"cy\":" + fixed(d.box.cy, 6) + ",\"w\":" + fixed(d.box.w, 6) +
               ",\"h\":" + fixed(d.box.h, 6) + "}}";
    }
    out += "]}\n";
    return out;
}

namespace {

// Braille dot masks, dot n meaning bit n-1 of the cell (U+2800 plus the
// mask). Letter patterns follow the standard a-z assignment; digits reuse
// a-j behind the number indicator.
constexpr std::array<std::uint8_t, 26> kLetters = {
    0x01, 0x03, 0x09, 0x19, 0x11, 0x0b, 0x1b, 0x13, 0x0a, 0x1a,  // a-j
    0x05, 0x07, 0x0d, 0x1d, 0x15, 0x0f, 0x1f, 0x17, 0x0e, 0x1e,  // k-t
    0x25, 0x27, 0x3a, 0x2d, 0x3d, 0x35,                          // u-z
};
constexpr std::uint8_t kCapitalIndicator = 0x20;  // dot 6
constexpr std::uint8_t kNumberIndicator = 0x3c;   // dots 3456

void append_cell(std::string& out, std::uint8_t mask) {
    const unsigned cp = 0x2800u + mask;
    out += static_cast<char>(0xe0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3f));
    out += static_cast<char>(0x80 | (cp & 0x3f));
}

std::uint8_t punctuation_mask(char c) {
    switch (c) {
        case ',': return 0x02;  // dot 2
        case ';': return 0x06;  // dots 23
        case ':': return 0x12;  // dots 25
        case '.': return 0x32;  // dots 256
        case '!': return 0x16;  // dots 235
        case '?': return 0x26;  // dots 236
        case '\'': return 0x04;  // dot 3
        case '-': return 0x24;  // dots 36
        default: return 0;
    }
}

}  // namespace

std::string to_braille(const std::string& text) {
    std::string out;
    out.reserve(text.size() * 3);
    bool number_mode = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (c >= '0' && c <= '9') {
            if (!number_mode) {
                append_cell(out, kNumberIndicator);
                number_mode = true;
            }
            // Digits map to the first ten letters: 1..9 then 0 as j.
            append_cell(out, kLetters[c == '0' ? 9 : c - '1']);
            continue;
        }
        number_mode = false;
        if (c >= 'a' && c <= 'z') {
            append_cell(out, kLetters[c - 'a']);
        } else if (c >= 'A' && c <= 'Z') {
            append_cell(out, kCapitalIndicator);
            append_cell(out, kLetters[c - 'A']);
        } else if (c == ' ') {
            append_cell(out, 0x00);
        } else if (punctuation_mask(c) != 0) {
            append_cell(out, punctuation_mask(c));
        } else {
            char buf[96];
            std::snprintf(buf, sizeof buf,
                          "cannot transliterate byte 0x%02x at offset %zu to braille",
                          static_cast<unsigned char>(c), i);
            throw Error(ErrorCode::unmappable_character, buf);
        }
    }
    return out;
}

namespace {

std::string plural_of(const std::string& noun) {
    static const std::map<std::string, std::string> irregular = {
        {"person", "people"}, {"child", "children"}, {"man", "men"},
        {"woman", "women"},   {"foot", "feet"},      {"tooth", "teeth"},
        {"mouse", "mice"},    {"goose", "geese"},    {"sheep", "sheep"},
    };
    const auto it = irregular.find(noun);
    if (it != irregular.end()) return it->second;
    return noun + "s";
}

const char* article_for(const std::string& noun) {
    if (noun.empty()) return "a";
    switch (noun[0]) {
        case 'a': case 'e': case 'i': case 'o': case 'u':
        case 'A': case 'E': case 'I': case 'O': case 'U':
            return "an";
        default:
            return "a";
    }
}

const char* zone_phrase(double cx) {
    if (cx < 1.0 / 3.0) return "on the left";
    if (cx > 2.0 / 3.0) return "on the right";
    return "ahead";
}

}  // namespace

std::string describe_scene(const FrameResult& result) {
    if (result.detections.empty()) return "nothing recognized";

    struct Group {
        std::string label;
        int count = 0;
        const char* zone = nullptr;
    };
    // Detections arrive confidence-descending, so the first sighting of a
    // label fixes both the group's rank in the sentence and its zone.
    std::vector<Group> groups;
    for (const LabeledDetection& d : result.detections) {
        Group* g = nullptr;
        for (Group& have : groups)
            if (have.label == d.label) {
                g = &have;
                break;
            }
        if (!g) {
            groups.push_back({d.label, 0, zone_phrase(d.box.cx)});
            g = &groups.back();
        }
        g->count += 1;
    }

    std::string out;
    for (std::size_t i = 0; i < groups.size(); ++i) {
        const Group& g = groups[i];
        if (i) out += ", ";
        if (g.count == 1) {
            out += article_for(g.label);
            out += " " + g.label;
        } else {
            out += std::to_string(g.count) + " " + plural_of(g.label);
        }
        out += " ";
        out += g.zone;
    }
    return out;
}

}  // namespace percept
