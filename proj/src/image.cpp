#include "instancegen/image.hpp"

#include "instancegen/common.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace instancegen {

int luminance(const ImageU8& img, int r, int c) {
    return (299 * img.at(r, c, 0) + 587 * img.at(r, c, 1) + 114 * img.at(r, c, 2)) / 1000;
}

// --- PNG encoding --------------------------------------------------------------
// Minimal encoder: zlib stream with stored (uncompressed) deflate blocks. Output
// bytes depend only on pixel data, which keeps run artifacts reproducible.

namespace {

std::uint32_t crc32_table_entry(std::uint32_t n) {
    for (int k = 0; k < 8; ++k) n = (n & 1) ? 0xedb88320u ^ (n >> 1) : n >> 1;
    return n;
}

std::uint32_t crc32(const std::uint8_t* data, std::size_t len, std::uint32_t crc = 0) {
    static const auto table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t n = 0; n < 256; ++n) t[n] = crc32_table_entry(n);
        return t;
    }();
    crc ^= 0xffffffffu;
    for (std::size_t i = 0; i < len; ++i) crc = table[(crc ^ data[i]) & 0xff] ^ (crc >> 8);
    return crc ^ 0xffffffffu;
}

std::uint32_t adler32(const std::uint8_t* data, std::size_t len) {
    std::uint32_t a = 1, b = 0;
    for (std::size_t i = 0; i < len; ++i) {
        a = (a + data[i]) % 65521u;
        b = (b + a) % 65521u;
    }
    return (b << 16) | a;
}

void push_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(std::uint8_t(v >> 24));
    out.push_back(std::uint8_t(v >> 16));
    out.push_back(std::uint8_t(v >> 8));
    out.push_back(std::uint8_t(v));
}

void push_chunk(std::vector<std::uint8_t>& out, const char type[4],
                const std::vector<std::uint8_t>& payload) {
    push_u32(out, std::uint32_t(payload.size()));
    std::size_t crc_start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), payload.begin(), payload.end());
    push_u32(out, crc32(out.data() + crc_start, out.size() - crc_start));
}

}  // namespace

std::vector<std::uint8_t> encode_png(const ImageU8& img) {
    if (img.empty()) throw Error("cannot encode empty image");

    // filter byte 0 (None) per scanline
    std::vector<std::uint8_t> raw;
    raw.reserve(std::size_t(img.height) * (std::size_t(img.width) * 3 + 1));
    for (int r = 0; r < img.height; ++r) {
        raw.push_back(0);
        const std::uint8_t* row = img.rgb.data() + std::size_t(r) * img.width * 3;
        raw.insert(raw.end(), row, row + std::size_t(img.width) * 3);
    }

    // zlib stream: header, stored deflate blocks (<= 65535 bytes), adler32
    std::vector<std::uint8_t> zlib;
    zlib.push_back(0x78);
    zlib.push_back(0x01);
    std::size_t pos = 0;
    while (pos < raw.size()) {
        std::size_t n = std::min<std::size_t>(65535, raw.size() - pos);
        bool last = pos + n == raw.size();
        zlib.push_back(last ? 1 : 0);
        zlib.push_back(std::uint8_t(n & 0xff));
        zlib.push_back(std::uint8_t(n >> 8));
        zlib.push_back(std::uint8_t(~n & 0xff));
        zlib.push_back(std::uint8_t((~n >> 8) & 0xff));
        zlib.insert(zlib.end(), raw.begin() + pos, raw.begin() + pos + n);
        pos += n;
    }
    push_u32(zlib, adler32(raw.data(), raw.size()));

    std::vector<std::uint8_t> out = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
    std::vector<std::uint8_t> ihdr;
    push_u32(ihdr, std::uint32_t(img.width));
    push_u32(ihdr, std::uint32_t(img.height));
    ihdr.push_back(8);   // bit depth
    ihdr.push_back(2);   // color type: truecolor
    ihdr.push_back(0);   // compression
    ihdr.push_back(0);   // filter
    ihdr.push_back(0);   // interlace
    push_chunk(out, "IHDR", ihdr);
    push_chunk(out, "IDAT", zlib);
    push_chunk(out, "IEND", {});
    return out;
}

void write_png(const std::string& path, const ImageU8& img) {
    auto bytes = encode_png(img);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write file: " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
}

// --- rendering helpers ----------------------------------------------------------

ImageU8 grid_to_image(const GridD& grid, int scale) {
    double lo = grid.minCoeff(), hi = grid.maxCoeff();
    double span = hi - lo;
    ImageU8 img(int(grid.rows()) * scale, int(grid.cols()) * scale);
    for (Eigen::Index r = 0; r < grid.rows(); ++r) {
        for (Eigen::Index c = 0; c < grid.cols(); ++c) {
            auto v = std::uint8_t(span > 0 ? std::lround(255.0 * (grid(r, c) - lo) / span) : 0);
            for (int dr = 0; dr < scale; ++dr)
                for (int dc = 0; dc < scale; ++dc)
                    img.set(int(r) * scale + dr, int(c) * scale + dc, v, v, v);
        }
    }
    return img;
}

void draw_dot(ImageU8& img, int r, int c, int radius,
              std::uint8_t red, std::uint8_t green, std::uint8_t blue) {
    for (int dr = -radius; dr <= radius; ++dr) {
        for (int dc = -radius; dc <= radius; ++dc) {
            if (dr * dr + dc * dc > radius * radius) continue;
            int rr = r + dr, cc = c + dc;
            if (rr >= 0 && cc >= 0 && rr < img.height && cc < img.width)
                img.set(rr, cc, red, green, blue);
        }
    }
}

void overlay_mask(ImageU8& img, const MaskGrid& mask,
                  std::uint8_t red, std::uint8_t green, std::uint8_t blue, double alpha) {
    const std::uint8_t rgb[3] = {red, green, blue};
    for (int r = 0; r < img.height && r < mask.rows(); ++r) {
        for (int c = 0; c < img.width && c < mask.cols(); ++c) {
            if (!mask(r, c)) continue;
            for (int ch = 0; ch < 3; ++ch) {
                double v = (1.0 - alpha) * img.at(r, c, ch) + alpha * rgb[ch];
                img.at(r, c, ch) = std::uint8_t(std::lround(v));
            }
        }
    }
}

// --- 5x7 bitmap font -------------------------------------------------------------

namespace {

// each glyph: 7 rows of 5 bits, msb = leftmost column
struct Glyph {
    char ch;
    std::uint8_t rows[7];
};

const Glyph kFont[] = {
    {'0', {0x0e, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0e}},
    {'1', {0x04, 0x0c, 0x04, 0x04, 0x04, 0x04, 0x0e}},
    {'2', {0x0e, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1f}},
    {'3', {0x1f, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0e}},
    {'4', {0x02, 0x06, 0x0a, 0x12, 0x1f, 0x02, 0x02}},
    {'5', {0x1f, 0x10, 0x1e, 0x01, 0x01, 0x11, 0x0e}},
    {'6', {0x06, 0x08, 0x10, 0x1e, 0x11, 0x11, 0x0e}},
    {'7', {0x1f, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
    {'8', {0x0e, 0x11, 0x11, 0x0e, 0x11, 0x11, 0x0e}},
    {'9', {0x0e, 0x11, 0x11, 0x0f, 0x01, 0x02, 0x0c}},
    {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0c, 0x0c}},
    {'-', {0x00, 0x00, 0x00, 0x1f, 0x00, 0x00, 0x00}},
    {'_', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1f}},
    {':', {0x00, 0x0c, 0x0c, 0x00, 0x0c, 0x0c, 0x00}},
    {'/', {0x01, 0x01, 0x02, 0x04, 0x08, 0x10, 0x10}},
    {' ', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00}},
    {'A', {0x0e, 0x11, 0x11, 0x1f, 0x11, 0x11, 0x11}},
    {'B', {0x1e, 0x11, 0x11, 0x1e, 0x11, 0x11, 0x1e}},
    {'C', {0x0e, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0e}},
    {'D', {0x1c, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1c}},
    {'E', {0x1f, 0x10, 0x10, 0x1e, 0x10, 0x10, 0x1f}},
    {'F', {0x1f, 0x10, 0x10, 0x1e, 0x10, 0x10, 0x10}},
    {'G', {0x0e, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0f}},
    {'H', {0x11, 0x11, 0x11, 0x1f, 0x11, 0x11, 0x11}},
    {'I', {0x0e, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0e}},
    {'J', {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0c}},
    {'K', {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}},
    {'L', {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1f}},
    {'M', {0x11, 0x1b, 0x15, 0x15, 0x11, 0x11, 0x11}},
    {'N', {0x11, 0x19, 0x15, 0x13, 0x11, 0x11, 0x11}},
    {'O', {0x0e, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0e}},
    {'P', {0x1e, 0x11, 0x11, 0x1e, 0x10, 0x10, 0x10}},
    {'Q', {0x0e, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0d}},
    {'R', {0x1e, 0x11, 0x11, 0x1e, 0x14, 0x12, 0x11}},
    {'S', {0x0f, 0x10, 0x10, 0x0e, 0x01, 0x01, 0x1e}},
    {'T', {0x1f, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04}},
    {'U', {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0e}},
    {'V', {0x11, 0x11, 0x11, 0x11, 0x11, 0x0a, 0x04}},
    {'W', {0x11, 0x11, 0x11, 0x15, 0x15, 0x1b, 0x11}},
    {'X', {0x11, 0x11, 0x0a, 0x04, 0x0a, 0x11, 0x11}},
    {'Y', {0x11, 0x11, 0x0a, 0x04, 0x04, 0x04, 0x04}},
    {'Z', {0x1f, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1f}},
};

const Glyph* find_glyph(char ch) {
    if (ch >= 'a' && ch <= 'z') ch = char(ch - 'a' + 'A');
    for (const auto& g : kFont)
        if (g.ch == ch) return &g;
    return nullptr;
}

}  // namespace

void draw_text(ImageU8& img, int r, int c, const std::string& text,
               std::uint8_t red, std::uint8_t green, std::uint8_t blue) {
    int x = c;
    for (char ch : text) {
        const Glyph* g = find_glyph(ch);
        if (g) {
            for (int gr = 0; gr < 7; ++gr) {
                for (int gc = 0; gc < 5; ++gc) {
                    if (!((g->rows[gr] >> (4 - gc)) & 1)) continue;
                    int rr = r + gr, cc = x + gc;
                    if (rr >= 0 && cc >= 0 && rr < img.height && cc < img.width)
                        img.set(rr, cc, red, green, blue);
                }
            }
        }
        x += 6;
    }
}

ImageU8 render_bar_chart(const std::vector<std::string>& labels,
                         const std::vector<double>& values,
                         const std::string& title) {
    const int bar_w = 48, gap = 16, chart_h = 160, top = 28, bottom = 24;
    int n = int(values.size());
    int width = std::max(gap + n * (bar_w + gap), 6 * int(title.size()) + 16);
    ImageU8 img(top + chart_h + bottom, width, 255);

    draw_text(img, 8, 8, title, 30, 30, 30);
    for (int i = 0; i < n; ++i) {
        double v = std::clamp(values[i], 0.0, 1.0);
        int h = int(std::lround(v * (chart_h - 10)));
        int x0 = gap + i * (bar_w + gap);
        int y1 = top + chart_h;
        for (int r = y1 - h; r < y1; ++r)
            for (int c = x0; c < x0 + bar_w; ++c) img.set(r, c, 70, 120, 200);
        // baseline
        for (int c = x0 - 4; c < x0 + bar_w + 4 && c < width; ++c)
            if (c >= 0) img.set(y1, c, 120, 120, 120);
        draw_text(img, y1 + 4, x0, labels.size() > std::size_t(i) ? labels[i] : "", 30, 30, 30);
        draw_text(img, std::max(top, y1 - h - 10), x0, format_fixed(v, 2), 30, 30, 30);
    }
    return img;
}

}  // namespace instancegen
