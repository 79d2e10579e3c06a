#pragma once

#include "instancegen/grid.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace instancegen {

/// 8-bit RGB raster, row-major interleaved.
struct ImageU8 {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> rgb;  // height * width * 3

    ImageU8() = default;
    ImageU8(int h, int w, std::uint8_t fill = 0)
        : height(h), width(w), rgb(std::size_t(h) * std::size_t(w) * 3, fill) {}

    std::uint8_t& at(int r, int c, int ch) { return rgb[(std::size_t(r) * width + c) * 3 + ch]; }
    std::uint8_t at(int r, int c, int ch) const { return rgb[(std::size_t(r) * width + c) * 3 + ch]; }

    void set(int r, int c, std::uint8_t red, std::uint8_t green, std::uint8_t blue) {
        at(r, c, 0) = red;
        at(r, c, 1) = green;
        at(r, c, 2) = blue;
    }

    bool empty() const { return height == 0 || width == 0; }
    friend bool operator==(const ImageU8&, const ImageU8&) = default;
};

/// Integer luminance in [0, 255] (BT.601-ish weights).
int luminance(const ImageU8& img, int r, int c);

/// Encode as PNG (8-bit RGB, stored-deflate; output is byte-deterministic).
std::vector<std::uint8_t> encode_png(const ImageU8& img);
void write_png(const std::string& path, const ImageU8& img);

/// Grayscale render of a float grid (min/max normalized; constant grid -> black).
ImageU8 grid_to_image(const GridD& grid, int scale = 1);

/// Draw a small filled dot; clips at borders.
void draw_dot(ImageU8& img, int r, int c, int radius,
              std::uint8_t red, std::uint8_t green, std::uint8_t blue);

/// Blend a mask over the image with the given color (alpha in [0,1]).
void overlay_mask(ImageU8& img, const MaskGrid& mask,
                  std::uint8_t red, std::uint8_t green, std::uint8_t blue, double alpha);

/// 5x7 bitmap text (digits, upper-case letters, a few symbols).
void draw_text(ImageU8& img, int r, int c, const std::string& text,
               std::uint8_t red, std::uint8_t green, std::uint8_t blue);

/// Simple labeled bar chart of values in [0, 1].
ImageU8 render_bar_chart(const std::vector<std::string>& labels,
                         const std::vector<double>& values,
                         const std::string& title);

}  // namespace instancegen
