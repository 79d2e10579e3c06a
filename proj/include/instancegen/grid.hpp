#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace instancegen {

// Dense 2D grids, (row, col) indexed. Grid<double> carries attention maps and
// latent channels, Grid<std::uint8_t> carries binary masks (0/1).
template <typename Scalar>
using Grid = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using GridD = Grid<double>;
using MaskGrid = Grid<std::uint8_t>;

inline MaskGrid make_mask(Eigen::Index rows, Eigen::Index cols) {
    return MaskGrid::Zero(rows, cols);
}

inline std::int64_t mask_area(const MaskGrid& m) {
    return m.template cast<std::int64_t>().sum();
}

/// Pixel coordinate, (row, col).
struct Pixel {
    int row = 0;
    int col = 0;
    friend bool operator==(const Pixel&, const Pixel&) = default;
    friend auto operator<=>(const Pixel&, const Pixel&) = default;
};

// --- resampling -------------------------------------------------------------

/// Nearest-neighbor resample of a binary mask to (rows, cols).
MaskGrid resample_mask_nn(const MaskGrid& src, Eigen::Index rows, Eigen::Index cols);

/// Nearest-neighbor resample of a float grid to (rows, cols).
GridD resample_grid_nn(const GridD& src, Eigen::Index rows, Eigen::Index cols);

/// Bilinear upsample of a float grid to (rows, cols).
GridD resample_grid_bilinear(const GridD& src, Eigen::Index rows, Eigen::Index cols);

/// Map a source-grid pixel to the destination-grid pixel covering the same
/// relative position (cell centers, nearest-neighbor convention).
Pixel map_pixel(Pixel p, Eigen::Index src_rows, Eigen::Index src_cols,
                Eigen::Index dst_rows, Eigen::Index dst_cols);

// --- morphology -------------------------------------------------------------

/// Binary erosion with a 3x3 kernel (8-neighborhood). Border pixels erode.
MaskGrid erode3x3(const MaskGrid& m);

/// Binary dilation with a 3x3 kernel (8-neighborhood).
MaskGrid dilate3x3(const MaskGrid& m);

/// Minimum Chebyshev distance between two non-empty masks.
/// Returns a large value (>= rows+cols) if either mask is empty.
int chebyshev_distance(const MaskGrid& a, const MaskGrid& b);

// --- components and geometry ------------------------------------------------

/// 4-connected components of the nonzero pixels, each as its own mask,
/// ordered by first-scanned pixel (row-major).
std::vector<MaskGrid> connected_components(const MaskGrid& m);

/// Component containing the given pixel, or an empty mask if the pixel is 0.
MaskGrid component_at(const MaskGrid& m, Pixel p);

/// Centroid of mask pixel centers, as fractional (row, col); mask non-empty.
std::pair<double, double> mask_centroid(const MaskGrid& m);

/// Translate the mask's pixel set so its bounding-box center lands on
/// `center`; pixels falling outside the grid are clipped away.
MaskGrid translate_mask_to(const MaskGrid& m, Pixel center);

// --- run-length encoding ----------------------------------------------------

/// Row-major runs of set pixels: each run is {row, col_start, length}.
struct RleRun {
    int row = 0;
    int col = 0;
    int length = 0;
    friend bool operator==(const RleRun&, const RleRun&) = default;
};

std::vector<RleRun> rle_encode(const MaskGrid& m);
MaskGrid rle_decode(const std::vector<RleRun>& runs, Eigen::Index rows, Eigen::Index cols);

}  // namespace instancegen
