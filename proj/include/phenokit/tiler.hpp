#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <opencv2/core.hpp>

#include "phenokit/core.hpp"

namespace phenokit::tiler {

inline constexpr int kDefaultTileSize = 384;
inline constexpr double kDefaultOverlap = 0.2;
inline constexpr double kDefaultMinVisibility = 0.5;

struct TileSpec {
    int row = 0;
    int col = 0;
    int ox = 0;
    int oy = 0;
    int width = 0;
    int height = 0;

    BBox extent() const { return BBox(ox, oy, ox + width, oy + height); }
    bool operator==(const TileSpec&) const = default;
};

struct TileGrid {
    ImageDims image;
    int tile_size = kDefaultTileSize;
    double overlap_ratio = kDefaultOverlap;
    std::vector<TileSpec> tiles;  // row-major
};

// Offsets along one axis: 0, stride, 2*stride, ... with the last tile pulled
// back to end on the image edge.
std::vector<int> axis_offsets(int extent, int tile_size, double overlap_ratio);

TileGrid plan_tiles(ImageDims dims, int tile_size = kDefaultTileSize,
                    double overlap_ratio = kDefaultOverlap);

// Boxes intersected with the tile and moved into tile-local coordinates. Boxes
// keeping less than min_visibility of their area are dropped.
std::vector<BBox> clip_annotations(std::span<const BBox> boxes, const TileSpec& tile,
                                   double min_visibility = kDefaultMinVisibility);

// Keeps tiles whose annotation list is non-empty, preserving order and indices.
TileGrid filter_empty(const TileGrid& grid, std::span<const std::vector<BBox>> per_tile);

Detection tile_to_global(const Detection& d, const TileSpec& tile);

// "<image>#r<row>c<col>"
std::string tile_key(std::string_view image_id, const TileSpec& tile);
// "<stem>_r<row>_c<col>" + extension
std::string tile_file_name(std::string_view stem, const TileSpec& tile, std::string_view extension);

// Shallow ROI view into the source raster.
cv::Mat crop_tile(const cv::Mat& image, const TileSpec& tile);

}  // namespace phenokit::tiler
