#include "phenokit/tiler.hpp"

#include <algorithm>
#include <cmath>

#include "phenokit/error.hpp"

namespace phenokit::tiler {

namespace {

constexpr double kEdgeSlack = 1e-9;

void check_plan_args(int tile_size, double overlap_ratio) {
    if (tile_size <= 0) throw Error(ErrorKind::InvalidParameter, "tile size must be positive");
    if (!(overlap_ratio >= 0.0 && overlap_ratio < 1.0)) {
        throw Error(ErrorKind::InvalidParameter, "overlap ratio must lie in [0,1)");
    }
}

}  // namespace

std::vector<int> axis_offsets(int extent, int tile_size, double overlap_ratio) {
    check_plan_args(tile_size, overlap_ratio);
    if (extent <= 0) throw Error(ErrorKind::InvalidParameter, "image extent must be positive");
    if (extent <= tile_size) return {0};

    const int stride = static_cast<int>(std::floor(tile_size * (1.0 - overlap_ratio)));
    if (stride < 1) throw Error(ErrorKind::InvalidParameter, "tile size and overlap give a zero stride");

    std::vector<int> offsets;
    for (int o = 0;; o += stride) {
        offsets.push_back(std::min(o, extent - tile_size));
        if (o + tile_size >= extent) break;
    }
    return offsets;
}

TileGrid plan_tiles(ImageDims dims, int tile_size, double overlap_ratio) {
    check_plan_args(tile_size, overlap_ratio);
    if (dims.width < 1 || dims.height < 1) throw Error(ErrorKind::InvalidParameter, "image must be at least 1x1");

    const auto xs = axis_offsets(dims.width, tile_size, overlap_ratio);
    const auto ys = axis_offsets(dims.height, tile_size, overlap_ratio);
    const int tw = std::min(tile_size, dims.width);
    const int th = std::min(tile_size, dims.height);

    TileGrid grid{dims, tile_size, overlap_ratio, {}};
    grid.tiles.reserve(xs.size() * ys.size());
    for (std::size_t r = 0; r < ys.size(); ++r) {
        for (std::size_t c = 0; c < xs.size(); ++c) {
            grid.tiles.push_back({static_cast<int>(r), static_cast<int>(c), xs[c], ys[r], tw, th});
        }
    }
    return grid;
}

std::vector<BBox> clip_annotations(std::span<const BBox> boxes, const TileSpec& tile, double min_visibility) {
    if (!(min_visibility > 0.0 && min_visibility <= 1.0)) {
        throw Error(ErrorKind::InvalidParameter, "min_visibility must lie in (0,1]");
    }
    const double tx0 = tile.ox;
    const double ty0 = tile.oy;
    const double tx1 = tile.ox + tile.width;
    const double ty1 = tile.oy + tile.height;

    std::vector<BBox> out;
    for (const auto& b : boxes) {
        const double x0 = std::max(b.x_min(), tx0);
        const double y0 = std::max(b.y_min(), ty0);
        const double x1 = std::min(b.x_max(), tx1);
        const double y1 = std::min(b.y_max(), ty1);
        if (!(x0 < x1 && y0 < y1)) continue;
        const double visible = (x1 - x0) * (y1 - y0) / b.area();
        if (visible < min_visibility) continue;
        out.emplace_back(x0 - tx0, y0 - ty0, x1 - tx0, y1 - ty0, b.class_id());
    }
    return out;
}

TileGrid filter_empty(const TileGrid& grid, std::span<const std::vector<BBox>> per_tile) {
    if (per_tile.size() != grid.tiles.size()) {
        throw Error(ErrorKind::Shape, "annotation lists (" + std::to_string(per_tile.size()) +
                                          ") do not align with tiles (" + std::to_string(grid.tiles.size()) + ")");
    }
    TileGrid out{grid.image, grid.tile_size, grid.overlap_ratio, {}};
    for (std::size_t i = 0; i < grid.tiles.size(); ++i) {
        if (!per_tile[i].empty()) out.tiles.push_back(grid.tiles[i]);
    }
    return out;
}

Detection tile_to_global(const Detection& d, const TileSpec& tile) {
    const auto& b = d.box();
    if (b.x_max() > tile.width + kEdgeSlack || b.y_max() > tile.height + kEdgeSlack) {
        throw Error(ErrorKind::OutOfBounds, "detection exceeds tile r" + std::to_string(tile.row) + "c" +
                                                std::to_string(tile.col));
    }
    return d.with_box(b.translated(tile.ox, tile.oy));
}

std::string tile_key(std::string_view image_id, const TileSpec& tile) {
    return std::string(image_id) + "#r" + std::to_string(tile.row) + "c" + std::to_string(tile.col);
}

std::string tile_file_name(std::string_view stem, const TileSpec& tile, std::string_view extension) {
    return std::string(stem) + "_r" + std::to_string(tile.row) + "_c" + std::to_string(tile.col) +
           std::string(extension);
}

cv::Mat crop_tile(const cv::Mat& image, const TileSpec& tile) {
    if (tile.ox < 0 || tile.oy < 0 || tile.ox + tile.width > image.cols || tile.oy + tile.height > image.rows) {
        throw Error(ErrorKind::OutOfBounds, "tile exceeds the image");
    }
    return image(cv::Rect(tile.ox, tile.oy, tile.width, tile.height));
}

}  // namespace phenokit::tiler
