#include "phenokit/pipeline.hpp"

#include "phenokit/error.hpp"
#include "phenokit/parallel.hpp"

namespace phenokit::pipeline {

std::vector<std::vector<Detection>> detect_tiles(const std::string& image_id, const cv::Mat& image,
                                                 const tiler::TileGrid& grid,
                                                 const backends::DetectorBackend& backend, int workers) {
    std::vector<std::vector<Detection>> per_tile(grid.tiles.size());
    parallel_for(grid.tiles.size(), workers, [&](std::size_t i) {
        backends::TileContext ctx{image_id, grid.tiles[i], image.empty() ? cv::Mat() : tiler::crop_tile(image, grid.tiles[i])};
        per_tile[i] = backend.detect(ctx);
    });
    return per_tile;
}

ImageResult run_image(const std::string& image_id, const cv::Mat& image, const mask::BinaryMask* mask,
                      const backends::DetectorBackend& backend, const PipelineConfig& cfg) {
    if (image.empty()) throw Error(ErrorKind::Validation, "image " + image_id + " is empty");
    cfg.merge.validate();

    const cv::Mat composited = mask ? mask::apply_mask(image, *mask) : image;

    ImageResult r;
    r.image_id = image_id;
    r.grid = tiler::plan_tiles({composited.cols, composited.rows}, cfg.tile_size, cfg.overlap_ratio);
    const auto per_tile = detect_tiles(image_id, composited, r.grid, backend, cfg.workers);
    r.detections = merge::merge_tiles(per_tile, r.grid, cfg.merge);
    r.counts = merge::count_by_class(r.detections);
    return r;
}

}  // namespace phenokit::pipeline
