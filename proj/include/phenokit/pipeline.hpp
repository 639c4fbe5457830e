#pragma once

#include <optional>
#include <string>
#include <vector>

#include <opencv2/core.hpp>

#include "phenokit/backends.hpp"
#include "phenokit/mask.hpp"
#include "phenokit/merge.hpp"
#include "phenokit/tiler.hpp"

namespace phenokit::pipeline {

struct PipelineConfig {
    int tile_size = tiler::kDefaultTileSize;
    double overlap_ratio = tiler::kDefaultOverlap;
    merge::MergeConfig merge;
    int workers = 1;
};

struct ImageResult {
    std::string image_id;
    tiler::TileGrid grid;
    std::vector<Detection> detections;  // global, merged
    merge::ClassCounts counts;
};

// mask -> tile -> detect -> merge -> count for one image. Tiles are detected on
// up to cfg.workers threads; the result does not depend on the worker count.
ImageResult run_image(const std::string& image_id, const cv::Mat& image, const mask::BinaryMask* mask,
                      const backends::DetectorBackend& backend, const PipelineConfig& cfg);

// Per-tile detections in grid order.
std::vector<std::vector<Detection>> detect_tiles(const std::string& image_id, const cv::Mat& image,
                                                 const tiler::TileGrid& grid,
                                                 const backends::DetectorBackend& backend, int workers);

}  // namespace phenokit::pipeline
