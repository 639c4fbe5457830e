#pragma once

#include <optional>
#include <span>
#include <vector>

#include "phenokit/core.hpp"
#include "phenokit/tiler.hpp"

namespace phenokit::merge {

inline constexpr double kDefaultConfThreshold = 0.6;
inline constexpr double kDefaultNmsIou = 0.5;
// Training-time box threshold; only applied when explicitly requested.
inline constexpr double kPaperBoxThreshold = 0.5;

struct MergeConfig {
    double conf_threshold = kDefaultConfThreshold;
    double nms_iou = kDefaultNmsIou;
    // When set, detections carrying a box_score below it are dropped.
    std::optional<double> box_threshold;

    void validate() const;
};

// Total order used by NMS: confidence descending, then x_min, y_min, x_max,
// y_max ascending, then class id.
bool ranks_before(const Detection& a, const Detection& b) noexcept;

// Class-aware greedy suppression. Output is ordered by ranks_before.
std::vector<Detection> nms(std::vector<Detection> dets, double iou_thresh);

// Threshold, remap to global coordinates and suppress duplicates across tiles.
std::vector<Detection> merge_tiles(std::span<const std::vector<Detection>> per_tile,
                                   const tiler::TileGrid& grid, const MergeConfig& cfg = {});

struct ClassCounts {
    long fecal = 0;
    long no_fecal = 0;

    long total() const noexcept { return fecal + no_fecal; }
    long& operator[](HoleClass c) noexcept { return c == HoleClass::Fecal ? fecal : no_fecal; }
    long operator[](HoleClass c) const noexcept { return c == HoleClass::Fecal ? fecal : no_fecal; }
    ClassCounts& operator+=(const ClassCounts& o) noexcept {
        fecal += o.fecal;
        no_fecal += o.no_fecal;
        return *this;
    }
    bool operator==(const ClassCounts&) const = default;
};

ClassCounts count_by_class(std::span<const Detection> dets);

}  // namespace phenokit::merge
