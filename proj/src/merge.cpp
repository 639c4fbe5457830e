#include "phenokit/merge.hpp"

#include <algorithm>
#include <tuple>

#include "phenokit/error.hpp"

namespace phenokit::merge {

void MergeConfig::validate() const {
    auto in_unit = [](double v) { return v > 0.0 && v <= 1.0; };
    if (!in_unit(conf_threshold)) throw Error(ErrorKind::InvalidParameter, "conf_threshold must lie in (0,1]");
    if (!in_unit(nms_iou)) throw Error(ErrorKind::InvalidParameter, "nms_iou must lie in (0,1]");
    if (box_threshold && !in_unit(*box_threshold)) {
        throw Error(ErrorKind::InvalidParameter, "box_threshold must lie in (0,1]");
    }
}

bool ranks_before(const Detection& a, const Detection& b) noexcept {
    if (a.confidence() != b.confidence()) return a.confidence() > b.confidence();
    const auto& p = a.box();
    const auto& q = b.box();
    return std::tuple(p.x_min(), p.y_min(), p.x_max(), p.y_max(), p.class_id()) <
           std::tuple(q.x_min(), q.y_min(), q.x_max(), q.y_max(), q.class_id());
}

std::vector<Detection> nms(std::vector<Detection> dets, double iou_thresh) {
    if (!(iou_thresh > 0.0 && iou_thresh <= 1.0)) {
        throw Error(ErrorKind::InvalidParameter, "NMS IoU threshold must lie in (0,1]");
    }
    std::stable_sort(dets.begin(), dets.end(), ranks_before);

    std::vector<bool> suppressed(dets.size(), false);
    std::vector<Detection> kept;
    for (std::size_t i = 0; i < dets.size(); ++i) {
        if (suppressed[i]) continue;
        kept.push_back(dets[i]);
        for (std::size_t j = i + 1; j < dets.size(); ++j) {
            if (suppressed[j] || dets[j].class_id() != dets[i].class_id()) continue;
            if (iou(dets[i].box(), dets[j].box()) >= iou_thresh) suppressed[j] = true;
        }
    }
    return kept;
}

std::vector<Detection> merge_tiles(std::span<const std::vector<Detection>> per_tile, const tiler::TileGrid& grid,
                                   const MergeConfig& cfg) {
    cfg.validate();
    if (per_tile.size() != grid.tiles.size()) {
        throw Error(ErrorKind::Shape, "detection lists (" + std::to_string(per_tile.size()) +
                                          ") do not align with tiles (" + std::to_string(grid.tiles.size()) + ")");
    }
    std::vector<Detection> global;
    for (std::size_t i = 0; i < per_tile.size(); ++i) {
        for (const auto& d : per_tile[i]) {
            if (d.confidence() < cfg.conf_threshold) continue;
            if (cfg.box_threshold && d.box_score() && *d.box_score() < *cfg.box_threshold) continue;
            global.push_back(tiler::tile_to_global(d, grid.tiles[i]));
        }
    }
    return nms(std::move(global), cfg.nms_iou);
}

ClassCounts count_by_class(std::span<const Detection> dets) {
    ClassCounts counts;
    for (const auto& d : dets) ++counts[hole_class_from_id(d.class_id())];
    return counts;
}

}  // namespace phenokit::merge
