#pragma once

// Plot-level field dataset with the final per-score plot counts
// {S1: 109, S3: 90, S5: 289, S7: 74, S9: 10}. Scores are interleaved so input
// order carries no class structure; roughly a third of the plots hold two views.

#include <cstdio>
#include <map>
#include <vector>

#include "phenokit/core.hpp"
#include "phenokit/curate.hpp"
#include "phenokit/metrics.hpp"

namespace fixtures {

inline const std::map<phenokit::SeverityScore, int> kFinalPlotCounts{
    {phenokit::SeverityScore::S1, 109}, {phenokit::SeverityScore::S3, 90}, {phenokit::SeverityScore::S5, 289},
    {phenokit::SeverityScore::S7, 74},  {phenokit::SeverityScore::S9, 10},
};

inline phenokit::ImageRecord field_image(const std::string& plot, int view) {
    return phenokit::ImageRecord{plot + "_" + std::to_string(view) + ".jpg", 4000, 3000, plot, "", std::nullopt,
                                 std::nullopt};
}

inline std::vector<phenokit::curate::PlotRecord> field_plots() {
    std::map<phenokit::SeverityScore, int> left = kFinalPlotCounts;
    std::vector<phenokit::curate::PlotRecord> plots;
    int serial = 0;
    bool any = true;
    while (any) {
        any = false;
        for (auto& [score, n] : left) {
            if (n == 0) continue;
            any = true;
            --n;
            char id[16];
            std::snprintf(id, sizeof id, "P%04d", ++serial);
            phenokit::curate::PlotRecord p{id, {field_image(id, 1)}, score, {}};
            if (serial % 3 == 0) p.images.push_back(field_image(id, 2));
            plots.push_back(std::move(p));
        }
    }
    return plots;
}

// 39-plot test-set confusion matrix (rows truth, columns predicted) whose
// per-class precision and recall round to the published per-class rows
// 1: (0.64, 0.82), 3: (0.71, 0.56), 5: (0.71, 0.45), 7: (0.55, 0.75).
inline phenokit::metrics::ConfusionMatrix severity_test_confusion() {
    using phenokit::SeverityScore;
    const std::vector<SeverityScore> classes{SeverityScore::S1, SeverityScore::S3, SeverityScore::S5,
                                             SeverityScore::S7};
    const long counts[4][4] = {{9, 0, 1, 1}, {2, 5, 1, 1}, {2, 1, 5, 3}, {1, 1, 0, 6}};
    phenokit::metrics::ConfusionMatrix cm(classes);
    for (std::size_t t = 0; t < 4; ++t)
        for (std::size_t p = 0; p < 4; ++p) cm.add(classes[t], classes[p], counts[t][p]);
    return cm;
}

}  // namespace fixtures
