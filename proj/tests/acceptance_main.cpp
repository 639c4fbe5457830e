// Acceptance suite: one line per criterion, nonzero exit if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "phenokit/annotate.hpp"
#include "phenokit/backends.hpp"
#include "phenokit/curate.hpp"
#include "phenokit/formats.hpp"
#include "phenokit/merge.hpp"
#include "phenokit/metrics.hpp"
#include "phenokit/pipeline.hpp"
#include "phenokit/random.hpp"
#include "phenokit/tiler.hpp"
#include "synthetic.hpp"

using namespace phenokit;

namespace {

struct Outcome {
    bool ok = true;
    std::string detail;
};

struct Criterion {
    int id;
    std::string name;
    double limit_s;
    std::function<Outcome()> check;
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

// ---- 1 ----------------------------------------------------------------------

Outcome f1_arithmetic() {
    const double tol = 0.005;
    const auto report = metrics::class_report(fixtures::severity_test_confusion());
    const double published[4] = {0.72, 0.62, 0.56, 0.63};
    Outcome o;
    std::ostringstream d;
    for (std::size_t i = 0; i < 4; ++i) {
        const double f1 = report.per_class[i].f1;
        o.ok = o.ok && std::abs(f1 - published[i]) <= tol + 1e-9;
        d << score_value(report.per_class[i].label) << ":" << fmt("%.4f", f1) << " ";
    }
    o.detail = d.str() + "(published 0.72 0.62 0.56 0.63, tol 0.005)";
    return o;
}

// ---- 2 ----------------------------------------------------------------------

Outcome map_consistency() {
    const double tol = 0.0005;
    const double a = metrics::map50(std::vector<double>{0.728, 0.826});
    const double b = metrics::map50(std::vector<double>{0.69, 0.68});
    return {std::abs(a - 0.777) <= tol && std::abs(b - 0.685) <= tol,
            "YOLO12 " + fmt("%.4f", a) + " vs 0.777, YOLO11 " + fmt("%.4f", b) + " vs 0.685"};
}

// ---- 3 ----------------------------------------------------------------------

Outcome curation() {
    const std::uint64_t seed = 2024;
    auto run = [&] {
        auto plots = curate::drop_class(fixtures::field_plots(), SeverityScore::S9);
        plots = curate::undersample(plots, SeverityScore::S5, 110, seed);
        return std::pair(plots, curate::stratified_split(plots, {}, seed));
    };
    const auto [plots, split] = run();
    const auto [plots2, split2] = run();
    const auto h = curate::class_histogram(plots);
    const std::map<SeverityScore, std::size_t> expected{
        {SeverityScore::S1, 109}, {SeverityScore::S3, 90}, {SeverityScore::S5, 110}, {SeverityScore::S7, 74}};
    bool same = plots.size() == plots2.size() && split.train == split2.train && split.val == split2.val &&
                split.test == split2.test;
    for (std::size_t i = 0; same && i < plots.size(); ++i) same = plots[i].plot_id == plots2[i].plot_id;
    const bool ok = h == expected && split.train.size() == 305 && split.val.size() == 39 && split.test.size() == 39 &&
                    same;
    std::ostringstream d;
    d << "classes {" << h.at(SeverityScore::S1) << "," << h.at(SeverityScore::S3) << "," << h.at(SeverityScore::S5)
      << "," << h.at(SeverityScore::S7) << "}, split " << split.train.size() << "/" << split.val.size() << "/"
      << split.test.size() << (same ? ", deterministic" : ", NOT deterministic");
    return {ok, d.str()};
}

// ---- 4 ----------------------------------------------------------------------

// Exact coverage check: sweep over the elementary x-intervals between tile
// edges; in each, the y-intervals of the tiles spanning it must cover [0, h).
bool tiles_cover(const tiler::TileGrid& g) {
    std::set<int> xs{0, g.image.width};
    for (const auto& t : g.tiles) {
        xs.insert(std::clamp(t.ox, 0, g.image.width));
        xs.insert(std::clamp(t.ox + t.width, 0, g.image.width));
    }
    for (auto it = xs.begin(); std::next(it) != xs.end(); ++it) {
        const int x0 = *it, x1 = *std::next(it);
        std::vector<std::pair<int, int>> ys;
        for (const auto& t : g.tiles)
            if (t.ox <= x0 && t.ox + t.width >= x1) ys.emplace_back(t.oy, t.oy + t.height);
        std::sort(ys.begin(), ys.end());
        int reach = 0;
        for (const auto& [a, b] : ys) {
            if (a > reach) break;
            reach = std::max(reach, b);
        }
        if (reach < g.image.height) return false;
    }
    return true;
}

Outcome tiling_coverage() {
    Rng rng(4);
    const double overlaps[3] = {0.0, 0.2, 0.5};
    int uncovered = 0, cut = 0, boxes = 0;
    for (int i = 0; i < 500; ++i) {
        const ImageDims dims{100 + static_cast<int>(rng.below(3901)), 100 + static_cast<int>(rng.below(3901))};
        const double overlap = overlaps[rng.below(3)];
        const auto g = tiler::plan_tiles(dims, 384, overlap);
        if (!tiles_cover(g)) ++uncovered;
        if (overlap != 0.2) continue;
        for (int k = 0; k < 50; ++k, ++boxes) {
            const double x = rng.uniform(0, dims.width - 36), y = rng.uniform(0, dims.height - 36);
            const bool inside = std::any_of(g.tiles.begin(), g.tiles.end(), [&](const tiler::TileSpec& t) {
                return x >= t.ox && y >= t.oy && x + 36 <= t.ox + t.width && y + 36 <= t.oy + t.height;
            });
            if (!inside) ++cut;
        }
    }
    return {uncovered == 0 && cut == 0, "500 grids, " + std::to_string(uncovered) + " with uncovered pixels; " +
                                            std::to_string(boxes) + " boxes of 36 px, " + std::to_string(cut) +
                                            " not inside any tile"};
}

// ---- 5 ----------------------------------------------------------------------

Outcome nms_oracle() {
    Rng rng(5);
    const double confs[] = {0.95, 0.9, 0.9, 0.8, 0.7, 0.7, 0.6};
    int mismatches = 0, ambiguous = 0;
    for (int i = 0; i < 1000; ++i) {
        std::vector<Detection> dets;
        const auto n = 1 + rng.below(8);
        for (std::size_t k = 0; k < n; ++k) {
            // Small integer grid so identical boxes and exact ties occur.
            const double x = static_cast<double>(rng.below(12)) * 2, y = static_cast<double>(rng.below(12)) * 2;
            const double w = 4 + static_cast<double>(rng.below(14)), h = 4 + static_cast<double>(rng.below(14));
            dets.emplace_back(BBox(x, y, x + w, y + h, static_cast<int>(rng.below(2))), confs[rng.below(7)]);
        }
        const double thresh = i % 3 == 0 ? 0.3 : 0.5;
        const auto ref = oracle::exhaustive_nms(dets, thresh);
        if (ref.satisfying_subsets != 1) ++ambiguous;
        if (merge::nms(dets, thresh) != ref.kept) ++mismatches;
    }
    return {mismatches == 0 && ambiguous == 0,
            "1000 instances, " + std::to_string(mismatches) + " differ from the exhaustive reference"};
}

// ---- 6 ----------------------------------------------------------------------

Outcome ap_oracle() {
    Rng rng(6);
    double worst = 0;
    for (int i = 0; i < 500; ++i) {
        std::vector<BBox> gts;
        std::vector<Detection> preds;
        for (std::size_t k = 0, n = rng.below(5); k < n; ++k) {
            const double x = rng.uniform(0, 40), y = rng.uniform(0, 40);
            gts.emplace_back(x, y, x + 12, y + 12);
        }
        for (std::size_t k = 0, n = rng.below(7); k < n; ++k) {
            const double x = rng.uniform(0, 40), y = rng.uniform(0, 40);
            preds.emplace_back(BBox(x, y, x + 12, y + 12), rng.uniform01());
        }
        const auto flags = metrics::match_detections(preds, gts).ordered_flags();
        const double ap = metrics::average_precision(flags, gts.size()).ap;
        worst = std::max(worst, std::abs(ap - oracle::brute_force_ap(flags, gts.size())));
    }
    const double fixture = metrics::average_precision(std::vector<bool>{true, false, true}, 2).ap;
    return {worst <= 1e-9 && std::abs(fixture - 0.8333) <= 1e-4,
            "max |AP - brute force| " + fmt("%.1e", worst) + " over 500 instances; [TP,FP,TP] n_gt 2 -> " +
                fmt("%.6f", fixture)};
}

// ---- 7 ----------------------------------------------------------------------

struct Harness {
    std::vector<backends::TileContext> tiles;
    std::map<std::string, std::vector<BBox>> truth;
};

// 100 tiles x 10 separated 30 px boxes = 1000 planted boxes.
Harness planted() {
    Harness h;
    for (int t = 0; t < 100; ++t) {
        h.tiles.push_back({"plant" + std::to_string(t / 10), {t % 10, 0, 0, 0, 384, 384}, {}});
        auto& boxes = h.truth[h.tiles.back().key()];
        for (int k = 0; k < 10; ++k) boxes.emplace_back(20 + 35 * k, 20 + 30 * k, 50 + 35 * k, 50 + 30 * k, k % 2);
    }
    return h;
}

metrics::DetectionReport evaluate(const Harness& h, const backends::DetectorBackend& det) {
    std::vector<metrics::ImageEvaluation> evals;
    for (const auto& t : h.tiles) evals.push_back({t.key(), det.detect(t), h.truth.at(t.key())});
    const std::vector<int> classes{0, 1};
    return metrics::evaluate_detections(evals, classes);
}

// Pooled precision and recall over both classes.
std::pair<double, double> pooled(const metrics::DetectionReport& r) {
    std::size_t tp = 0, pred = 0, gt = 0;
    for (const auto& c : r.per_class) tp += c.tp, pred += c.n_pred, gt += c.n_gt;
    return {pred ? static_cast<double>(tp) / pred : 0.0, static_cast<double>(tp) / gt};
}

Outcome calibration() {
    const auto h = planted();
    double recall_sum = 0, min_precision = 1;
    const int seeds = 10;
    for (int s = 1; s <= seeds; ++s) {
        const backends::PerturbedDetector det(h.truth, {0.3, 0.0, 0.0, static_cast<std::uint64_t>(s)});
        const auto [p, r] = pooled(evaluate(h, det));
        recall_sum += r;
        min_precision = std::min(min_precision, p);
    }
    const double recall = recall_sum / seeds;

    const double rate = 1.0;
    const backends::PerturbedDetector fp(h.truth, {0.0, 0.0, rate, 7});
    const auto [fp_precision, fp_recall] = pooled(evaluate(h, fp));
    const double expected = 1000.0 / (1000.0 + rate * h.tiles.size());

    const bool ok = recall >= 0.67 && recall <= 0.73 && min_precision == 1.0 && fp_recall == 1.0 &&
                    std::abs(fp_precision - expected) <= 0.03;
    return {ok, "drop 0.3: recall " + fmt("%.4f", recall) + " (mean of 10 seeds), precision " +
                    fmt("%.4f", min_precision) + "; fp rate 1/tile: recall " + fmt("%.4f", fp_recall) +
                    ", precision " + fmt("%.4f", fp_precision) + " vs " + fmt("%.4f", expected)};
}

// ---- 8 ----------------------------------------------------------------------

Outcome end_to_end(double& single_thread_s) {
    const auto scene = synthetic::make_default_scene();
    const backends::BlobDetector det(backends::BlobConfig{});
    pipeline::PipelineConfig cfg;
    cfg.tile_size = 384;
    cfg.overlap_ratio = 0.2;
    cfg.merge = {0.6, 0.5, std::nullopt};

    const auto t0 = std::chrono::steady_clock::now();
    const auto one = pipeline::run_image("synthetic", scene.image, &scene.mask, det, cfg);
    single_thread_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    cfg.workers = 8;
    const auto eight = pipeline::run_image("synthetic", scene.image, &scene.mask, det, cfg);

    const auto match = metrics::match_detections(one.detections, scene.blobs, 0.5);
    const auto matched = std::count(match.gt_matched.begin(), match.gt_matched.end(), true);
    std::size_t outside = 0;
    for (const auto& d : one.detections) {
        bool in = true;
        for (int y = static_cast<int>(d.box().y_min()); y < d.box().y_max(); ++y)
            for (int x = static_cast<int>(d.box().x_min()); x < d.box().x_max(); ++x) in = in && scene.mask.at(x, y);
        outside += in ? 0 : 1;
    }
    const bool identical = one.detections == eight.detections;
    const bool ok = one.counts.total() == 12 && matched == 12 && outside == 0 && identical;
    return {ok, std::to_string(one.counts.total()) + " detections, " + std::to_string(matched) +
                    "/12 planted blobs matched at IoU >= 0.5, " + std::to_string(outside) +
                    " outside the mask, 8 workers " + (identical ? "identical" : "DIFFERENT") + ", single thread " +
                    fmt("%.2f s", single_thread_s)};
}

// ---- 9 ----------------------------------------------------------------------

Outcome round_trips() {
    Rng rng(9);
    const ImageDims dims{4000, 3000};
    std::vector<BBox> boxes;
    std::vector<formats::MergedDetection> dets;
    for (int i = 0; i < 1000; ++i) {
        const double x = rng.uniform(0, 3950), y = rng.uniform(0, 2950);
        const BBox b(x, y, x + rng.uniform(1, 50), y + rng.uniform(1, 50), static_cast<int>(rng.below(2)));
        boxes.push_back(b);
        dets.push_back({"img" + std::to_string(i % 13), Detection(b, rng.uniform01())});
    }

    // Label files: normalized coordinates, six decimals.
    std::istringstream in(annotate::labels_to_string(boxes, dims));
    const auto back = annotate::read_labels(in, dims);
    double drift = 0;
    bool classes_ok = back.size() == boxes.size();
    for (std::size_t i = 0; classes_ok && i < boxes.size(); ++i) {
        classes_ok = back[i].class_id() == boxes[i].class_id();
        drift = std::max({drift, std::abs(back[i].x_min() - boxes[i].x_min()) / dims.width,
                          std::abs(back[i].y_min() - boxes[i].y_min()) / dims.height,
                          std::abs(back[i].x_max() - boxes[i].x_max()) / dims.width,
                          std::abs(back[i].y_max() - boxes[i].y_max()) / dims.height});
    }
    const bool label_text_stable = annotate::labels_to_string(back, dims) == annotate::labels_to_string(boxes, dims);

    // Detection manifest JSON.
    const auto merged_back = formats::merged_from_json(formats::json::parse(formats::merged_to_json(dets).dump()));
    bool merged_ok = merged_back.size() == dets.size();
    for (std::size_t i = 0; merged_ok && i < dets.size(); ++i)
        merged_ok = merged_back[i].image == dets[i].image && merged_back[i].detection == dets[i].detection;

    // Tile manifest JSON.
    std::vector<formats::TileManifestEntry> tiles;
    for (const auto& t : tiler::plan_tiles(dims).tiles)
        tiles.push_back({"root", t, tiler::tile_file_name("root", t, ".png"), tiler::tile_file_name("root", t, ".txt")});
    const bool tiles_ok =
        formats::tile_manifest_from_json(formats::json::parse(formats::tile_manifest_to_json(tiles).dump())) == tiles;

    // Image manifest CSV.
    std::vector<curate::ManifestEntry> entries;
    for (const auto& p : fixtures::field_plots())
        for (const auto& img : p.images) entries.push_back({img, p.severity, std::nullopt, {}});
    const auto csv = formats::image_manifest_csv(entries);
    const bool manifest_ok = formats::image_manifest_csv(formats::parse_image_manifest(csv)) == csv;

    const bool ok = drift < 1e-6 && classes_ok && label_text_stable && merged_ok && tiles_ok && manifest_ok;
    return {ok, "labels: max normalized drift " + fmt("%.1e", drift) + (label_text_stable ? ", text stable" : "") +
                    "; detections JSON " + (merged_ok ? "exact" : "DIFFERS") + "; tile manifest " +
                    (tiles_ok ? "exact" : "DIFFERS") + "; image manifest " + (manifest_ok ? "exact" : "DIFFERS")};
}

}  // namespace

int main() {
    double e2e_single = 0;
    const std::vector<Criterion> criteria{
        {1, "class report F1 from published precision/recall", 1, f1_arithmetic},
        {2, "mAP@0.5 as mean of per-class AP", 1, map_consistency},
        {3, "curation fixture and 80/10/10 split", 1, curation},
        {4, "tiling coverage property", 10, tiling_coverage},
        {5, "NMS equals exhaustive reference", 10, nms_oracle},
        {6, "AP equals brute-force envelope", 5, ap_oracle},
        {7, "perturbation harness calibration", 30, calibration},
        {8, "end-to-end synthetic pipeline", 30, [&] { return end_to_end(e2e_single); }},
        {9, "format round trips", 5, round_trips},
    };

    int failed = 0;
    for (const auto& c : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.check();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        // The end-to-end limit applies to the single-threaded run.
        const double timed = c.id == 8 ? e2e_single : elapsed;
        const bool in_time = timed < c.limit_s;
        const bool pass = o.ok && in_time;
        failed += pass ? 0 : 1;
        std::printf("[%s] %d %s: %s; %.3f s (limit %.0f s)%s\n", pass ? "PASS" : "FAIL", c.id, c.name.c_str(),
                    o.detail.c_str(), timed, c.limit_s, in_time ? "" : " TOO SLOW");
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
