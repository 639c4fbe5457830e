#include "phenokit/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <unistd.h>

#include <CLI11.hpp>
#include <opencv2/imgcodecs.hpp>

#include "phenokit/annotate.hpp"
#include "phenokit/backends.hpp"
#include "phenokit/curate.hpp"
#include "phenokit/error.hpp"
#include "phenokit/formats.hpp"
#include "phenokit/mask.hpp"
#include "phenokit/merge.hpp"
#include "phenokit/metrics.hpp"
#include "phenokit/parallel.hpp"
#include "phenokit/pipeline.hpp"
#include "phenokit/tiler.hpp"

namespace phenokit::cli {

namespace fs = std::filesystem;
using formats::json;

namespace {

// Raised when a declared input does not exist; maps to exit 66.
struct MissingInput : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require_exists(const fs::path& p, std::string_view what) {
    if (p.empty() || !fs::exists(p)) throw MissingInput(std::string(what) + " not found: " + p.string());
}

void require_dir(const fs::path& p, std::string_view what) {
    require_exists(p, what);
    if (!fs::is_directory(p)) throw MissingInput(std::string(what) + " is not a directory: " + p.string());
}

int default_workers() {
    if (const char* env = std::getenv("PHENOKIT_WORKERS")) {
        try {
            const int n = std::stoi(env);
            if (n > 0) return n;
        } catch (const std::exception&) {
        }
    }
    return 1;
}

bool is_image_file(const fs::path& p) {
    static const std::set<std::string> exts{".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"};
    auto ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return exts.contains(ext);
}

// A single image file, or every image directly inside a directory, sorted by name.
std::vector<fs::path> list_images(const fs::path& in) {
    require_exists(in, "input");
    if (fs::is_regular_file(in)) return {in};
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(in)) {
        if (e.is_regular_file() && is_image_file(e.path())) out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

fs::path resolve(const fs::path& base_dir, const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() ? path : base_dir / path;
}

cv::Mat read_image(const fs::path& p) {
    require_exists(p, "image");
    cv::Mat img = cv::imread(p.string(), cv::IMREAD_COLOR);
    if (img.empty()) throw Error(ErrorKind::Validation, "cannot decode image " + p.string());
    return img;
}

std::string encode_png(const cv::Mat& img) {
    std::vector<uchar> buf;
    if (!cv::imencode(".png", img, buf)) throw Error(ErrorKind::Io, "PNG encoding failed");
    return std::string(buf.begin(), buf.end());
}

// Collects every file of a multi-file output in a staging directory and moves
// them into place only on commit; an uncommitted stage is removed.
class OutputStage {
public:
    explicit OutputStage(fs::path final_dir) : final_dir_(std::move(final_dir)) {
        auto name = final_dir_.filename().string();
        if (name.empty()) name = final_dir_.parent_path().filename().string();
        staging_ = final_dir_.parent_path() / ("." + name + ".staging-" + std::to_string(::getpid()));
        fs::remove_all(staging_);
        fs::create_directories(staging_);
    }
    OutputStage(const OutputStage&) = delete;
    OutputStage& operator=(const OutputStage&) = delete;
    ~OutputStage() {
        std::error_code ec;
        fs::remove_all(staging_, ec);
    }

    void write(const std::string& relative, std::string_view contents) {
        formats::write_file_atomic(staging_ / relative, contents);
        files_.push_back(relative);
    }

    void commit() {
        fs::create_directories(final_dir_);
        for (const auto& rel : files_) {
            const auto dst = final_dir_ / rel;
            if (dst.has_parent_path()) fs::create_directories(dst.parent_path());
            fs::rename(staging_ / rel, dst);
        }
        files_.clear();
    }

private:
    fs::path final_dir_;
    fs::path staging_;
    std::vector<std::string> files_;
};

void write_json(const fs::path& path, const json& j) { formats::write_file_atomic(path, j.dump(2) + "\n"); }

std::vector<double> parse_ratios(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    for (std::string item; std::getline(ss, item, ',');) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw Error(ErrorKind::InvalidParameter, "cannot parse ratio '" + item + "'");
        }
    }
    if (out.size() != 3) throw Error(ErrorKind::InvalidParameter, "--ratios needs three comma-separated values");
    return out;
}

// ---------------------------------------------------------------------------

struct Options {
    int workers = default_workers();
    std::uint64_t seed = 0;

    // shared paths
    std::string in, out, masks, labels, manifest, points, tiles, detections, merged, predictions, truth, plots,
        split, roots, json_out, partition = "test";

    int tile_size = tiler::kDefaultTileSize;
    double overlap = tiler::kDefaultOverlap;
    double min_visibility = tiler::kDefaultMinVisibility;
    bool keep_empty = false;
    double pad = annotate::kDefaultPad;
    double conf = merge::kDefaultConfThreshold;
    double nms = merge::kDefaultNmsIou;
    std::optional<double> box_threshold;
    double iou = 0.5;

    std::string backend = "blob";
    backends::BlobConfig blob;
    backends::PerturbConfig perturb;

    std::vector<int> drop;
    std::vector<std::string> undersample;
    std::string ratios = "0.8,0.1,0.1";
};

merge::MergeConfig merge_config(const Options& o) {
    merge::MergeConfig cfg{o.conf, o.nms, o.box_threshold};
    cfg.validate();
    return cfg;
}

// ---- convert ----------------------------------------------------------------

int cmd_convert(const Options& o, std::ostream& out, std::ostream& err) {
    require_exists(o.points, "points file");
    const auto table = formats::parse_csv(formats::read_text_file(o.points));
    const int c_path = table.column("image_path");
    const int c_w = table.column("width");
    const int c_h = table.column("height");
    const int c_x = table.column("x");
    const int c_y = table.column("y");
    const int c_cls = table.column("class");
    if (std::min({c_path, c_w, c_h, c_x, c_y, c_cls}) < 0) {
        throw Error(ErrorKind::Validation, "points file needs image_path,width,height,x,y,class columns");
    }

    struct Group {
        std::string stem;
        ImageDims dims;
        std::vector<BBox> boxes;
    };
    std::vector<Group> groups;
    std::map<std::string, std::size_t> index;
    std::size_t clamped = 0;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const auto at = [&](int c) { return row[static_cast<std::size_t>(c)]; };
        const auto where = "points row " + std::to_string(r + 2) + ": ";
        ImageDims dims;
        annotate::PointAnnotation p;
        try {
            dims = {std::stoi(at(c_w)), std::stoi(at(c_h))};
            p.x = std::stod(at(c_x));
            p.y = std::stod(at(c_y));
        } catch (const std::exception&) {
            throw Error(ErrorKind::Parse, where + "bad number");
        }
        p.cls = parse_hole_class(at(c_cls));
        const auto path = at(c_path);
        auto [it, inserted] = index.try_emplace(path, groups.size());
        if (inserted) groups.push_back({image_id_from_path(path), dims, {}});
        auto& g = groups[it->second];
        if (!(g.dims == dims)) throw Error(ErrorKind::Validation, where + "inconsistent dimensions for " + path);
        try {
            const auto conv = annotate::point_to_box(p, o.pad, dims);
            clamped += conv.clamped ? 1 : 0;
            g.boxes.push_back(conv.box);
        } catch (const Error& e) {
            throw Error(e.kind(), where + e.what());
        }
    }

    OutputStage stage(o.out);
    for (const auto& g : groups) stage.write(g.stem + ".txt", annotate::labels_to_string(g.boxes, g.dims));
    stage.commit();
    if (clamped > 0) err << "warning: " << clamped << " boxes clamped at image borders\n";
    out << "converted " << table.rows.size() << " points for " << groups.size() << " images\n";
    return kExitOk;
}

// ---- mask -----------------------------------------------------------------

int cmd_mask(const Options& o, std::ostream& out, std::ostream&) {
    const auto images = list_images(o.in);
    require_dir(o.masks, "mask directory");
    std::vector<fs::path> masks;
    for (const auto& img : images) {
        masks.push_back(fs::path(o.masks) / (img.stem().string() + ".png"));
        require_exists(masks.back(), "mask");
    }

    std::vector<std::string> encoded(images.size());
    parallel_for(images.size(), o.workers, [&](std::size_t i) {
        encoded[i] = encode_png(mask::apply_mask(read_image(images[i]), mask::load_mask(masks[i])));
    });

    OutputStage stage(o.out);
    for (std::size_t i = 0; i < images.size(); ++i) stage.write(images[i].stem().string() + ".png", encoded[i]);
    stage.commit();
    out << "masked " << images.size() << " images\n";
    return kExitOk;
}

// ---- tile -----------------------------------------------------------------

int cmd_tile(const Options& o, std::ostream& out, std::ostream&) {
    const auto images = list_images(o.in);
    if (!o.labels.empty()) require_dir(o.labels, "label directory");
    // Parameter validation before any raster work.
    tiler::plan_tiles({1, 1}, o.tile_size, o.overlap);
    if (!(o.min_visibility > 0.0 && o.min_visibility <= 1.0)) {
        throw Error(ErrorKind::InvalidParameter, "--min-visibility must lie in (0,1]");
    }

    struct TileOut {
        formats::TileManifestEntry entry;
        std::string png;
        std::optional<std::string> labels;
    };
    std::vector<std::vector<TileOut>> per_image(images.size());

    parallel_for(images.size(), o.workers, [&](std::size_t i) {
        const cv::Mat img = read_image(images[i]);
        const std::string stem = images[i].stem().string();
        const ImageDims dims{img.cols, img.rows};
        auto grid = tiler::plan_tiles(dims, o.tile_size, o.overlap);

        std::vector<std::vector<BBox>> clipped;
        if (!o.labels.empty()) {
            const auto label_file = fs::path(o.labels) / (stem + ".txt");
            const auto boxes = fs::exists(label_file) ? annotate::read_label_file(label_file, dims) : std::vector<BBox>{};
            for (const auto& t : grid.tiles) clipped.push_back(tiler::clip_annotations(boxes, t, o.min_visibility));
            if (!o.keep_empty) {
                const auto kept = tiler::filter_empty(grid, clipped);
                std::vector<std::vector<BBox>> kept_boxes;
                for (std::size_t t = 0; t < grid.tiles.size(); ++t) {
                    if (!clipped[t].empty()) kept_boxes.push_back(std::move(clipped[t]));
                }
                grid = kept;
                clipped = std::move(kept_boxes);
            }
        }

        for (std::size_t t = 0; t < grid.tiles.size(); ++t) {
            const auto& spec = grid.tiles[t];
            TileOut to;
            to.entry.source_image = stem;
            to.entry.tile = spec;
            to.entry.tile_path = tiler::tile_file_name(stem, spec, ".png");
            to.png = encode_png(tiler::crop_tile(img, spec));
            if (!o.labels.empty()) {
                to.entry.label_path = tiler::tile_file_name(stem, spec, ".txt");
                to.labels = annotate::labels_to_string(clipped[t], {spec.width, spec.height});
            }
            per_image[i].push_back(std::move(to));
        }
    });

    OutputStage stage(o.out);
    std::vector<formats::TileManifestEntry> manifest;
    for (const auto& tiles : per_image) {
        for (const auto& t : tiles) {
            stage.write(t.entry.tile_path, t.png);
            if (t.labels) stage.write(*t.entry.label_path, *t.labels);
            manifest.push_back(t.entry);
        }
    }
    stage.write("manifest.json", formats::tile_manifest_to_json(manifest).dump(2) + "\n");
    stage.commit();
    out << "wrote " << manifest.size() << " tiles from " << images.size() << " images\n";
    return kExitOk;
}

// ---- detect ---------------------------------------------------------------

std::unique_ptr<backends::DetectorBackend> make_detector(const Options& o,
                                                         const std::vector<formats::TileManifestEntry>& tiles,
                                                         const fs::path& tile_dir) {
    if (o.backend == "blob") return backends::blob_detector(o.blob);
    if (o.backend == "replay") {
        require_exists(o.predictions, "prediction manifest");
        return backends::replay_detector(formats::read_json_file(o.predictions));
    }
    if (o.backend == "perturb") {
        std::map<std::string, std::vector<BBox>> truth;
        for (const auto& t : tiles) {
            if (!t.label_path) continue;
            const auto p = resolve(tile_dir, *t.label_path);
            require_exists(p, "tile label file");
            truth[tiler::tile_key(t.source_image, t.tile)] =
                annotate::read_label_file(p, {t.tile.width, t.tile.height});
        }
        auto cfg = o.perturb;
        cfg.rng_seed = o.seed;
        return backends::perturbed_detector(std::move(truth), cfg);
    }
    throw Error(ErrorKind::InvalidParameter, "unknown backend '" + o.backend + "'");
}

int cmd_detect(const Options& o, std::ostream& out, std::ostream&) {
    require_exists(o.tiles, "tile manifest");
    const fs::path tile_dir = fs::path(o.tiles).parent_path();
    const auto tiles = formats::tile_manifest_from_json(formats::read_json_file(o.tiles));
    const auto backend = make_detector(o, tiles, tile_dir);
    const bool needs_pixels = o.backend == "blob";
    if (needs_pixels) {
        for (const auto& t : tiles) require_exists(resolve(tile_dir, t.tile_path), "tile raster");
    }

    std::vector<std::vector<Detection>> results(tiles.size());
    parallel_for(tiles.size(), o.workers, [&](std::size_t i) {
        backends::TileContext ctx{tiles[i].source_image, tiles[i].tile, {}};
        if (needs_pixels) ctx.pixels = read_image(resolve(tile_dir, tiles[i].tile_path));
        results[i] = backend->detect(ctx);
    });

    backends::PredictionMap predictions;
    std::size_t total = 0;
    for (std::size_t i = 0; i < tiles.size(); ++i) {
        total += results[i].size();
        predictions[tiler::tile_key(tiles[i].source_image, tiles[i].tile)] = std::move(results[i]);
    }
    write_json(o.out, formats::predictions_to_json(predictions));
    out << "detected " << total << " objects in " << tiles.size() << " tiles\n";
    return kExitOk;
}

// ---- merge ----------------------------------------------------------------

std::vector<formats::MergedDetection> merge_manifest(const std::vector<formats::TileManifestEntry>& tiles,
                                                     const backends::PredictionMap& predictions,
                                                     const merge::MergeConfig& cfg) {
    std::vector<std::string> order;
    std::map<std::string, std::vector<const formats::TileManifestEntry*>> by_image;
    for (const auto& t : tiles) {
        auto& list = by_image[t.source_image];
        if (list.empty()) order.push_back(t.source_image);
        list.push_back(&t);
    }

    std::vector<formats::MergedDetection> merged;
    for (const auto& image : order) {
        tiler::TileGrid grid;
        std::vector<std::vector<Detection>> per_tile;
        for (const auto* t : by_image[image]) {
            grid.tiles.push_back(t->tile);
            grid.image.width = std::max(grid.image.width, t->tile.ox + t->tile.width);
            grid.image.height = std::max(grid.image.height, t->tile.oy + t->tile.height);
            const auto key = tiler::tile_key(image, t->tile);
            const auto it = predictions.find(key);
            if (it == predictions.end()) throw Error(ErrorKind::MissingPrediction, "no detections for tile " + key);
            per_tile.push_back(it->second);
        }
        for (auto& d : merge::merge_tiles(per_tile, grid, cfg)) merged.push_back({image, std::move(d)});
    }
    return merged;
}

int cmd_merge(const Options& o, std::ostream& out, std::ostream&) {
    require_exists(o.tiles, "tile manifest");
    require_exists(o.detections, "detections");
    const auto cfg = merge_config(o);
    const auto tiles = formats::tile_manifest_from_json(formats::read_json_file(o.tiles));
    const auto predictions = formats::predictions_from_json(formats::read_json_file(o.detections));
    const auto merged = merge_manifest(tiles, predictions, cfg);
    write_json(o.out, formats::merged_to_json(merged));
    out << "merged to " << merged.size() << " detections\n";
    return kExitOk;
}

// ---- count ----------------------------------------------------------------

std::string counts_csv(const std::vector<std::pair<std::string, merge::ClassCounts>>& rows) {
    std::ostringstream os;
    os << "image,fecal_count,no_fecal_count,total\n";
    for (const auto& [image, c] : rows) {
        os << formats::csv_escape(image) << ',' << c.fecal << ',' << c.no_fecal << ',' << c.total() << '\n';
    }
    return os.str();
}

std::map<std::string, std::vector<Detection>> group_merged(const std::vector<formats::MergedDetection>& merged,
                                                           std::vector<std::string>& order) {
    std::map<std::string, std::vector<Detection>> by_image;
    for (const auto& m : merged) {
        auto [it, inserted] = by_image.try_emplace(m.image);
        if (inserted) order.push_back(m.image);
        it->second.push_back(m.detection);
    }
    return by_image;
}

int cmd_count(const Options& o, std::ostream& out, std::ostream&) {
    require_exists(o.merged, "merged detections");
    if (!o.manifest.empty()) require_exists(o.manifest, "image manifest");
    const auto merged = formats::merged_from_json(formats::read_json_file(o.merged));
    std::vector<std::string> order;
    const auto by_image = group_merged(merged, order);

    std::vector<curate::ManifestEntry> entries;
    if (!o.manifest.empty()) {
        entries = formats::parse_image_manifest(formats::read_text_file(o.manifest));
        for (const auto& e : entries) {
            const auto id = image_id_from_path(e.image.path);
            if (std::find(order.begin(), order.end(), id) == order.end()) order.push_back(id);
        }
    }

    std::vector<std::pair<std::string, merge::ClassCounts>> rows;
    for (const auto& image : order) {
        const auto it = by_image.find(image);
        rows.emplace_back(image, it == by_image.end() ? merge::ClassCounts{} : merge::count_by_class(it->second));
    }
    formats::write_file_atomic(o.out, counts_csv(rows));

    if (!o.manifest.empty()) {
        const auto records = curate::aggregate_roots(entries, by_image);
        const fs::path roots = o.roots.empty() ? fs::path(o.out).parent_path() / "roots.csv" : fs::path(o.roots);
        formats::write_file_atomic(roots, curate::root_damage_csv(records));
        out << "aggregated " << records.size() << " roots\n";
    }
    long total = 0;
    for (const auto& r : rows) total += r.second.total();
    out << "counted " << total << " holes in " << rows.size() << " images\n";
    return kExitOk;
}

// ---- curate / split -------------------------------------------------------

std::vector<curate::PlotRecord> load_plots(const std::string& plots, const std::string& manifest) {
    if (!plots.empty()) {
        require_exists(plots, "plot list");
        return formats::plots_from_json(formats::read_json_file(plots));
    }
    require_exists(manifest, "image manifest");
    const auto entries = formats::parse_image_manifest(formats::read_text_file(manifest));
    return curate::group_plots(entries);
}

int cmd_curate(const Options& o, std::ostream& out, std::ostream&) {
    require_exists(o.manifest, "image manifest");
    auto plots = load_plots({}, o.manifest);
    for (int cls : o.drop) plots = curate::drop_class(plots, severity_from_value(cls));
    for (const auto& spec : o.undersample) {
        const auto colon = spec.find(':');
        if (colon == std::string::npos) throw Error(ErrorKind::InvalidParameter, "--undersample expects CLASS:TARGET");
        int cls = 0;
        long target = 0;
        try {
            cls = std::stoi(spec.substr(0, colon));
            target = std::stol(spec.substr(colon + 1));
        } catch (const std::exception&) {
            throw Error(ErrorKind::InvalidParameter, "cannot parse --undersample '" + spec + "'");
        }
        if (target < 0) throw Error(ErrorKind::InvalidParameter, "undersample target must be non-negative");
        plots = curate::undersample(plots, severity_from_value(cls), static_cast<std::size_t>(target), o.seed);
    }
    write_json(o.out, formats::plots_to_json(plots));
    for (const auto& [cls, n] : curate::class_histogram(plots)) out << "severity " << score_value(cls) << ": " << n << '\n';
    return kExitOk;
}

int cmd_split(const Options& o, std::ostream& out, std::ostream&) {
    if (o.plots.empty() && o.manifest.empty()) throw MissingInput("split needs --plots or --manifest");
    const auto plots = load_plots(o.plots, o.manifest);
    const auto r = parse_ratios(o.ratios);
    const auto split = curate::stratified_split(plots, {r[0], r[1], r[2]}, o.seed);
    write_json(o.out, formats::split_to_json(split));
    out << "train " << split.train.size() << ", val " << split.val.size() << ", test " << split.test.size() << '\n';
    return kExitOk;
}

// ---- evaluation -----------------------------------------------------------

json class_report_json(const metrics::ClassReport& r) {
    json per = json::array();
    for (const auto& m : r.per_class) {
        per.push_back({{"class", score_value(m.label)},
                       {"precision", m.precision},
                       {"recall", m.recall},
                       {"f1", m.f1},
                       {"support", m.support},
                       {"degenerate", m.degenerate}});
    }
    return {{"per_class", per}, {"accuracy", r.accuracy}, {"total", r.total}};
}

json detection_report_json(const metrics::DetectionReport& r) {
    json per = json::array();
    for (const auto& m : r.per_class) {
        per.push_back({{"class", m.class_id},
                       {"name", std::string(display_name(hole_class_from_id(m.class_id)))},
                       {"precision", m.precision},
                       {"recall", m.recall},
                       {"ap50", m.ap.ap},
                       {"ap_defined", m.ap.defined},
                       {"n_gt", m.n_gt},
                       {"n_pred", m.n_pred},
                       {"tp", m.tp},
                       {"degenerate", m.degenerate}});
    }
    return {{"per_class", per}, {"all", {{"precision", r.precision}, {"recall", r.recall}, {"map50", r.map50}}}};
}

int cmd_eval_cls(const Options& o, std::ostream& out, std::ostream&) {
    require_exists(o.predictions, "predictions");
    require_exists(o.truth, "truth");
    if (!o.split.empty()) require_exists(o.split, "split manifest");

    const bool truth_is_json = fs::path(o.truth).extension() == ".json";
    auto plots = truth_is_json ? load_plots(o.truth, {}) : load_plots({}, o.truth);
    if (!o.split.empty()) {
        const auto split = formats::split_from_json(formats::read_json_file(o.split));
        const std::vector<std::string>* part = nullptr;
        if (o.partition == "train") part = &split.train;
        if (o.partition == "val") part = &split.val;
        if (o.partition == "test") part = &split.test;
        if (!part) throw Error(ErrorKind::InvalidParameter, "--partition must be train, val or test");
        const std::set<std::string> keep(part->begin(), part->end());
        std::erase_if(plots, [&](const curate::PlotRecord& p) { return !keep.contains(p.plot_id); });
    }

    const auto classifier = backends::replay_classifier(formats::read_json_file(o.predictions));
    std::vector<metrics::LabelPair> samples;
    std::set<SeverityScore> classes;
    for (const auto& p : plots) {
        const auto predicted = classifier->classify(curate::make_pairs(p)).score;
        samples.emplace_back(p.severity, predicted);
        classes.insert(p.severity);
        classes.insert(predicted);
    }
    const auto cm = metrics::confusion_matrix(samples, {classes.begin(), classes.end()});
    const auto report = metrics::class_report(cm);

    formats::write_file_atomic(o.out, metrics::class_report_csv(report));
    if (!o.json_out.empty()) write_json(o.json_out, class_report_json(report));
    out << "accuracy " << formats::fixed6(report.accuracy) << " over " << report.total << " plots\n";
    return kExitOk;
}

int cmd_eval_det(const Options& o, std::ostream& out, std::ostream&) {
    require_exists(o.predictions, "predictions");
    require_exists(o.truth, "truth");
    if (!(o.iou > 0.0 && o.iou <= 1.0)) throw Error(ErrorKind::InvalidParameter, "--iou must lie in (0,1]");

    const auto merged = formats::merged_from_json(formats::read_json_file(o.predictions));
    const auto truth = formats::truth_from_json(formats::read_json_file(o.truth));

    std::vector<metrics::ImageEvaluation> images;
    std::map<std::string, std::size_t> index;
    auto slot = [&](const std::string& image) -> metrics::ImageEvaluation& {
        auto [it, inserted] = index.try_emplace(image, images.size());
        if (inserted) images.push_back({image, {}, {}});
        return images[it->second];
    };
    for (const auto& [image, boxes] : truth) slot(image).truth = boxes;
    for (const auto& m : merged) slot(m.image).predictions.push_back(m.detection);

    const std::vector<int> classes{class_id(HoleClass::Fecal), class_id(HoleClass::NoFecal)};
    const auto report = metrics::evaluate_detections(images, classes, o.iou);
    formats::write_file_atomic(o.out, metrics::detection_report_csv(report));
    if (!o.json_out.empty()) write_json(o.json_out, detection_report_json(report));
    out << "mAP@" << o.iou << " " << formats::fixed6(report.map50) << '\n';
    return kExitOk;
}

// ---- pipeline -------------------------------------------------------------

int cmd_pipeline(const Options& o, std::ostream& out, std::ostream&) {
    struct Job {
        std::string id;
        fs::path image;
        std::optional<fs::path> mask;
    };
    std::vector<Job> jobs;
    std::vector<curate::ManifestEntry> entries;

    if (!o.manifest.empty()) {
        require_exists(o.manifest, "image manifest");
        const fs::path base = fs::path(o.manifest).parent_path();
        entries = formats::parse_image_manifest(formats::read_text_file(o.manifest));
        for (const auto& e : entries) {
            Job j{image_id_from_path(e.image.path), resolve(base, e.image.path), std::nullopt};
            if (e.image.mask_path) j.mask = resolve(base, *e.image.mask_path);
            jobs.push_back(std::move(j));
        }
    } else {
        for (const auto& p : list_images(o.in)) {
            Job j{p.stem().string(), p, std::nullopt};
            if (!o.masks.empty()) j.mask = fs::path(o.masks) / (p.stem().string() + ".png");
            jobs.push_back(std::move(j));
        }
    }
    if (!o.masks.empty()) require_dir(o.masks, "mask directory");
    for (const auto& j : jobs) {
        require_exists(j.image, "image");
        if (j.mask) require_exists(*j.mask, "mask");
    }

    pipeline::PipelineConfig cfg;
    cfg.tile_size = o.tile_size;
    cfg.overlap_ratio = o.overlap;
    cfg.merge = merge_config(o);
    cfg.workers = o.workers;
    tiler::plan_tiles({1, 1}, cfg.tile_size, cfg.overlap_ratio);

    std::unique_ptr<backends::DetectorBackend> backend;
    if (o.backend == "blob") {
        backend = backends::blob_detector(o.blob);
    } else if (o.backend == "replay") {
        require_exists(o.predictions, "prediction manifest");
        backend = backends::replay_detector(formats::read_json_file(o.predictions));
    } else {
        throw Error(ErrorKind::InvalidParameter, "pipeline supports the blob and replay backends");
    }

    std::vector<formats::MergedDetection> merged;
    std::vector<std::pair<std::string, merge::ClassCounts>> counts;
    std::map<std::string, std::vector<Detection>> by_image;
    for (const auto& j : jobs) {
        const cv::Mat img = read_image(j.image);
        std::optional<mask::BinaryMask> m;
        if (j.mask) m = mask::load_mask(*j.mask);
        auto result = pipeline::run_image(j.id, img, m ? &*m : nullptr, *backend, cfg);
        for (const auto& d : result.detections) merged.push_back({j.id, d});
        counts.emplace_back(j.id, result.counts);
        by_image[j.id] = std::move(result.detections);
    }

    OutputStage stage(o.out);
    stage.write("merged.json", formats::merged_to_json(merged).dump(2) + "\n");
    stage.write("counts.csv", counts_csv(counts));
    if (!entries.empty()) stage.write("roots.csv", curate::root_damage_csv(curate::aggregate_roots(entries, by_image)));
    stage.commit();

    long total = 0;
    for (const auto& c : counts) total += c.second.total();
    out << "pipeline: " << total << " holes in " << jobs.size() << " images\n";
    return kExitOk;
}

void add_blob_options(CLI::App* sub, Options& o) {
    sub->add_option("--blob-threshold", o.blob.intensity_threshold, "Darkness threshold (0-255)");
    sub->add_option("--blob-min-area", o.blob.min_area, "Minimum component area in pixels");
    sub->add_option("--blob-max-area", o.blob.max_area, "Maximum component area in pixels");
}

void add_merge_options(CLI::App* sub, Options& o) {
    sub->add_option("--conf", o.conf, "Confidence threshold");
    sub->add_option("--nms", o.nms, "NMS IoU threshold");
    sub->add_option("--box-threshold", o.box_threshold, "Drop detections whose box score is below this");
}

void report_error(std::ostream& err, std::string_view kind, std::string_view message) {
    err << json{{"error", kind}, {"message", message}}.dump() << '\n';
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    Options o;
    CLI::App app{"Weevil damage assessment toolkit", "phenokit"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for every subcommand");

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--workers", o.workers, "Worker threads (default: $PHENOKIT_WORKERS or 1)")
            ->check(CLI::PositiveNumber);
        sub->add_option("--seed", o.seed, "Seed for every random choice");
    };

    auto* convert = app.add_subcommand("convert", "Convert point annotations to label files");
    convert->add_option("--points", o.points, "CSV: image_path,width,height,x,y,class")->required();
    convert->add_option("--out", o.out, "Label output directory")->required();
    convert->add_option("--pad", o.pad, "Half-width of the box around each point");
    add_common(convert);

    auto* mask_cmd = app.add_subcommand("mask", "Composite images onto black using root masks");
    mask_cmd->add_option("--in", o.in, "Image file or directory")->required();
    mask_cmd->add_option("--masks", o.masks, "Directory of <stem>.png masks")->required();
    mask_cmd->add_option("--out", o.out, "Output directory")->required();
    add_common(mask_cmd);

    auto* tile = app.add_subcommand("tile", "Slice images into overlapping tiles");
    tile->add_option("--in", o.in, "Image file or directory")->required();
    tile->add_option("--out", o.out, "Output directory")->required();
    tile->add_option("--tile", o.tile_size, "Tile side in pixels");
    tile->add_option("--overlap", o.overlap, "Overlap ratio in [0,1)");
    tile->add_option("--labels", o.labels, "Directory of <stem>.txt label files");
    tile->add_option("--min-visibility", o.min_visibility, "Minimum visible fraction for clipped boxes");
    tile->add_flag("--keep-empty", o.keep_empty, "Keep tiles without annotations");
    add_common(tile);

    auto* detect = app.add_subcommand("detect", "Run a detector backend over tiles");
    detect->add_option("--tiles", o.tiles, "Tile manifest JSON")->required();
    detect->add_option("--out", o.out, "Prediction manifest JSON")->required();
    detect->add_option("--backend", o.backend, "blob | replay | perturb")
        ->check(CLI::IsMember({"blob", "replay", "perturb"}));
    detect->add_option("--predictions", o.predictions, "Stored predictions for the replay backend");
    detect->add_option("--drop-prob", o.perturb.drop_prob, "perturb: probability of dropping a true box");
    detect->add_option("--jitter", o.perturb.jitter_px, "perturb: uniform jitter in pixels");
    detect->add_option("--fp-rate", o.perturb.false_positive_rate, "perturb: false positives per tile");
    add_blob_options(detect, o);
    add_common(detect);

    auto* merge_cmd = app.add_subcommand("merge", "Merge per-tile detections into global detections");
    merge_cmd->add_option("--tiles", o.tiles, "Tile manifest JSON")->required();
    merge_cmd->add_option("--detections", o.detections, "Prediction manifest JSON")->required();
    merge_cmd->add_option("--out", o.out, "Merged detections JSON")->required();
    add_merge_options(merge_cmd, o);
    add_common(merge_cmd);

    auto* count = app.add_subcommand("count", "Count holes per image and per root");
    count->add_option("--merged", o.merged, "Merged detections JSON")->required();
    count->add_option("--out", o.out, "Per-image counts CSV")->required();
    count->add_option("--manifest", o.manifest, "Lab image manifest CSV (genotype, section, replication)");
    count->add_option("--roots", o.roots, "Per-root damage CSV (default: roots.csv next to --out)");
    add_common(count);

    auto* curate_cmd = app.add_subcommand("curate", "Group images into plots and rebalance classes");
    curate_cmd->add_option("--manifest", o.manifest, "Field image manifest CSV")->required();
    curate_cmd->add_option("--out", o.out, "Plot list JSON")->required();
    curate_cmd->add_option("--drop", o.drop, "Severity class to exclude (repeatable)");
    curate_cmd->add_option("--undersample", o.undersample, "CLASS:TARGET (repeatable)");
    add_common(curate_cmd);

    auto* split = app.add_subcommand("split", "Stratified train/val/test split of plots");
    split->add_option("--plots", o.plots, "Plot list JSON");
    split->add_option("--manifest", o.manifest, "Field image manifest CSV");
    split->add_option("--ratios", o.ratios, "train,val,test");
    split->add_option("--out", o.out, "Split manifest JSON")->required();
    add_common(split);

    auto* eval_cls = app.add_subcommand("eval-cls", "Severity classification report");
    eval_cls->add_option("--pred", o.predictions, "Plot predictions JSON")->required();
    eval_cls->add_option("--truth", o.truth, "Field manifest CSV or plot list JSON")->required();
    eval_cls->add_option("--split", o.split, "Split manifest restricting the evaluated plots");
    eval_cls->add_option("--partition", o.partition, "train | val | test");
    eval_cls->add_option("--out", o.out, "Report CSV")->required();
    eval_cls->add_option("--json", o.json_out, "Report JSON");
    add_common(eval_cls);

    auto* eval_det = app.add_subcommand("eval-det", "Detection precision/recall/AP report");
    eval_det->add_option("--pred", o.predictions, "Merged detections JSON")->required();
    eval_det->add_option("--truth", o.truth, "Ground-truth boxes JSON")->required();
    eval_det->add_option("--iou", o.iou, "IoU threshold for a match");
    eval_det->add_option("--out", o.out, "Report CSV")->required();
    eval_det->add_option("--json", o.json_out, "Report JSON");
    add_common(eval_det);

    auto* pipe = app.add_subcommand("pipeline", "mask -> tile -> detect -> merge -> count");
    pipe->add_option("--in", o.in, "Image file or directory");
    pipe->add_option("--manifest", o.manifest, "Lab image manifest CSV (alternative to --in)");
    pipe->add_option("--masks", o.masks, "Directory of <stem>.png masks");
    pipe->add_option("--out", o.out, "Output directory")->required();
    pipe->add_option("--backend", o.backend, "blob | replay")->check(CLI::IsMember({"blob", "replay"}));
    pipe->add_option("--predictions", o.predictions, "Stored predictions for the replay backend");
    pipe->add_option("--tile", o.tile_size, "Tile side in pixels");
    pipe->add_option("--overlap", o.overlap, "Overlap ratio in [0,1)");
    add_merge_options(pipe, o);
    add_blob_options(pipe, o);
    add_common(pipe);

    std::vector<char*> argv;
    std::vector<std::string> storage = args;
    if (storage.empty()) storage.emplace_back("phenokit");
    for (auto& s : storage) argv.push_back(s.data());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return kExitUsage;
    }

    try {
        if (*convert) return cmd_convert(o, out, err);
        if (*mask_cmd) return cmd_mask(o, out, err);
        if (*tile) return cmd_tile(o, out, err);
        if (*detect) return cmd_detect(o, out, err);
        if (*merge_cmd) return cmd_merge(o, out, err);
        if (*count) return cmd_count(o, out, err);
        if (*curate_cmd) return cmd_curate(o, out, err);
        if (*split) return cmd_split(o, out, err);
        if (*eval_cls) return cmd_eval_cls(o, out, err);
        if (*eval_det) return cmd_eval_det(o, out, err);
        if (*pipe) {
            if (o.in.empty() && o.manifest.empty()) {
                err << "pipeline needs --in or --manifest\n";
                return kExitUsage;
            }
            return cmd_pipeline(o, out, err);
        }
    } catch (const MissingInput& e) {
        report_error(err, "missing-input", e.what());
        return kExitNoInput;
    } catch (const Error& e) {
        report_error(err, to_string(e.kind()), e.what());
        return kExitValidation;
    } catch (const std::exception& e) {
        report_error(err, "internal", e.what());
        return kExitSoftware;
    }
    return kExitUsage;
}

int run(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    return run(args, std::cout, std::cerr);
}

}  // namespace phenokit::cli
