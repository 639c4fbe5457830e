#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "phenokit/backends.hpp"
#include "phenokit/core.hpp"
#include "phenokit/curate.hpp"
#include "phenokit/tiler.hpp"

namespace phenokit::formats {

using nlohmann::json;

// ---- CSV ------------------------------------------------------------------

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    // -1 when the column is absent.
    int column(std::string_view name) const;
};

// RFC 4180 subset: comma separated, double-quoted fields with "" escapes.
CsvTable parse_csv(std::string_view text);
std::string csv_escape(std::string_view field);

// Columns: image_path, plot_id or genotype, section, severity, replication,
// width, height, plus optional mask_path and label. Unknown columns are kept
// in ManifestEntry::extra.
std::vector<curate::ManifestEntry> parse_image_manifest(std::string_view csv_text);
// Writes the columns parse_image_manifest reads back, extra columns sorted by name.
std::string image_manifest_csv(std::span<const curate::ManifestEntry> entries);

// ---- detections -------------------------------------------------------------

json detection_to_json(const Detection& d);
Detection detection_from_json(const json& j);

struct MergedDetection {
    std::string image;
    Detection detection;
};

// [{image, class, confidence, x_min, y_min, x_max, y_max}, ...]
json merged_to_json(std::span<const MergedDetection> dets);
std::vector<MergedDetection> merged_from_json(const json& j);

// Ground truth uses the merged layout without confidence.
std::map<std::string, std::vector<BBox>> truth_from_json(const json& j);

// { "<image>#r<row>c<col>": [detection, ...], ... }
json predictions_to_json(const backends::PredictionMap& predictions);
backends::PredictionMap predictions_from_json(const json& j);

// { plot_id: score } or { plot_id: {score, confidence} }
std::map<std::string, backends::Classification> classifications_from_json(const json& j);

// ---- tiles ----------------------------------------------------------------

struct TileManifestEntry {
    std::string source_image;
    tiler::TileSpec tile;
    std::string tile_path;
    std::optional<std::string> label_path;

    bool operator==(const TileManifestEntry&) const = default;
};

json tile_manifest_to_json(std::span<const TileManifestEntry> entries);
std::vector<TileManifestEntry> tile_manifest_from_json(const json& j);

// ---- curation -------------------------------------------------------------

json plots_to_json(std::span<const curate::PlotRecord> plots);
std::vector<curate::PlotRecord> plots_from_json(const json& j);

json split_to_json(const curate::SplitManifest& split);
curate::SplitManifest split_from_json(const json& j);

// ---- files ----------------------------------------------------------------

std::string read_text_file(const std::filesystem::path& path);
json read_json_file(const std::filesystem::path& path);

// Writes to a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

// Six-decimal fixed-point rendering shared by the CSV writers.
std::string fixed6(double v);

}  // namespace phenokit::formats
