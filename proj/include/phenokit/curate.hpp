#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <opencv2/core.hpp>

#include "phenokit/core.hpp"
#include "phenokit/merge.hpp"

namespace phenokit::curate {

// One row of an image manifest.
struct ManifestEntry {
    ImageRecord image;
    std::optional<SeverityScore> severity;
    std::optional<int> replication;
    std::map<std::string, std::string> extra;
};

struct PlotRecord {
    std::string plot_id;
    std::vector<ImageRecord> images;  // one or two
    SeverityScore severity = SeverityScore::S1;
    std::map<std::string, std::string> metadata;
};

// One record per plot_id in first-appearance order.
std::vector<PlotRecord> group_plots(std::span<const ManifestEntry> entries);

// Removes every plot of `cls`, preserving order.
std::vector<PlotRecord> drop_class(std::span<const PlotRecord> plots, SeverityScore cls);

// Keeps exactly `target` plots of `cls`: two-image plots first, the remainder
// drawn uniformly from one-image plots. Input order is preserved.
std::vector<PlotRecord> undersample(std::span<const PlotRecord> plots, SeverityScore cls, std::size_t target,
                                    std::uint64_t seed);

struct SplitRatios {
    double train = 0.8;
    double val = 0.1;
    double test = 0.1;
};

struct SplitManifest {
    std::vector<std::string> train;
    std::vector<std::string> val;
    std::vector<std::string> test;
    std::uint64_t seed = 0;
    SplitRatios ratios;
};

// Validation and test sizes are ceil(N * ratio); each is spread across classes
// by largest remainder of count * ratio. Partitions list plots in input order.
SplitManifest stratified_split(std::span<const PlotRecord> plots, const SplitRatios& ratios, std::uint64_t seed);

// Largest-remainder apportionment of `target` units across `shares`, never
// exceeding `caps`. Ties go to the lower index.
std::vector<std::size_t> apportion(std::span<const double> shares, std::span<const std::size_t> caps,
                                   std::size_t target);

std::map<SeverityScore, std::size_t> class_histogram(std::span<const PlotRecord> plots);

ImagePair make_pairs(const PlotRecord& plot);
// All-black raster matching a record's dimensions.
cv::Mat black_placeholder(const ImageRecord& record);

// "NASPOT A" -> ("NASPOT", 'A'); the last whitespace-separated token is the section.
std::pair<std::string, char> parse_section_label(std::string_view label);

struct RootIdentity {
    std::string genotype;
    int replication = 0;
};

struct SectionDetections {
    char section = 'A';
    std::vector<Detection> detections;
};

struct RootDamageRecord {
    std::string genotype;
    int replication = 0;
    std::map<char, merge::ClassCounts> per_section;
    merge::ClassCounts totals;
};

// Throws Validation on a duplicate or unknown section label.
RootDamageRecord aggregate_root_damage(std::span<const SectionDetections> sections, const RootIdentity& root);

// Groups manifest images into roots by (genotype, replication), in
// first-appearance order, and sums merged detections keyed by image id.
std::vector<RootDamageRecord> aggregate_roots(std::span<const ManifestEntry> entries,
                                              const std::map<std::string, std::vector<Detection>>& by_image);

std::string root_damage_csv(std::span<const RootDamageRecord> records);

}  // namespace phenokit::curate
