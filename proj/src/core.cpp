#include "phenokit/core.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <string>

#include "phenokit/error.hpp"
#include "phenokit/random.hpp"

namespace phenokit {

std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::InvalidParameter: return "invalid-parameter";
        case ErrorKind::DegenerateAnnotation: return "degenerate-annotation";
        case ErrorKind::Parse: return "parse";
        case ErrorKind::Validation: return "validation";
        case ErrorKind::Shape: return "shape";
        case ErrorKind::EmptyForeground: return "empty-foreground";
        case ErrorKind::OutOfBounds: return "out-of-bounds";
        case ErrorKind::MissingPrediction: return "missing-prediction";
        case ErrorKind::Conflict: return "conflict";
        case ErrorKind::EmptyInput: return "empty-input";
        case ErrorKind::Io: return "io";
    }
    return "unknown";
}

HoleClass hole_class_from_id(int id) {
    if (id == 0) return HoleClass::Fecal;
    if (id == 1) return HoleClass::NoFecal;
    throw Error(ErrorKind::Validation, "unknown hole class id " + std::to_string(id));
}

HoleClass parse_hole_class(std::string_view text) {
    std::string t;
    for (char c : text) {
        if (c == ' ' || c == '-' || c == '_') continue;
        t.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    if (t == "0" || t == "fecal") return HoleClass::Fecal;
    if (t == "1" || t == "nofecal") return HoleClass::NoFecal;
    throw Error(ErrorKind::Validation, "unknown hole class '" + std::string(text) + "'");
}

std::string_view display_name(HoleClass c) noexcept {
    return c == HoleClass::Fecal ? "Fecal" : "No Fecal";
}

BBox::BBox(double x_min, double y_min, double x_max, double y_max, int class_id)
    : x_min_(x_min), y_min_(y_min), x_max_(x_max), y_max_(y_max), class_id_(class_id) {
    if (!(std::isfinite(x_min) && std::isfinite(y_min) && std::isfinite(x_max) && std::isfinite(y_max))) {
        throw Error(ErrorKind::Validation, "box coordinates must be finite");
    }
    if (x_min < 0 || y_min < 0) {
        throw Error(ErrorKind::Validation, "box coordinates must be non-negative");
    }
    if (!(x_min < x_max) || !(y_min < y_max)) {
        throw Error(ErrorKind::Validation, "box must have positive width and height");
    }
    if (class_id < 0) {
        throw Error(ErrorKind::Validation, "class id must be non-negative");
    }
}

BBox BBox::translated(double dx, double dy) const {
    return BBox(x_min_ + dx, y_min_ + dy, x_max_ + dx, y_max_ + dy, class_id_);
}

BBox BBox::with_class(int class_id) const { return BBox(x_min_, y_min_, x_max_, y_max_, class_id); }

double intersection_area(const BBox& a, const BBox& b) noexcept {
    const double w = std::min(a.x_max(), b.x_max()) - std::max(a.x_min(), b.x_min());
    const double h = std::min(a.y_max(), b.y_max()) - std::max(a.y_min(), b.y_min());
    if (w <= 0 || h <= 0) return 0.0;
    return w * h;
}

double iou(const BBox& a, const BBox& b) noexcept {
    const double inter = intersection_area(a, b);
    if (inter <= 0) return 0.0;
    const double uni = a.area() + b.area() - inter;
    return std::clamp(inter / uni, 0.0, 1.0);
}

Detection::Detection(BBox box, double confidence, std::optional<double> box_score)
    : box_(box), confidence_(confidence), box_score_(box_score) {
    if (!(confidence >= 0.0 && confidence <= 1.0)) {
        throw Error(ErrorKind::Validation, "confidence must lie in [0,1]");
    }
    if (box_score && !(*box_score >= 0.0 && *box_score <= 1.0)) {
        throw Error(ErrorKind::Validation, "box score must lie in [0,1]");
    }
}

SeverityScore severity_from_value(int value) {
    switch (value) {
        case 1: return SeverityScore::S1;
        case 3: return SeverityScore::S3;
        case 5: return SeverityScore::S5;
        case 7: return SeverityScore::S7;
        case 9: return SeverityScore::S9;
        default: break;
    }
    throw Error(ErrorKind::Validation, "severity score must be one of 1,3,5,7,9 (got " + std::to_string(value) + ")");
}

std::string_view band_description(SeverityScore s) noexcept {
    switch (s) {
        case SeverityScore::S1: return "No visible damage";
        case SeverityScore::S3: return "< 5% of roots in a plot show damage";
        case SeverityScore::S5: return "16-33% damaged";
        case SeverityScore::S7: return "67-99% damaged";
        case SeverityScore::S9: return "All roots damaged";
    }
    return "";
}

bool is_valid_section(char section) noexcept { return section >= 'A' && section <= 'D'; }

void ImageRecord::validate() const {
    if (width <= 0 || height <= 0) {
        throw Error(ErrorKind::Validation, "image '" + path + "' must have positive dimensions");
    }
    if (section && !is_valid_section(*section)) {
        throw Error(ErrorKind::Validation, "image '" + path + "' has section '" + std::string(1, *section) +
                                               "' outside A-D");
    }
}

std::string image_id_from_path(std::string_view path) {
    return std::filesystem::path(std::string(path)).stem().string();
}

int Rng::poisson(double mean) {
    if (mean <= 0) return 0;
    const double limit = std::exp(-mean);
    int k = 0;
    double p = uniform01();
    while (p > limit) {
        ++k;
        p *= uniform01();
    }
    return k;
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view key) noexcept {
    // FNV-1a over the key, folded with the seed through splitmix64.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : key) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    std::uint64_t z = seed ^ (h + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2));
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace phenokit
