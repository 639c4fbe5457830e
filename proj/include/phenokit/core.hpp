#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace phenokit {

struct ImageDims {
    int width = 0;
    int height = 0;

    bool operator==(const ImageDims&) const = default;
};

enum class HoleClass : int { Fecal = 0, NoFecal = 1 };

inline constexpr std::array<HoleClass, 2> kHoleClasses{HoleClass::Fecal, HoleClass::NoFecal};

constexpr int class_id(HoleClass c) noexcept { return static_cast<int>(c); }
HoleClass hole_class_from_id(int id);
// Accepts "0"/"1", "fecal"/"no_fecal" and the display names.
HoleClass parse_hole_class(std::string_view text);
std::string_view display_name(HoleClass c) noexcept;  // "Fecal" / "No Fecal"

// Axis-aligned box over continuous pixel coordinates, closed-open intervals.
// Construction rejects negative coordinates and zero or negative extents.
class BBox {
public:
    BBox(double x_min, double y_min, double x_max, double y_max, int class_id = 0);

    double x_min() const noexcept { return x_min_; }
    double y_min() const noexcept { return y_min_; }
    double x_max() const noexcept { return x_max_; }
    double y_max() const noexcept { return y_max_; }
    int class_id() const noexcept { return class_id_; }

    double width() const noexcept { return x_max_ - x_min_; }
    double height() const noexcept { return y_max_ - y_min_; }
    double area() const noexcept { return width() * height(); }

    BBox translated(double dx, double dy) const;
    BBox with_class(int class_id) const;

    bool operator==(const BBox&) const = default;

private:
    double x_min_;
    double y_min_;
    double x_max_;
    double y_max_;
    int class_id_;
};

// Intersection over union; symmetric, 0 for disjoint interiors.
double iou(const BBox& a, const BBox& b) noexcept;

// Area of the overlap of a and b (0 when disjoint).
double intersection_area(const BBox& a, const BBox& b) noexcept;

class Detection {
public:
    Detection(BBox box, double confidence, std::optional<double> box_score = std::nullopt);

    const BBox& box() const noexcept { return box_; }
    double confidence() const noexcept { return confidence_; }
    int class_id() const noexcept { return box_.class_id(); }
    // Optional localisation-quality score a backend may attach.
    const std::optional<double>& box_score() const noexcept { return box_score_; }

    Detection with_box(BBox box) const { return Detection(box, confidence_, box_score_); }

    bool operator==(const Detection&) const = default;

private:
    BBox box_;
    double confidence_;
    std::optional<double> box_score_;
};

// Adapted five-step field damage scale.
enum class SeverityScore : int { S1 = 1, S3 = 3, S5 = 5, S7 = 7, S9 = 9 };

inline constexpr std::array<SeverityScore, 5> kSeverityScores{
    SeverityScore::S1, SeverityScore::S3, SeverityScore::S5, SeverityScore::S7, SeverityScore::S9};

constexpr int score_value(SeverityScore s) noexcept { return static_cast<int>(s); }
SeverityScore severity_from_value(int value);
std::string_view band_description(SeverityScore s) noexcept;

struct ImageRecord {
    std::string path;
    int width = 0;
    int height = 0;
    std::string plot_id;
    std::string genotype_id;
    std::optional<char> section;  // 'A'..'D'
    std::optional<std::string> mask_path;

    ImageDims dims() const noexcept { return {width, height}; }
    // Throws Validation on non-positive dimensions or an unknown section.
    void validate() const;
};

bool is_valid_section(char section) noexcept;

// Two-view classifier input. Single-image plots carry a black placeholder as the
// second view.
struct ImagePair {
    std::string plot_id;
    ImageRecord first;
    ImageRecord second;
    bool second_is_placeholder = false;
};

// Stem of a path's filename ("a/b/img_01.png" -> "img_01"); the image id used
// in tile keys and detection outputs.
std::string image_id_from_path(std::string_view path);

}  // namespace phenokit
