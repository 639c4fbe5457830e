#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "phenokit/core.hpp"

namespace phenokit::annotate {

// Half-width of the square box synthesized around each annotated point.
inline constexpr double kDefaultPad = 18.0;

struct PointAnnotation {
    double x = 0;
    double y = 0;
    HoleClass cls = HoleClass::Fecal;
};

struct BoxConversion {
    BBox box;
    bool clamped = false;  // set when the box was cut by the image border
};

// Box (x-pad, y-pad, x+pad, y+pad) clamped to the image. Throws
// InvalidParameter for pad <= 0 or a point outside the image and
// DegenerateAnnotation if clamping leaves no area.
BoxConversion point_to_box(const PointAnnotation& p, double pad, ImageDims dims);

// Total mapping of the damaged-root fraction onto the adapted severity scale.
// The published bands leave gaps between 5-16% and 33-67%; they are closed at
// the midpoints 10.5% and 50%.
SeverityScore severity_from_fraction(double fraction);

// Label files: one "class_id cx cy w h" record per line, values normalized by
// the image dimensions and written with six decimals.
std::string format_label_line(const BBox& box, ImageDims dims);
void write_labels(std::ostream& out, std::span<const BBox> boxes, ImageDims dims);
std::vector<BBox> read_labels(std::istream& in, ImageDims dims);

std::vector<BBox> read_label_file(const std::filesystem::path& path, ImageDims dims);
std::string labels_to_string(std::span<const BBox> boxes, ImageDims dims);

}  // namespace phenokit::annotate
