#include "phenokit/annotate.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "phenokit/error.hpp"

namespace phenokit::annotate {

namespace {

// Normalized values may overshoot [0,1] by rounding when read back.
constexpr double kNormSlack = 1e-6;

void require_dims(ImageDims dims) {
    if (dims.width <= 0 || dims.height <= 0) {
        throw Error(ErrorKind::InvalidParameter, "image dimensions must be positive");
    }
}

double parse_number(std::string_view token, std::size_t line_no) {
    double v = 0;
    const auto* end = token.data() + token.size();
    auto [ptr, ec] = std::from_chars(token.data(), end, v);
    if (ec != std::errc() || ptr != end || !std::isfinite(v)) {
        throw Error(ErrorKind::Parse, "line " + std::to_string(line_no) + ": cannot parse '" + std::string(token) + "'");
    }
    return v;
}

}  // namespace

BoxConversion point_to_box(const PointAnnotation& p, double pad, ImageDims dims) {
    require_dims(dims);
    if (!(pad > 0) || !std::isfinite(pad)) {
        throw Error(ErrorKind::InvalidParameter, "pad must be positive");
    }
    if (!(p.x >= 0 && p.x < dims.width && p.y >= 0 && p.y < dims.height)) {
        throw Error(ErrorKind::InvalidParameter, "point lies outside the image");
    }
    const double x0 = std::max(0.0, p.x - pad);
    const double y0 = std::max(0.0, p.y - pad);
    const double x1 = std::min(static_cast<double>(dims.width), p.x + pad);
    const double y1 = std::min(static_cast<double>(dims.height), p.y + pad);
    if (!(x0 < x1 && y0 < y1)) {
        throw Error(ErrorKind::DegenerateAnnotation, "clamped box has zero area");
    }
    const bool clamped = x0 != p.x - pad || y0 != p.y - pad || x1 != p.x + pad || y1 != p.y + pad;
    return {BBox(x0, y0, x1, y1, class_id(p.cls)), clamped};
}

SeverityScore severity_from_fraction(double f) {
    if (!(f >= 0.0 && f <= 1.0)) {
        throw Error(ErrorKind::InvalidParameter, "damage fraction must lie in [0,1]");
    }
    if (f == 0.0) return SeverityScore::S1;
    if (f <= 0.105) return SeverityScore::S3;
    if (f <= 0.50) return SeverityScore::S5;
    if (f < 1.0) return SeverityScore::S7;
    return SeverityScore::S9;
}

std::string format_label_line(const BBox& box, ImageDims dims) {
    require_dims(dims);
    const double w = dims.width;
    const double h = dims.height;
    const double cx = (box.x_min() + box.x_max()) / 2.0 / w;
    const double cy = (box.y_min() + box.y_max()) / 2.0 / h;
    char buf[128];
    std::snprintf(buf, sizeof buf, "%d %.6f %.6f %.6f %.6f", box.class_id(), cx, cy, box.width() / w,
                  box.height() / h);
    return buf;
}

void write_labels(std::ostream& out, std::span<const BBox> boxes, ImageDims dims) {
    for (const auto& b : boxes) out << format_label_line(b, dims) << '\n';
}

std::string labels_to_string(std::span<const BBox> boxes, ImageDims dims) {
    std::ostringstream os;
    write_labels(os, boxes, dims);
    return os.str();
}

std::vector<BBox> read_labels(std::istream& in, ImageDims dims) {
    require_dims(dims);
    std::vector<BBox> boxes;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;

        std::istringstream fields(line);
        std::vector<std::string> tokens;
        for (std::string t; fields >> t;) tokens.push_back(t);
        if (tokens.size() != 5) {
            throw Error(ErrorKind::Parse, "line " + std::to_string(line_no) + ": expected 5 fields, got " +
                                              std::to_string(tokens.size()));
        }
        int cls = 0;
        {
            const auto& t = tokens[0];
            auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), cls);
            if (ec != std::errc() || ptr != t.data() + t.size()) {
                throw Error(ErrorKind::Parse, "line " + std::to_string(line_no) + ": bad class id '" + t + "'");
            }
        }
        const double cx = parse_number(tokens[1], line_no);
        const double cy = parse_number(tokens[2], line_no);
        const double bw = parse_number(tokens[3], line_no);
        const double bh = parse_number(tokens[4], line_no);

        const auto where = "line " + std::to_string(line_no) + ": ";
        if (cls < 0) throw Error(ErrorKind::Validation, where + "negative class id");
        for (double v : {cx, cy, bw, bh}) {
            if (v < 0.0 || v > 1.0) throw Error(ErrorKind::Validation, where + "value outside [0,1]");
        }
        if (bw <= 0.0 || bh <= 0.0) throw Error(ErrorKind::Validation, where + "zero-size box");

        double x0 = cx - bw / 2.0;
        double y0 = cy - bh / 2.0;
        double x1 = cx + bw / 2.0;
        double y1 = cy + bh / 2.0;
        if (x0 < -kNormSlack || y0 < -kNormSlack || x1 > 1.0 + kNormSlack || y1 > 1.0 + kNormSlack) {
            throw Error(ErrorKind::Validation, where + "box extends beyond the image");
        }
        x0 = std::max(0.0, x0);
        y0 = std::max(0.0, y0);
        x1 = std::min(1.0, x1);
        y1 = std::min(1.0, y1);
        boxes.emplace_back(x0 * dims.width, y0 * dims.height, x1 * dims.width, y1 * dims.height, cls);
    }
    return boxes;
}

std::vector<BBox> read_label_file(const std::filesystem::path& path, ImageDims dims) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open label file " + path.string());
    return read_labels(in, dims);
}

}  // namespace phenokit::annotate
