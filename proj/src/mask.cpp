#include "phenokit/mask.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "phenokit/error.hpp"

namespace phenokit::mask {

BinaryMask::BinaryMask(int width, int height, bool fill) {
    if (width <= 0 || height <= 0) {
        throw Error(ErrorKind::InvalidParameter, "mask dimensions must be positive");
    }
    bits_ = cv::Mat(height, width, CV_8UC1, cv::Scalar(fill ? 1 : 0));
}

BinaryMask BinaryMask::from_raster(const cv::Mat& raster) {
    if (raster.empty()) throw Error(ErrorKind::Validation, "empty mask raster");
    if (raster.depth() != CV_8U) throw Error(ErrorKind::Validation, "mask raster must be 8-bit");
    cv::Mat gray;
    switch (raster.channels()) {
        case 1: gray = raster; break;
        case 3: cv::cvtColor(raster, gray, cv::COLOR_BGR2GRAY); break;
        case 4: cv::cvtColor(raster, gray, cv::COLOR_BGRA2GRAY); break;
        default: throw Error(ErrorKind::Validation, "unsupported mask channel count");
    }
    cv::Mat bits;
    cv::threshold(gray, bits, 127, 1, cv::THRESH_BINARY);
    return BinaryMask(bits);
}

cv::Mat apply_mask(const cv::Mat& image, const BinaryMask& mask) {
    if (image.empty()) throw Error(ErrorKind::Validation, "empty image");
    if (image.cols != mask.width() || image.rows != mask.height()) {
        throw Error(ErrorKind::Shape, "mask " + std::to_string(mask.width()) + "x" + std::to_string(mask.height()) +
                                          " does not match image " + std::to_string(image.cols) + "x" +
                                          std::to_string(image.rows));
    }
    cv::Mat color;
    if (image.type() == CV_8UC3) {
        color = image;
    } else if (image.type() == CV_8UC1) {
        cv::cvtColor(image, color, cv::COLOR_GRAY2BGR);
    } else if (image.type() == CV_8UC4) {
        cv::cvtColor(image, color, cv::COLOR_BGRA2BGR);
    } else {
        throw Error(ErrorKind::Validation, "unsupported image type");
    }
    cv::Mat out(color.size(), CV_8UC3, cv::Scalar::all(0));
    color.copyTo(out, mask.bits());
    return out;
}

BBox mask_bbox(const BinaryMask& mask) {
    std::vector<cv::Point> points;
    cv::findNonZero(mask.bits(), points);
    if (points.empty()) throw Error(ErrorKind::EmptyForeground, "mask has no foreground pixels");
    const cv::Rect r = cv::boundingRect(points);
    return BBox(r.x, r.y, r.x + r.width, r.y + r.height);
}

cv::Mat load_image(const std::filesystem::path& path) {
    cv::Mat img = cv::imread(path.string(), cv::IMREAD_COLOR);
    if (img.empty()) throw Error(ErrorKind::Io, "cannot read image " + path.string());
    return img;
}

BinaryMask load_mask(const std::filesystem::path& path) {
    cv::Mat raw = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
    if (raw.empty()) throw Error(ErrorKind::Io, "cannot read mask " + path.string());
    return BinaryMask::from_raster(raw);
}

}  // namespace phenokit::mask
