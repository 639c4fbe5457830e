#pragma once

#include <filesystem>

#include <opencv2/core.hpp>

#include "phenokit/core.hpp"

namespace phenokit::mask {

// Foreground/background bitmap paired with an image of identical size.
class BinaryMask {
public:
    BinaryMask(int width, int height, bool fill = false);

    // Any single- or multi-channel 8-bit raster; values > 127 are foreground
    // (multi-channel rasters are converted to gray first).
    static BinaryMask from_raster(const cv::Mat& raster);

    int width() const noexcept { return bits_.cols; }
    int height() const noexcept { return bits_.rows; }
    ImageDims dims() const noexcept { return {width(), height()}; }

    bool at(int x, int y) const { return bits_.at<std::uint8_t>(y, x) != 0; }
    void set(int x, int y, bool value) { bits_.at<std::uint8_t>(y, x) = value ? 1 : 0; }

    // CV_8UC1 raster holding 0/1.
    const cv::Mat& bits() const noexcept { return bits_; }

private:
    explicit BinaryMask(cv::Mat bits) : bits_(std::move(bits)) {}

    cv::Mat bits_;
};

// Pixels under the mask keep their value; everything else becomes (0,0,0).
// Gray inputs are promoted to 3 channels. Throws Shape on a size mismatch.
cv::Mat apply_mask(const cv::Mat& image, const BinaryMask& mask);

// Tight box around the foreground. Throws EmptyForeground for an empty mask.
BBox mask_bbox(const BinaryMask& mask);

cv::Mat load_image(const std::filesystem::path& path);
BinaryMask load_mask(const std::filesystem::path& path);

}  // namespace phenokit::mask
