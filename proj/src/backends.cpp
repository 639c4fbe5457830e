#include "phenokit/backends.hpp"

#include <algorithm>

#include <opencv2/imgproc.hpp>

#include "phenokit/error.hpp"
#include "phenokit/formats.hpp"
#include "phenokit/random.hpp"

namespace phenokit::backends {

namespace {

constexpr double kEdgeSlack = 1e-9;

void check_inside(const Detection& d, const tiler::TileSpec& tile, const std::string& key) {
    if (d.box().x_max() > tile.width + kEdgeSlack || d.box().y_max() > tile.height + kEdgeSlack) {
        throw Error(ErrorKind::OutOfBounds, "stored detection for " + key + " exceeds the tile");
    }
}

}  // namespace

std::vector<Detection> ReplayDetector::detect(const TileContext& tile) const {
    const auto key = tile.key();
    const auto it = predictions_.find(key);
    if (it == predictions_.end()) throw Error(ErrorKind::MissingPrediction, "no stored predictions for " + key);
    for (const auto& d : it->second) check_inside(d, tile.tile, key);
    return it->second;
}

void PerturbConfig::validate() const {
    if (!(drop_prob >= 0.0 && drop_prob <= 1.0)) throw Error(ErrorKind::InvalidParameter, "drop_prob must lie in [0,1]");
    if (!(jitter_px >= 0.0)) throw Error(ErrorKind::InvalidParameter, "jitter_px must be non-negative");
    if (!(false_positive_rate >= 0.0)) {
        throw Error(ErrorKind::InvalidParameter, "false_positive_rate must be non-negative");
    }
}

PerturbedDetector::PerturbedDetector(std::map<std::string, std::vector<BBox>> truth, PerturbConfig cfg)
    : truth_(std::move(truth)), cfg_(cfg) {
    cfg_.validate();
}

std::vector<Detection> PerturbedDetector::detect(const TileContext& tile) const {
    const auto key = tile.key();
    const double w = tile.tile.width;
    const double h = tile.tile.height;
    Rng rng(derive_seed(cfg_.rng_seed, key));

    std::vector<Detection> out;
    if (const auto it = truth_.find(key); it != truth_.end()) {
        for (const auto& b : it->second) {
            if (rng.bernoulli(cfg_.drop_prob)) continue;
            if (cfg_.jitter_px <= 0) {
                out.emplace_back(b, 1.0);
                continue;
            }
            const double dx = std::clamp(rng.uniform(-cfg_.jitter_px, cfg_.jitter_px), -b.x_min(), w - b.x_max());
            const double dy = std::clamp(rng.uniform(-cfg_.jitter_px, cfg_.jitter_px), -b.y_min(), h - b.y_max());
            out.emplace_back(b.translated(dx, dy), 1.0);
        }
    }

    const int n_fp = rng.poisson(cfg_.false_positive_rate);
    for (int i = 0; i < n_fp; ++i) {
        const double side = std::min({rng.uniform(8.0, 48.0), w, h});
        const double x = rng.uniform(0.0, w - side);
        const double y = rng.uniform(0.0, h - side);
        const int cls = static_cast<int>(rng.below(2));
        const double conf = rng.uniform(0.05, 0.95);
        out.emplace_back(BBox(x, y, x + side, y + side, cls), conf);
    }
    return out;
}

void BlobConfig::validate() const {
    if (intensity_threshold < 0 || intensity_threshold > 255) {
        throw Error(ErrorKind::InvalidParameter, "intensity threshold must lie in [0,255]");
    }
    if (min_area < 1 || !(min_area < max_area)) {
        throw Error(ErrorKind::InvalidParameter, "blob areas must satisfy 1 <= min_area < max_area");
    }
}

BlobDetector::BlobDetector(BlobConfig cfg) : cfg_(cfg) { cfg_.validate(); }

std::vector<Detection> BlobDetector::detect(const TileContext& tile) const {
    const cv::Mat& px = tile.pixels;
    if (px.empty()) throw Error(ErrorKind::Validation, "blob detector needs tile pixels for " + tile.key());

    cv::Mat gray;
    cv::Mat background;  // exact-black mask fill
    if (px.type() == CV_8UC3) {
        cv::cvtColor(px, gray, cv::COLOR_BGR2GRAY);
        cv::inRange(px, cv::Scalar(0, 0, 0), cv::Scalar(0, 0, 0), background);
    } else if (px.type() == CV_8UC1) {
        gray = px;
        cv::inRange(px, cv::Scalar(0), cv::Scalar(0), background);
    } else {
        throw Error(ErrorKind::Validation, "blob detector expects 8-bit gray or BGR tiles");
    }

    cv::Mat dark;
    cv::inRange(gray, cv::Scalar(0), cv::Scalar(cfg_.intensity_threshold - 1), dark);
    if (cfg_.intensity_threshold == 0) dark.setTo(0);
    dark.setTo(0, background);

    cv::Mat labels, stats, centroids;
    const int n = cv::connectedComponentsWithStats(dark, labels, stats, centroids, 8, CV_32S);

    std::vector<Detection> out;
    for (int i = 1; i < n; ++i) {
        const int area = stats.at<int>(i, cv::CC_STAT_AREA);
        if (area < cfg_.min_area || area > cfg_.max_area) continue;
        const int x = stats.at<int>(i, cv::CC_STAT_LEFT);
        const int y = stats.at<int>(i, cv::CC_STAT_TOP);
        const int bw = stats.at<int>(i, cv::CC_STAT_WIDTH);
        const int bh = stats.at<int>(i, cv::CC_STAT_HEIGHT);
        const double conf = std::clamp(static_cast<double>(area) / cfg_.max_area, 0.5, 1.0);
        out.emplace_back(BBox(x, y, x + bw, y + bh, class_id(cfg_.cls)), conf);
    }
    return out;
}

ReplayClassifier::ReplayClassifier(std::map<std::string, Classification> predictions)
    : predictions_(std::move(predictions)) {
    for (const auto& [plot, c] : predictions_) {
        if (c.score == SeverityScore::S9) {
            throw Error(ErrorKind::Validation, "plot " + plot + ": score 9 is not a field classification target");
        }
        if (!(c.confidence >= 0.0 && c.confidence <= 1.0)) {
            throw Error(ErrorKind::Validation, "plot " + plot + ": confidence outside [0,1]");
        }
    }
}

Classification ReplayClassifier::classify(const ImagePair& pair) const {
    const auto it = predictions_.find(pair.plot_id);
    if (it == predictions_.end()) throw Error(ErrorKind::MissingPrediction, "no stored score for plot " + pair.plot_id);
    return it->second;
}

std::unique_ptr<DetectorBackend> replay_detector(const nlohmann::json& manifest) {
    return std::make_unique<ReplayDetector>(formats::predictions_from_json(manifest));
}

std::unique_ptr<DetectorBackend> perturbed_detector(std::map<std::string, std::vector<BBox>> truth,
                                                    const PerturbConfig& cfg) {
    return std::make_unique<PerturbedDetector>(std::move(truth), cfg);
}

std::unique_ptr<DetectorBackend> blob_detector(const BlobConfig& cfg) { return std::make_unique<BlobDetector>(cfg); }

std::unique_ptr<ClassifierBackend> replay_classifier(const nlohmann::json& manifest) {
    return std::make_unique<ReplayClassifier>(formats::classifications_from_json(manifest));
}

}  // namespace phenokit::backends
