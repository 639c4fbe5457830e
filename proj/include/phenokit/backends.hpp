#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <opencv2/core.hpp>

#include "phenokit/core.hpp"
#include "phenokit/tiler.hpp"

namespace phenokit::backends {

// What a detector sees for one tile.
struct TileContext {
    std::string image_id;
    tiler::TileSpec tile;
    cv::Mat pixels;  // may be empty for backends that do not look at pixels

    std::string key() const { return tiler::tile_key(image_id, tile); }
};

// Implementations must be safe to call concurrently from several threads.
class DetectorBackend {
public:
    virtual ~DetectorBackend() = default;
    // Tile-local detections, inside the tile, confidences in [0,1].
    virtual std::vector<Detection> detect(const TileContext& tile) const = 0;
};

struct Classification {
    SeverityScore score = SeverityScore::S1;
    double confidence = 1.0;
};

class ClassifierBackend {
public:
    virtual ~ClassifierBackend() = default;
    virtual Classification classify(const ImagePair& pair) const = 0;
};

using PredictionMap = std::map<std::string, std::vector<Detection>>;

class ReplayDetector final : public DetectorBackend {
public:
    explicit ReplayDetector(PredictionMap predictions) : predictions_(std::move(predictions)) {}

    // Throws MissingPrediction for unknown tile keys.
    std::vector<Detection> detect(const TileContext& tile) const override;

private:
    PredictionMap predictions_;
};

struct PerturbConfig {
    double drop_prob = 0.0;
    double jitter_px = 0.0;
    double false_positive_rate = 0.0;  // expected false positives per tile
    std::uint64_t rng_seed = 0;

    void validate() const;
};

// Starts from tile-local ground truth and degrades it in a seeded, per-tile
// reproducible way. Surviving truth boxes get confidence 1.0; injected false
// positives get confidence in [0.05, 0.95).
class PerturbedDetector final : public DetectorBackend {
public:
    PerturbedDetector(std::map<std::string, std::vector<BBox>> truth, PerturbConfig cfg);

    std::vector<Detection> detect(const TileContext& tile) const override;

private:
    std::map<std::string, std::vector<BBox>> truth_;
    PerturbConfig cfg_;
};

struct BlobConfig {
    int intensity_threshold = 80;
    int min_area = 9;
    int max_area = 150;
    HoleClass cls = HoleClass::NoFecal;

    void validate() const;
};

// Non-ML baseline: dark 8-connected components, exact black excluded.
class BlobDetector final : public DetectorBackend {
public:
    explicit BlobDetector(BlobConfig cfg);

    std::vector<Detection> detect(const TileContext& tile) const override;

private:
    BlobConfig cfg_;
};

class ReplayClassifier final : public ClassifierBackend {
public:
    // Scores must be in {1,3,5,7}.
    explicit ReplayClassifier(std::map<std::string, Classification> predictions);

    Classification classify(const ImagePair& pair) const override;

private:
    std::map<std::string, Classification> predictions_;
};

std::unique_ptr<DetectorBackend> replay_detector(const nlohmann::json& manifest);
std::unique_ptr<DetectorBackend> perturbed_detector(std::map<std::string, std::vector<BBox>> truth,
                                                    const PerturbConfig& cfg);
std::unique_ptr<DetectorBackend> blob_detector(const BlobConfig& cfg);
std::unique_ptr<ClassifierBackend> replay_classifier(const nlohmann::json& manifest);

}  // namespace phenokit::backends
