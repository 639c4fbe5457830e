#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "phenokit/core.hpp"

namespace phenokit::metrics {

// ---------------------------------------------------------------------------
// Severity classification
// ---------------------------------------------------------------------------

class ConfusionMatrix {
public:
    explicit ConfusionMatrix(std::vector<SeverityScore> classes);

    const std::vector<SeverityScore>& classes() const noexcept { return classes_; }
    std::size_t size() const noexcept { return classes_.size(); }

    // counts[truth][predicted]; throws Validation for labels outside the class list.
    long at(SeverityScore truth, SeverityScore predicted) const;
    long at_index(std::size_t truth, std::size_t predicted) const { return counts_[truth][predicted]; }
    void add(SeverityScore truth, SeverityScore predicted, long n = 1);

    long row_sum(std::size_t truth) const;
    long col_sum(std::size_t predicted) const;
    long trace() const;
    long total() const;

    std::size_t index_of(SeverityScore s) const;

private:
    std::vector<SeverityScore> classes_;
    std::vector<std::vector<long>> counts_;
};

using LabelPair = std::pair<SeverityScore, SeverityScore>;  // (truth, predicted)

ConfusionMatrix confusion_matrix(std::span<const LabelPair> samples, std::vector<SeverityScore> classes);

struct ClassMetrics {
    SeverityScore label = SeverityScore::S1;
    double precision = 0;
    double recall = 0;
    double f1 = 0;
    long support = 0;
    // A zero denominator was hit; the affected metric is reported as 0.
    bool degenerate = false;
};

struct ClassReport {
    std::vector<ClassMetrics> per_class;
    double accuracy = 0;
    long total = 0;
};

// Throws EmptyInput when the matrix holds no samples.
ClassReport class_report(const ConfusionMatrix& cm);

// Harmonic mean; 0 when both inputs are 0.
double f1_score(double precision, double recall) noexcept;

// ---------------------------------------------------------------------------
// Detection
// ---------------------------------------------------------------------------

struct MatchResult {
    std::vector<std::size_t> order;     // prediction indices in processing order
    std::vector<bool> pred_tp;          // indexed like the input predictions
    std::vector<int> matched_gt;        // per prediction, -1 when unmatched
    std::vector<bool> gt_matched;       // indexed like the input ground truth

    // TP flags in processing (confidence-descending) order.
    std::vector<bool> ordered_flags() const;
};

// Greedy PASCAL-style matching: predictions in confidence-descending order
// (stable), each taking the unmatched same-class ground truth with highest IoU
// when that IoU reaches iou_thresh. Equal IoUs go to the earlier ground truth.
MatchResult match_detections(std::span<const Detection> preds, std::span<const BBox> gts,
                             double iou_thresh = 0.5);

struct ApResult {
    double ap = 0;
    bool defined = true;  // false when there is no ground truth
};

// All-point interpolated AP over a confidence-ordered TP/FP sequence.
ApResult average_precision(std::span<const bool> flags, std::size_t n_gt);
// std::vector<bool> has no contiguous storage, so accept it directly too.
ApResult average_precision(const std::vector<bool>& flags, std::size_t n_gt);

// Unweighted mean over classes with a defined AP. Throws EmptyInput otherwise.
double map50(std::span<const ApResult> per_class);
double map50(std::span<const double> per_class);

struct ImageEvaluation {
    std::string image;
    std::vector<Detection> predictions;
    std::vector<BBox> truth;
};

struct DetectionClassMetrics {
    int class_id = 0;
    double precision = 0;
    double recall = 0;
    ApResult ap;
    std::size_t n_gt = 0;
    std::size_t n_pred = 0;
    std::size_t tp = 0;
    bool degenerate = false;
};

struct DetectionReport {
    std::vector<DetectionClassMetrics> per_class;
    // Unweighted class means, the "All" row.
    double precision = 0;
    double recall = 0;
    double map50 = 0;
};

// Matches each image independently, then ranks all predictions of a class by
// confidence across images before integrating AP.
DetectionReport evaluate_detections(std::span<const ImageEvaluation> images, std::span<const int> class_ids,
                                    double iou_thresh = 0.5);

// CSV / JSON report layouts.
std::string class_report_csv(const ClassReport& report);
std::string detection_report_csv(const DetectionReport& report);

}  // namespace phenokit::metrics
