#include "phenokit/metrics.hpp"

#include <algorithm>
#include <map>
#include <memory>
#include <numeric>
#include <sstream>

#include "phenokit/error.hpp"
#include "phenokit/formats.hpp"

namespace phenokit::metrics {

ConfusionMatrix::ConfusionMatrix(std::vector<SeverityScore> classes) : classes_(std::move(classes)) {
    if (classes_.empty()) throw Error(ErrorKind::EmptyInput, "confusion matrix needs at least one class");
    for (std::size_t i = 0; i < classes_.size(); ++i) {
        for (std::size_t j = i + 1; j < classes_.size(); ++j) {
            if (classes_[i] == classes_[j]) throw Error(ErrorKind::Validation, "duplicate class in class list");
        }
    }
    counts_.assign(classes_.size(), std::vector<long>(classes_.size(), 0));
}

std::size_t ConfusionMatrix::index_of(SeverityScore s) const {
    const auto it = std::find(classes_.begin(), classes_.end(), s);
    if (it == classes_.end()) {
        throw Error(ErrorKind::Validation, "label " + std::to_string(score_value(s)) + " is not in the class list");
    }
    return static_cast<std::size_t>(it - classes_.begin());
}

long ConfusionMatrix::at(SeverityScore truth, SeverityScore predicted) const {
    return counts_[index_of(truth)][index_of(predicted)];
}

void ConfusionMatrix::add(SeverityScore truth, SeverityScore predicted, long n) {
    if (n < 0) throw Error(ErrorKind::Validation, "negative count");
    counts_[index_of(truth)][index_of(predicted)] += n;
}

long ConfusionMatrix::row_sum(std::size_t truth) const {
    return std::accumulate(counts_[truth].begin(), counts_[truth].end(), 0L);
}

long ConfusionMatrix::col_sum(std::size_t predicted) const {
    long s = 0;
    for (const auto& row : counts_) s += row[predicted];
    return s;
}

long ConfusionMatrix::trace() const {
    long s = 0;
    for (std::size_t i = 0; i < counts_.size(); ++i) s += counts_[i][i];
    return s;
}

long ConfusionMatrix::total() const {
    long s = 0;
    for (std::size_t i = 0; i < counts_.size(); ++i) s += row_sum(i);
    return s;
}

ConfusionMatrix confusion_matrix(std::span<const LabelPair> samples, std::vector<SeverityScore> classes) {
    ConfusionMatrix cm(std::move(classes));
    for (const auto& [truth, predicted] : samples) cm.add(truth, predicted);
    return cm;
}

double f1_score(double precision, double recall) noexcept {
    if (precision + recall <= 0) return 0.0;
    return 2.0 * precision * recall / (precision + recall);
}

ClassReport class_report(const ConfusionMatrix& cm) {
    ClassReport report;
    report.total = cm.total();
    if (report.total == 0) throw Error(ErrorKind::EmptyInput, "confusion matrix holds no samples");

    for (std::size_t i = 0; i < cm.size(); ++i) {
        ClassMetrics m;
        m.label = cm.classes()[i];
        const long tp = cm.at_index(i, i);
        const long predicted = cm.col_sum(i);
        m.support = cm.row_sum(i);
        if (predicted > 0) {
            m.precision = static_cast<double>(tp) / predicted;
        } else {
            m.degenerate = true;
        }
        if (m.support > 0) {
            m.recall = static_cast<double>(tp) / m.support;
        } else {
            m.degenerate = true;
        }
        if (m.precision + m.recall > 0) {
            m.f1 = f1_score(m.precision, m.recall);
        } else {
            m.degenerate = true;
        }
        report.per_class.push_back(m);
    }
    report.accuracy = static_cast<double>(cm.trace()) / report.total;
    return report;
}

std::vector<bool> MatchResult::ordered_flags() const {
    std::vector<bool> flags;
    flags.reserve(order.size());
    for (auto i : order) flags.push_back(pred_tp[i]);
    return flags;
}

MatchResult match_detections(std::span<const Detection> preds, std::span<const BBox> gts, double iou_thresh) {
    if (!(iou_thresh > 0.0 && iou_thresh <= 1.0)) {
        throw Error(ErrorKind::InvalidParameter, "IoU threshold must lie in (0,1]");
    }
    MatchResult r;
    r.order.resize(preds.size());
    std::iota(r.order.begin(), r.order.end(), std::size_t{0});
    std::stable_sort(r.order.begin(), r.order.end(),
                     [&](std::size_t a, std::size_t b) { return preds[a].confidence() > preds[b].confidence(); });
    r.pred_tp.assign(preds.size(), false);
    r.matched_gt.assign(preds.size(), -1);
    r.gt_matched.assign(gts.size(), false);

    for (auto pi : r.order) {
        const auto& p = preds[pi];
        double best = -1.0;
        int best_gt = -1;
        for (std::size_t g = 0; g < gts.size(); ++g) {
            if (r.gt_matched[g] || gts[g].class_id() != p.class_id()) continue;
            const double o = iou(p.box(), gts[g]);
            if (o > best) {
                best = o;
                best_gt = static_cast<int>(g);
            }
        }
        if (best_gt >= 0 && best >= iou_thresh) {
            r.pred_tp[pi] = true;
            r.matched_gt[pi] = best_gt;
            r.gt_matched[static_cast<std::size_t>(best_gt)] = true;
        }
    }
    return r;
}

ApResult average_precision(std::span<const bool> flags, std::size_t n_gt) {
    if (n_gt == 0) return {0.0, false};

    // Recall/precision after each prediction, bracketed by sentinels.
    std::vector<double> rec{0.0};
    std::vector<double> prec{0.0};
    std::size_t tp = 0;
    for (std::size_t i = 0; i < flags.size(); ++i) {
        if (flags[i]) ++tp;
        rec.push_back(static_cast<double>(tp) / static_cast<double>(n_gt));
        prec.push_back(static_cast<double>(tp) / static_cast<double>(i + 1));
    }
    rec.push_back(1.0);
    prec.push_back(0.0);

    for (std::size_t i = prec.size() - 1; i > 0; --i) prec[i - 1] = std::max(prec[i - 1], prec[i]);

    double ap = 0.0;
    for (std::size_t i = 1; i < rec.size(); ++i) {
        if (rec[i] != rec[i - 1]) ap += (rec[i] - rec[i - 1]) * prec[i];
    }
    return {ap, true};
}

ApResult average_precision(const std::vector<bool>& flags, std::size_t n_gt) {
    const std::unique_ptr<bool[]> buf(new bool[flags.size()]);
    std::copy(flags.begin(), flags.end(), buf.get());
    return average_precision(std::span<const bool>(buf.get(), flags.size()), n_gt);
}

double map50(std::span<const ApResult> per_class) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& r : per_class) {
        if (!r.defined) continue;
        sum += r.ap;
        ++n;
    }
    if (n == 0) throw Error(ErrorKind::EmptyInput, "no class has a defined AP");
    return sum / static_cast<double>(n);
}

double map50(std::span<const double> per_class) {
    std::vector<ApResult> r;
    r.reserve(per_class.size());
    for (double ap : per_class) r.push_back({ap, true});
    return map50(r);
}

DetectionReport evaluate_detections(std::span<const ImageEvaluation> images, std::span<const int> class_ids,
                                    double iou_thresh) {
    struct Ranked {
        double confidence;
        bool tp;
    };
    std::map<int, std::vector<Ranked>> ranked;
    std::map<int, std::size_t> n_gt;
    for (int c : class_ids) {
        ranked[c];
        n_gt[c] = 0;
    }

    for (const auto& img : images) {
        const auto m = match_detections(img.predictions, img.truth, iou_thresh);
        for (auto pi : m.order) {
            const auto& p = img.predictions[pi];
            const auto it = ranked.find(p.class_id());
            if (it == ranked.end()) continue;
            it->second.push_back({p.confidence(), m.pred_tp[pi]});
        }
        for (const auto& g : img.truth) {
            if (const auto it = n_gt.find(g.class_id()); it != n_gt.end()) ++it->second;
        }
    }

    DetectionReport report;
    std::vector<ApResult> aps;
    for (int c : class_ids) {
        auto& list = ranked[c];
        std::stable_sort(list.begin(), list.end(),
                         [](const Ranked& a, const Ranked& b) { return a.confidence > b.confidence; });
        std::vector<bool> flags;
        for (const auto& r : list) flags.push_back(r.tp);

        DetectionClassMetrics m;
        m.class_id = c;
        m.n_gt = n_gt[c];
        m.n_pred = flags.size();
        m.tp = static_cast<std::size_t>(std::count(flags.begin(), flags.end(), true));
        if (m.n_pred > 0) {
            m.precision = static_cast<double>(m.tp) / static_cast<double>(m.n_pred);
        } else {
            m.degenerate = true;
        }
        if (m.n_gt > 0) {
            m.recall = static_cast<double>(m.tp) / static_cast<double>(m.n_gt);
        } else {
            m.degenerate = true;
        }
        m.ap = average_precision(flags, m.n_gt);
        aps.push_back(m.ap);
        report.per_class.push_back(m);
    }

    if (!report.per_class.empty()) {
        for (const auto& m : report.per_class) {
            report.precision += m.precision;
            report.recall += m.recall;
        }
        report.precision /= static_cast<double>(report.per_class.size());
        report.recall /= static_cast<double>(report.per_class.size());
    }
    report.map50 = map50(aps);
    return report;
}

std::string class_report_csv(const ClassReport& report) {
    using formats::fixed6;
    std::ostringstream os;
    os << "class,precision,recall,f1,support\n";
    for (const auto& m : report.per_class) {
        os << score_value(m.label) << ',' << fixed6(m.precision) << ',' << fixed6(m.recall) << ','
           << fixed6(m.f1) << ',' << m.support << '\n';
    }
    os << "accuracy,,," << fixed6(report.accuracy) << ',' << report.total << '\n';
    return os.str();
}

std::string detection_report_csv(const DetectionReport& report) {
    using formats::fixed6;
    std::ostringstream os;
    os << "class,precision,recall,map50\n";
    os << "All," << fixed6(report.precision) << ',' << fixed6(report.recall) << ',' << fixed6(report.map50) << '\n';
    for (const auto& m : report.per_class) {
        std::string name = std::to_string(m.class_id);
        if (m.class_id == 0 || m.class_id == 1) name = std::string(display_name(hole_class_from_id(m.class_id)));
        os << name << ',' << fixed6(m.precision) << ',' << fixed6(m.recall) << ','
           << (m.ap.defined ? fixed6(m.ap.ap) : std::string()) << '\n';
    }
    return os.str();
}

}  // namespace phenokit::metrics
