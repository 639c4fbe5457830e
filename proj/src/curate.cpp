#include "phenokit/curate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "phenokit/error.hpp"
#include "phenokit/formats.hpp"
#include "phenokit/random.hpp"

namespace phenokit::curate {

namespace {

constexpr double kRoundingSlack = 1e-9;

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

}  // namespace

std::vector<PlotRecord> group_plots(std::span<const ManifestEntry> entries) {
    std::vector<PlotRecord> plots;
    std::map<std::string, std::size_t> index;
    for (const auto& e : entries) {
        e.image.validate();
        if (e.image.plot_id.empty()) {
            throw Error(ErrorKind::Validation, "image '" + e.image.path + "' has no plot_id");
        }
        if (!e.severity) throw Error(ErrorKind::Validation, "image '" + e.image.path + "' has no severity");

        auto [it, inserted] = index.try_emplace(e.image.plot_id, plots.size());
        if (inserted) {
            PlotRecord p;
            p.plot_id = e.image.plot_id;
            p.severity = *e.severity;
            p.metadata = e.extra;
            if (e.replication) p.metadata["replication"] = std::to_string(*e.replication);
            plots.push_back(std::move(p));
        }
        auto& plot = plots[it->second];
        if (plot.severity != *e.severity) {
            throw Error(ErrorKind::Conflict, "plot " + plot.plot_id + " is labelled both " +
                                                 std::to_string(score_value(plot.severity)) + " and " +
                                                 std::to_string(score_value(*e.severity)));
        }
        if (plot.images.size() == 2) {
            throw Error(ErrorKind::Validation, "plot " + plot.plot_id + " has more than two images");
        }
        plot.images.push_back(e.image);
    }
    return plots;
}

std::vector<PlotRecord> drop_class(std::span<const PlotRecord> plots, SeverityScore cls) {
    std::vector<PlotRecord> out;
    std::copy_if(plots.begin(), plots.end(), std::back_inserter(out),
                 [cls](const PlotRecord& p) { return p.severity != cls; });
    return out;
}

std::vector<PlotRecord> undersample(std::span<const PlotRecord> plots, SeverityScore cls, std::size_t target,
                                    std::uint64_t seed) {
    std::vector<std::size_t> duals;
    std::vector<std::size_t> singles;
    for (std::size_t i = 0; i < plots.size(); ++i) {
        if (plots[i].severity != cls) continue;
        (plots[i].images.size() >= 2 ? duals : singles).push_back(i);
    }
    const std::size_t available = duals.size() + singles.size();
    if (target > available) {
        throw Error(ErrorKind::InvalidParameter, "cannot keep " + std::to_string(target) + " plots of class " +
                                                     std::to_string(score_value(cls)) + "; only " +
                                                     std::to_string(available) + " exist");
    }

    Rng rng(derive_seed(seed, "undersample-" + std::to_string(score_value(cls))));
    std::vector<std::size_t> chosen;
    if (target <= duals.size()) {
        shuffle(duals, rng);
        chosen.assign(duals.begin(), duals.begin() + static_cast<std::ptrdiff_t>(target));
    } else {
        chosen = duals;
        shuffle(singles, rng);
        const auto fill = static_cast<std::ptrdiff_t>(target - duals.size());
        chosen.insert(chosen.end(), singles.begin(), singles.begin() + fill);
    }
    const std::set<std::size_t> keep(chosen.begin(), chosen.end());

    std::vector<PlotRecord> out;
    for (std::size_t i = 0; i < plots.size(); ++i) {
        if (plots[i].severity != cls || keep.contains(i)) out.push_back(plots[i]);
    }
    return out;
}

std::vector<std::size_t> apportion(std::span<const double> shares, std::span<const std::size_t> caps,
                                   std::size_t target) {
    if (shares.size() != caps.size()) throw Error(ErrorKind::Shape, "shares and caps differ in length");
    const std::size_t capacity = std::accumulate(caps.begin(), caps.end(), std::size_t{0});
    target = std::min(target, capacity);

    const std::size_t n = shares.size();
    std::vector<std::size_t> alloc(n);
    std::vector<double> remainder(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double fl = std::floor(shares[i] + kRoundingSlack);
        alloc[i] = std::min(static_cast<std::size_t>(std::max(0.0, fl)), caps[i]);
        remainder[i] = shares[i] - fl;
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });

    std::size_t assigned = std::accumulate(alloc.begin(), alloc.end(), std::size_t{0});
    while (assigned > target) {
        // Only reachable through floating slack: take back from the smallest remainders.
        for (auto it = order.rbegin(); it != order.rend() && assigned > target; ++it) {
            if (alloc[*it] > 0) {
                --alloc[*it];
                --assigned;
            }
        }
    }
    while (assigned < target) {
        bool progressed = false;
        for (auto i : order) {
            if (assigned == target) break;
            if (alloc[i] < caps[i]) {
                ++alloc[i];
                ++assigned;
                progressed = true;
            }
        }
        if (!progressed) break;
    }
    return alloc;
}

std::map<SeverityScore, std::size_t> class_histogram(std::span<const PlotRecord> plots) {
    std::map<SeverityScore, std::size_t> h;
    for (const auto& p : plots) ++h[p.severity];
    return h;
}

SplitManifest stratified_split(std::span<const PlotRecord> plots, const SplitRatios& ratios, std::uint64_t seed) {
    for (double r : {ratios.train, ratios.val, ratios.test}) {
        if (!(r >= 0.0 && r <= 1.0)) throw Error(ErrorKind::InvalidParameter, "split ratios must lie in [0,1]");
    }
    if (std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9) {
        throw Error(ErrorKind::InvalidParameter, "split ratios must sum to 1");
    }
    if (plots.empty()) throw Error(ErrorKind::EmptyInput, "no plots to split");
    {
        std::set<std::string> ids;
        for (const auto& p : plots) {
            if (!ids.insert(p.plot_id).second) throw Error(ErrorKind::Validation, "duplicate plot_id " + p.plot_id);
        }
    }

    std::map<SeverityScore, std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < plots.size(); ++i) members[plots[i].severity].push_back(i);

    std::vector<std::size_t> counts;
    for (const auto& [cls, idx] : members) counts.push_back(idx.size());
    const double total = static_cast<double>(plots.size());

    auto shares_for = [&](double ratio) {
        std::vector<double> s;
        for (auto c : counts) s.push_back(static_cast<double>(c) * ratio);
        return s;
    };
    auto global_target = [&](double ratio) {
        return static_cast<std::size_t>(std::max(0.0, std::ceil(total * ratio - kRoundingSlack)));
    };

    const auto test_q = apportion(shares_for(ratios.test), counts, global_target(ratios.test));
    std::vector<std::size_t> left(counts.size());
    for (std::size_t i = 0; i < counts.size(); ++i) left[i] = counts[i] - test_q[i];
    const auto val_q = apportion(shares_for(ratios.val), left, global_target(ratios.val));

    enum class Part { Train, Val, Test };
    std::vector<Part> part(plots.size(), Part::Train);
    std::size_t k = 0;
    for (auto& [cls, idx] : members) {
        auto shuffled = idx;
        Rng rng(derive_seed(seed, "split-" + std::to_string(score_value(cls))));
        shuffle(shuffled, rng);
        for (std::size_t j = 0; j < shuffled.size(); ++j) {
            if (j < test_q[k]) {
                part[shuffled[j]] = Part::Test;
            } else if (j < test_q[k] + val_q[k]) {
                part[shuffled[j]] = Part::Val;
            }
        }
        ++k;
    }

    SplitManifest m;
    m.seed = seed;
    m.ratios = ratios;
    for (std::size_t i = 0; i < plots.size(); ++i) {
        switch (part[i]) {
            case Part::Train: m.train.push_back(plots[i].plot_id); break;
            case Part::Val: m.val.push_back(plots[i].plot_id); break;
            case Part::Test: m.test.push_back(plots[i].plot_id); break;
        }
    }
    return m;
}

ImagePair make_pairs(const PlotRecord& plot) {
    if (plot.images.empty()) throw Error(ErrorKind::Validation, "plot " + plot.plot_id + " has no images");
    if (plot.images.size() > 2) throw Error(ErrorKind::Validation, "plot " + plot.plot_id + " has more than two images");

    ImagePair pair;
    pair.plot_id = plot.plot_id;
    pair.first = plot.images[0];
    if (plot.images.size() == 2) {
        pair.second = plot.images[1];
    } else {
        pair.second.width = pair.first.width;
        pair.second.height = pair.first.height;
        pair.second.plot_id = plot.plot_id;
        pair.second_is_placeholder = true;
    }
    return pair;
}

cv::Mat black_placeholder(const ImageRecord& record) {
    record.validate();
    return cv::Mat(record.height, record.width, CV_8UC3, cv::Scalar::all(0));
}

std::pair<std::string, char> parse_section_label(std::string_view label) {
    const std::string t = trim(label);
    const auto split = t.find_last_of(" \t");
    if (split == std::string::npos) {
        throw Error(ErrorKind::Validation, "label '" + std::string(label) + "' lacks a section identifier");
    }
    const std::string genotype = trim(std::string_view(t).substr(0, split));
    const std::string section = t.substr(split + 1);
    if (genotype.empty() || section.size() != 1) {
        throw Error(ErrorKind::Validation, "cannot parse genotype/section from '" + std::string(label) + "'");
    }
    const char s = static_cast<char>(std::toupper(static_cast<unsigned char>(section[0])));
    if (!is_valid_section(s)) {
        throw Error(ErrorKind::Validation, "section '" + section + "' in '" + std::string(label) + "' is outside A-D");
    }
    return {genotype, s};
}

RootDamageRecord aggregate_root_damage(std::span<const SectionDetections> sections, const RootIdentity& root) {
    RootDamageRecord rec;
    rec.genotype = root.genotype;
    rec.replication = root.replication;
    for (const auto& s : sections) {
        if (!is_valid_section(s.section)) {
            throw Error(ErrorKind::Validation, "root " + root.genotype + ": section '" + std::string(1, s.section) +
                                                   "' is outside A-D");
        }
        if (rec.per_section.contains(s.section)) {
            throw Error(ErrorKind::Validation, "root " + root.genotype + " rep " + std::to_string(root.replication) +
                                                   ": duplicate section " + std::string(1, s.section));
        }
        const auto counts = merge::count_by_class(s.detections);
        rec.per_section[s.section] = counts;
        rec.totals += counts;
    }
    return rec;
}

std::vector<RootDamageRecord> aggregate_roots(std::span<const ManifestEntry> entries,
                                              const std::map<std::string, std::vector<Detection>>& by_image) {
    struct Root {
        RootIdentity id;
        std::vector<SectionDetections> sections;
    };
    std::vector<Root> roots;
    std::map<std::pair<std::string, int>, std::size_t> index;

    for (const auto& e : entries) {
        if (e.image.genotype_id.empty() || !e.image.section || !e.replication) {
            throw Error(ErrorKind::Validation, "image '" + e.image.path + "' lacks genotype, section or replication");
        }
        const auto key = std::pair(e.image.genotype_id, *e.replication);
        auto [it, inserted] = index.try_emplace(key, roots.size());
        if (inserted) roots.push_back({{e.image.genotype_id, *e.replication}, {}});

        SectionDetections s;
        s.section = *e.image.section;
        if (const auto d = by_image.find(image_id_from_path(e.image.path)); d != by_image.end()) {
            s.detections = d->second;
        }
        roots[it->second].sections.push_back(std::move(s));
    }

    std::vector<RootDamageRecord> out;
    out.reserve(roots.size());
    for (const auto& r : roots) out.push_back(aggregate_root_damage(r.sections, r.id));
    return out;
}

std::string root_damage_csv(std::span<const RootDamageRecord> records) {
    std::ostringstream os;
    os << "genotype,replication,fecal_count,no_fecal_count,total";
    for (char s = 'A'; s <= 'D'; ++s) os << ',' << s << "_fecal," << s << "_no_fecal";
    os << '\n';
    for (const auto& r : records) {
        os << formats::csv_escape(r.genotype) << ',' << r.replication << ',' << r.totals.fecal << ','
           << r.totals.no_fecal << ',' << r.totals.total();
        for (char s = 'A'; s <= 'D'; ++s) {
            if (const auto it = r.per_section.find(s); it != r.per_section.end()) {
                os << ',' << it->second.fecal << ',' << it->second.no_fecal;
            } else {
                os << ",,";
            }
        }
        os << '\n';
    }
    return os.str();
}

}  // namespace phenokit::curate
