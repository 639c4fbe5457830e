#include "phenokit/formats.hpp"

#include <atomic>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <unistd.h>

#include "phenokit/error.hpp"

namespace phenokit::formats {

namespace {

template <typename T>
T require(const json& j, const char* key) {
    if (!j.is_object() || !j.contains(key)) throw Error(ErrorKind::Parse, std::string("missing field '") + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Parse, std::string("field '") + key + "': " + e.what());
    }
}

int parse_int(std::string_view text, std::string_view what) {
    int v = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size()) {
        throw Error(ErrorKind::Parse, std::string(what) + ": cannot parse integer '" + std::string(text) + "'");
    }
    return v;
}

}  // namespace

int CsvTable::column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == name) return static_cast<int>(i);
    }
    return -1;
}

CsvTable parse_csv(std::string_view text) {
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> row;
    std::string field;
    bool in_quotes = false;
    bool field_started = false;
    std::size_t line = 1;

    auto end_field = [&] {
        row.push_back(std::move(field));
        field.clear();
        field_started = false;
    };
    auto end_row = [&] {
        end_field();
        const bool blank = row.size() == 1 && row[0].empty();
        if (!blank) records.push_back(std::move(row));
        row.clear();
    };

    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                if (c == '\n') ++line;
                field.push_back(c);
            }
            continue;
        }
        switch (c) {
            case '"':
                if (field_started) throw Error(ErrorKind::Parse, "line " + std::to_string(line) + ": stray quote");
                in_quotes = true;
                field_started = true;
                break;
            case ',': end_field(); break;
            case '\r': break;
            case '\n':
                end_row();
                ++line;
                break;
            default:
                field.push_back(c);
                field_started = true;
        }
    }
    if (in_quotes) throw Error(ErrorKind::Parse, "unterminated quoted field");
    if (field_started || !field.empty() || !row.empty()) end_row();

    CsvTable table;
    if (records.empty()) return table;
    table.header = std::move(records.front());
    for (std::size_t r = 1; r < records.size(); ++r) {
        if (records[r].size() != table.header.size()) {
            throw Error(ErrorKind::Parse, "csv record " + std::to_string(r + 1) + " has " +
                                              std::to_string(records[r].size()) + " fields, header has " +
                                              std::to_string(table.header.size()));
        }
        table.rows.push_back(std::move(records[r]));
    }
    return table;
}

std::string csv_escape(std::string_view field) {
    if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

std::vector<curate::ManifestEntry> parse_image_manifest(std::string_view csv_text) {
    const auto table = parse_csv(csv_text);
    const int c_path = table.column("image_path");
    const int c_width = table.column("width");
    const int c_height = table.column("height");
    if (c_path < 0 || c_width < 0 || c_height < 0) {
        throw Error(ErrorKind::Validation, "image manifest needs image_path, width and height columns");
    }
    const int c_plot = table.column("plot_id");
    const int c_genotype = table.column("genotype");
    const int c_section = table.column("section");
    const int c_severity = table.column("severity");
    const int c_rep = table.column("replication");
    const int c_mask = table.column("mask_path");
    const int c_label = table.column("label");
    const std::set<int> known{c_path, c_width, c_height, c_plot, c_genotype, c_section, c_severity, c_rep, c_mask, c_label};

    std::vector<curate::ManifestEntry> out;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const auto where = "manifest row " + std::to_string(r + 2);
        auto cell = [&](int c) -> std::string { return c >= 0 ? row[static_cast<std::size_t>(c)] : std::string(); };

        curate::ManifestEntry e;
        e.image.path = cell(c_path);
        if (e.image.path.empty()) throw Error(ErrorKind::Validation, where + ": empty image_path");
        e.image.width = parse_int(cell(c_width), where);
        e.image.height = parse_int(cell(c_height), where);
        e.image.plot_id = cell(c_plot);
        e.image.genotype_id = cell(c_genotype);
        if (const auto s = cell(c_section); !s.empty()) {
            if (s.size() != 1) throw Error(ErrorKind::Validation, where + ": section must be a single letter");
            e.image.section = s[0];
        }
        if (const auto label = cell(c_label); !label.empty() && (e.image.genotype_id.empty() || !e.image.section)) {
            const auto [genotype, section] = curate::parse_section_label(label);
            if (e.image.genotype_id.empty()) e.image.genotype_id = genotype;
            if (!e.image.section) e.image.section = section;
        }
        if (const auto m = cell(c_mask); !m.empty()) e.image.mask_path = m;
        if (const auto s = cell(c_severity); !s.empty()) e.severity = severity_from_value(parse_int(s, where));
        if (const auto s = cell(c_rep); !s.empty()) e.replication = parse_int(s, where);
        for (std::size_t c = 0; c < table.header.size(); ++c) {
            if (!known.contains(static_cast<int>(c))) e.extra[table.header[c]] = row[c];
        }
        try {
            e.image.validate();
        } catch (const Error& err) {
            throw Error(err.kind(), where + ": " + err.what());
        }
        out.push_back(std::move(e));
    }
    return out;
}

std::string image_manifest_csv(std::span<const curate::ManifestEntry> entries) {
    std::set<std::string> extra;
    for (const auto& e : entries)
        for (const auto& [k, _] : e.extra) extra.insert(k);

    std::ostringstream os;
    os << "image_path,width,height,plot_id,genotype,section,severity,replication,mask_path";
    for (const auto& k : extra) os << ',' << csv_escape(k);
    os << '\n';
    for (const auto& e : entries) {
        const auto& img = e.image;
        os << csv_escape(img.path) << ',' << img.width << ',' << img.height << ',' << csv_escape(img.plot_id) << ','
           << csv_escape(img.genotype_id) << ',' << (img.section ? std::string(1, *img.section) : "") << ','
           << (e.severity ? std::to_string(score_value(*e.severity)) : "") << ','
           << (e.replication ? std::to_string(*e.replication) : "") << ',' << csv_escape(img.mask_path.value_or(""));
        for (const auto& k : extra) {
            const auto it = e.extra.find(k);
            os << ',' << (it == e.extra.end() ? "" : csv_escape(it->second));
        }
        os << '\n';
    }
    return os.str();
}

json detection_to_json(const Detection& d) {
    json j{{"class", d.class_id()},
           {"confidence", d.confidence()},
           {"x_min", d.box().x_min()},
           {"y_min", d.box().y_min()},
           {"x_max", d.box().x_max()},
           {"y_max", d.box().y_max()}};
    if (d.box_score()) j["box_score"] = *d.box_score();
    return j;
}

Detection detection_from_json(const json& j) {
    const BBox box(require<double>(j, "x_min"), require<double>(j, "y_min"), require<double>(j, "x_max"),
                   require<double>(j, "y_max"), require<int>(j, "class"));
    std::optional<double> box_score;
    if (j.contains("box_score") && !j.at("box_score").is_null()) box_score = require<double>(j, "box_score");
    return Detection(box, require<double>(j, "confidence"), box_score);
}

json merged_to_json(std::span<const MergedDetection> dets) {
    json arr = json::array();
    for (const auto& m : dets) {
        json j = detection_to_json(m.detection);
        j["image"] = m.image;
        arr.push_back(std::move(j));
    }
    return arr;
}

std::vector<MergedDetection> merged_from_json(const json& j) {
    if (!j.is_array()) throw Error(ErrorKind::Parse, "merged detections must be a JSON array");
    std::vector<MergedDetection> out;
    for (const auto& e : j) out.push_back({require<std::string>(e, "image"), detection_from_json(e)});
    return out;
}

std::map<std::string, std::vector<BBox>> truth_from_json(const json& j) {
    if (!j.is_array()) throw Error(ErrorKind::Parse, "ground truth must be a JSON array");
    std::map<std::string, std::vector<BBox>> out;
    for (const auto& e : j) {
        out[require<std::string>(e, "image")].emplace_back(require<double>(e, "x_min"), require<double>(e, "y_min"),
                                                           require<double>(e, "x_max"), require<double>(e, "y_max"),
                                                           require<int>(e, "class"));
    }
    return out;
}

json predictions_to_json(const backends::PredictionMap& predictions) {
    json obj = json::object();
    for (const auto& [key, dets] : predictions) {
        json arr = json::array();
        for (const auto& d : dets) arr.push_back(detection_to_json(d));
        obj[key] = std::move(arr);
    }
    return obj;
}

backends::PredictionMap predictions_from_json(const json& j) {
    if (!j.is_object()) throw Error(ErrorKind::Parse, "prediction manifest must be a JSON object");
    backends::PredictionMap out;
    for (const auto& [key, arr] : j.items()) {
        if (!arr.is_array()) throw Error(ErrorKind::Parse, "predictions for " + key + " must be an array");
        auto& list = out[key];
        for (const auto& d : arr) list.push_back(detection_from_json(d));
    }
    return out;
}

std::map<std::string, backends::Classification> classifications_from_json(const json& j) {
    if (!j.is_object()) throw Error(ErrorKind::Parse, "classification manifest must be a JSON object");
    std::map<std::string, backends::Classification> out;
    for (const auto& [plot, v] : j.items()) {
        backends::Classification c;
        if (v.is_number_integer()) {
            c.score = severity_from_value(v.get<int>());
        } else if (v.is_object()) {
            c.score = severity_from_value(require<int>(v, "score"));
            if (v.contains("confidence")) c.confidence = require<double>(v, "confidence");
        } else {
            throw Error(ErrorKind::Parse, "prediction for plot " + plot + " must be a score or {score, confidence}");
        }
        out.emplace(plot, c);
    }
    return out;
}

json tile_manifest_to_json(std::span<const TileManifestEntry> entries) {
    json arr = json::array();
    for (const auto& e : entries) {
        arr.push_back({{"source_image", e.source_image},
                       {"row", e.tile.row},
                       {"col", e.tile.col},
                       {"ox", e.tile.ox},
                       {"oy", e.tile.oy},
                       {"w", e.tile.width},
                       {"h", e.tile.height},
                       {"tile_path", e.tile_path},
                       {"label_path", e.label_path ? json(*e.label_path) : json(nullptr)}});
    }
    return arr;
}

std::vector<TileManifestEntry> tile_manifest_from_json(const json& j) {
    if (!j.is_array()) throw Error(ErrorKind::Parse, "tile manifest must be a JSON array");
    std::vector<TileManifestEntry> out;
    for (const auto& e : j) {
        TileManifestEntry t;
        t.source_image = require<std::string>(e, "source_image");
        t.tile = {require<int>(e, "row"), require<int>(e, "col"), require<int>(e, "ox"),
                  require<int>(e, "oy"),  require<int>(e, "w"),   require<int>(e, "h")};
        if (t.tile.width <= 0 || t.tile.height <= 0 || t.tile.ox < 0 || t.tile.oy < 0) {
            throw Error(ErrorKind::Validation, "tile manifest entry for " + t.source_image + " has a bad extent");
        }
        t.tile_path = require<std::string>(e, "tile_path");
        if (e.contains("label_path") && !e.at("label_path").is_null()) t.label_path = require<std::string>(e, "label_path");
        out.push_back(std::move(t));
    }
    return out;
}

json plots_to_json(std::span<const curate::PlotRecord> plots) {
    json arr = json::array();
    for (const auto& p : plots) {
        json images = json::array();
        for (const auto& im : p.images) {
            json ij{{"path", im.path}, {"width", im.width}, {"height", im.height}};
            if (im.mask_path) ij["mask_path"] = *im.mask_path;
            images.push_back(std::move(ij));
        }
        arr.push_back({{"plot_id", p.plot_id},
                       {"severity", score_value(p.severity)},
                       {"images", std::move(images)},
                       {"metadata", p.metadata}});
    }
    return arr;
}

std::vector<curate::PlotRecord> plots_from_json(const json& j) {
    if (!j.is_array()) throw Error(ErrorKind::Parse, "plot list must be a JSON array");
    std::vector<curate::PlotRecord> out;
    for (const auto& e : j) {
        curate::PlotRecord p;
        p.plot_id = require<std::string>(e, "plot_id");
        p.severity = severity_from_value(require<int>(e, "severity"));
        for (const auto& ij : require<json>(e, "images")) {
            ImageRecord im;
            im.path = require<std::string>(ij, "path");
            im.width = require<int>(ij, "width");
            im.height = require<int>(ij, "height");
            im.plot_id = p.plot_id;
            if (ij.contains("mask_path")) im.mask_path = require<std::string>(ij, "mask_path");
            im.validate();
            p.images.push_back(std::move(im));
        }
        if (p.images.empty() || p.images.size() > 2) {
            throw Error(ErrorKind::Validation, "plot " + p.plot_id + " must hold one or two images");
        }
        if (e.contains("metadata")) p.metadata = require<std::map<std::string, std::string>>(e, "metadata");
        out.push_back(std::move(p));
    }
    return out;
}

json split_to_json(const curate::SplitManifest& split) {
    return {{"seed", split.seed},
            {"ratios", {{"train", split.ratios.train}, {"val", split.ratios.val}, {"test", split.ratios.test}}},
            {"train", split.train},
            {"val", split.val},
            {"test", split.test}};
}

curate::SplitManifest split_from_json(const json& j) {
    curate::SplitManifest m;
    m.seed = require<std::uint64_t>(j, "seed");
    const auto r = require<json>(j, "ratios");
    m.ratios = {require<double>(r, "train"), require<double>(r, "val"), require<double>(r, "test")};
    m.train = require<std::vector<std::string>>(j, "train");
    m.val = require<std::vector<std::string>>(j, "val");
    m.test = require<std::vector<std::string>>(j, "test");
    return m;
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

json read_json_file(const std::filesystem::path& path) {
    const auto text = read_text_file(path);
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error(ErrorKind::Parse, path.string() + ": " + e.what());
    }
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
    static std::atomic<unsigned> counter{0};
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp-" + std::to_string(::getpid()) + "-" + std::to_string(counter.fetch_add(1));
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorKind::Io, "cannot write " + tmp.string());
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        out.flush();
        if (!out) {
            std::error_code ec;
            std::filesystem::remove(tmp, ec);
            throw Error(ErrorKind::Io, "short write to " + tmp.string());
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw Error(ErrorKind::Io, "cannot move output into place at " + path.string());
    }
}

std::string fixed6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

}  // namespace phenokit::formats
