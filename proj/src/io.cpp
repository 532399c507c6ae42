#include "twb/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"
#include "twb/dist_core.hpp"

namespace twb {

namespace {

using nlohmann::json;

// shortest round-trip decimal form, locale independent
std::string double_str(double v) {
    char buf[40];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open " + path);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ParseError("cannot open " + path + " for writing");
    out << bytes;
    if (!out) throw ParseError("write to " + path + " failed");
}

json parse_json_file(const std::string& path) {
    std::string bytes = read_file(path);
    try {
        return json::parse(bytes);
    } catch (const json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
}

void check_schema(const json& j, const std::string& path) {
    if (!j.is_object() || !j.contains("schema"))
        throw SchemaError(path + ": missing schema field, expected \"" + kSchema + "\"");
    std::string found = j["schema"].is_string() ? j["schema"].get<std::string>() : j["schema"].dump();
    if (found != kSchema)
        throw SchemaError(path + ": schema version mismatch, expected \"" + kSchema +
                          "\", found \"" + found + "\"");
}

double require_number(const json& j, const char* key, const std::string& path) {
    if (!j.contains(key) || !j[key].is_number())
        throw ParseError(path + ": missing or non-numeric field '" + key + "'");
    return j[key].get<double>();
}

json model_to_json(const TwbModel& m) {
    return json{{"mu_p", m.paired.mu}, {"b_p", m.paired.b},   {"mu_s", m.noise_s.mu},
                {"b_s", m.noise_s.b},  {"mu_i", m.noise_i.mu}, {"b_i", m.noise_i.b},
                {"eta_s", m.eta_s},    {"eta_i", m.eta_i}};
}

TwbModel model_from_json(const json& j, const std::string& path) {
    TwbModel m;
    m.paired.mu = require_number(j, "mu_p", path);
    m.paired.b = require_number(j, "b_p", path);
    m.noise_s.mu = require_number(j, "mu_s", path);
    m.noise_s.b = require_number(j, "b_s", path);
    m.noise_i.mu = require_number(j, "mu_i", path);
    m.noise_i.b = require_number(j, "b_i", path);
    m.eta_s = require_number(j, "eta_s", path);
    m.eta_i = require_number(j, "eta_i", path);
    validate(m);
    return m;
}

json derived_to_json(const DerivedStats& d) {
    return json{{"photon_covariance", d.photon_covariance},
                {"photon_R", d.photon_R},
                {"pairing_fraction", d.pairing_fraction},
                {"diagonal_weight", d.diagonal_weight},
                {"mean_pairs", d.mean_pairs}};
}

json reconstruction_to_json(const ReconstructionResult& r) {
    return json{{"model", model_to_json(r.model)},
                {"residual", r.residual},
                {"converged", r.converged},
                {"noise_s_flagged", r.noise_s_flagged},
                {"noise_i_flagged", r.noise_i_flagged},
                {"eta_difference", r.eta_difference},
                {"derived", derived_to_json(r.derived)}};
}

const char* verdict_name(Verdict v) {
    switch (v) {
        case Verdict::classical: return "classical";
        case Verdict::nonclassical: return "nonclassical";
        default: return "inconclusive";
    }
}

json criteria_to_json(const CriteriaReport& r) {
    return json{{"mean_s", r.mean_s},
                {"mean_i", r.mean_i},
                {"C", r.C},
                {"R", r.R},
                {"R_theory", r.R_theory},
                {"S", r.S},
                {"H", r.H},
                {"fano_s", r.fano_s},
                {"fano_i", r.fano_i},
                {"mu_est_s", r.mu_est_s},
                {"mu_est_i", r.mu_est_i},
                {"eta_est", r.eta_est},
                {"flags",
                 json{{"R", verdict_name(r.flags.r)},
                      {"S", verdict_name(r.flags.s)},
                      {"H", verdict_name(r.flags.h)}}},
                {"se_C", r.se_C},
                {"se_R", r.se_R},
                {"se_S", r.se_S},
                {"se_H", r.se_H},
                {"notes", r.notes}};
}

// counts are conceptually integers; doubles only stand in for scaled tables
json count_to_json(double c) {
    if (std::floor(c) == c && std::abs(c) < 9.007199254740992e15)
        return json(static_cast<std::int64_t>(c));
    return json(c);
}

} // namespace

std::string fnv1a64_hex(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    static const char* digits = "0123456789abcdef";
    for (int i = 15; i >= 0; --i) {
        buf[i] = digits[h & 0xf];
        h >>= 4;
    }
    buf[16] = '\0';
    return std::string(buf, 16);
}

std::string fnv1a64_file(const std::string& path) { return fnv1a64_hex(read_file(path)); }

namespace {

// strict nonnegative integer token; distinguishes malformed from out-of-domain
std::uint32_t parse_count(const std::string& tok, const std::string& path, std::size_t line) {
    std::string where = path + ":" + std::to_string(line);
    if (tok.empty()) throw ParseError(where + ": empty count field");
    std::size_t start = 0;
    if (tok[0] == '-') {
        if (tok.size() > 1 && std::all_of(tok.begin() + 1, tok.end(),
                                          [](char c) { return c >= '0' && c <= '9'; }))
            throw ValidationError(where + ": negative count '" + tok + "'");
        throw ParseError(where + ": malformed count '" + tok + "'");
    }
    bool digits = std::all_of(tok.begin() + start, tok.end(),
                              [](char c) { return c >= '0' && c <= '9'; });
    if (!digits) {
        // a well-formed decimal number that is not an integer is a domain
        // problem, not a syntax problem
        char* end = nullptr;
        double v = std::strtod(tok.c_str(), &end);
        if (end == tok.c_str() + tok.size() && std::isfinite(v))
            throw ValidationError(where + ": non-integer count '" + tok + "'");
        throw ParseError(where + ": malformed count '" + tok + "'");
    }
    std::uint32_t value = 0;
    auto res = std::from_chars(tok.data(), tok.data() + tok.size(), value);
    if (res.ec != std::errc() || res.ptr != tok.data() + tok.size())
        throw ValidationError(where + ": count '" + tok + "' out of range");
    return value;
}

} // namespace

std::vector<ShotRecord> load_shots(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open " + path);
    std::string line;
    std::size_t lineno = 0;
    if (!std::getline(in, line)) throw ParseError(path + ": empty file");
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "m_s,m_i")
        throw ParseError(path + ":1: expected header \"m_s,m_i\", found \"" + line + "\"");
    std::vector<ShotRecord> records;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue; // tolerate trailing blank lines
        std::size_t comma = line.find(',');
        if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos)
            throw ParseError(path + ":" + std::to_string(lineno) +
                             ": expected two comma-separated counts");
        ShotRecord rec;
        rec.m_s = parse_count(line.substr(0, comma), path, lineno);
        rec.m_i = parse_count(line.substr(comma + 1), path, lineno);
        records.push_back(rec);
    }
    return records;
}

void save_shots(const std::string& path, const std::vector<ShotRecord>& records) {
    std::string out;
    out.reserve(records.size() * 8 + 8);
    out += "m_s,m_i\n";
    for (const ShotRecord& r : records) {
        out += std::to_string(r.m_s);
        out += ',';
        out += std::to_string(r.m_i);
        out += '\n';
    }
    write_file(path, out);
}

JointHistogram histogram_from_shots(const std::vector<ShotRecord>& records) {
    if (records.empty()) throw DomainError("cannot build a histogram from zero shots");
    std::uint32_t max_s = 0, max_i = 0;
    for (const ShotRecord& r : records) {
        max_s = std::max(max_s, r.m_s);
        max_i = std::max(max_i, r.m_i);
    }
    JointHistogram h;
    h.rows = std::size_t(max_s) + 1;
    h.cols = std::size_t(max_i) + 1;
    h.counts.assign(h.rows * h.cols, 0.0);
    h.shots = double(records.size());
    for (const ShotRecord& r : records) h.at(r.m_s, r.m_i) += 1.0;
    return h;
}

void save_model(const std::string& path, const TwbModel& m) {
    json j = model_to_json(m);
    j["schema"] = kSchema;
    write_file(path, j.dump(2) + "\n");
}

TwbModel load_model(const std::string& path) {
    json j = parse_json_file(path);
    check_schema(j, path);
    const json& src = j.contains("model") ? j["model"] : j;
    return model_from_json(src, path);
}

void save_histogram(const std::string& path, const JointHistogram& h) {
    json rows = json::array();
    for (std::size_t i = 0; i < h.rows; ++i) {
        json row = json::array();
        for (std::size_t j = 0; j < h.cols; ++j) row.push_back(count_to_json(h.at(i, j)));
        rows.push_back(std::move(row));
    }
    json j{{"schema", kSchema},
           {"rows", h.rows},
           {"cols", h.cols},
           {"shots", count_to_json(h.shots)},
           {"counts", std::move(rows)}};
    write_file(path, j.dump(2) + "\n");
}

JointHistogram load_histogram(const std::string& path) {
    json j = parse_json_file(path);
    check_schema(j, path);
    JointHistogram h;
    if (!j.contains("rows") || !j.contains("cols") || !j.contains("counts") ||
        !j.contains("shots"))
        throw ParseError(path + ": histogram file missing rows/cols/shots/counts");
    h.rows = j["rows"].get<std::size_t>();
    h.cols = j["cols"].get<std::size_t>();
    h.shots = j["shots"].get<double>();
    const json& rows = j["counts"];
    if (!rows.is_array() || rows.size() != h.rows)
        throw ValidationError(path + ": counts row count does not match 'rows'");
    h.counts.reserve(h.rows * h.cols);
    for (const json& row : rows) {
        if (!row.is_array() || row.size() != h.cols)
            throw ValidationError(path + ": counts column count does not match 'cols'");
        for (const json& c : row) {
            if (!c.is_number()) throw ValidationError(path + ": non-numeric count");
            double v = c.get<double>();
            if (v < 0.0 || !std::isfinite(v))
                throw ValidationError(path + ": negative or non-finite count");
            h.counts.push_back(v);
        }
    }
    return h;
}

void save_reconstruction(const std::string& path, const ReconstructionResult& r) {
    json j = reconstruction_to_json(r);
    j["schema"] = kSchema;
    write_file(path, j.dump(2) + "\n");
}

ReconstructionResult load_reconstruction(const std::string& path) {
    json j = parse_json_file(path);
    check_schema(j, path);
    if (!j.contains("model")) throw ParseError(path + ": reconstruction file has no model block");
    ReconstructionResult r;
    r.model = model_from_json(j["model"], path);
    r.residual = require_number(j, "residual", path);
    r.converged = j.value("converged", false);
    r.noise_s_flagged = j.value("noise_s_flagged", false);
    r.noise_i_flagged = j.value("noise_i_flagged", false);
    r.eta_difference = require_number(j, "eta_difference", path);
    if (j.contains("derived")) {
        const json& d = j["derived"];
        r.derived.photon_covariance = require_number(d, "photon_covariance", path);
        r.derived.photon_R = require_number(d, "photon_R", path);
        r.derived.pairing_fraction = require_number(d, "pairing_fraction", path);
        r.derived.diagonal_weight = require_number(d, "diagonal_weight", path);
        r.derived.mean_pairs = require_number(d, "mean_pairs", path);
    }
    r.photon_dist = joint_distribution(r.model);
    return r;
}

void save_grid(const std::string& csv_path, const IntensityGrid& g) {
    std::string csv = "W_s,W_i,value\n";
    csv.reserve(g.values.size() * 32);
    for (std::size_t i = 0; i < g.axis_s.size(); ++i)
        for (std::size_t j = 0; j < g.axis_i.size(); ++j) {
            csv += double_str(g.axis_s[i]);
            csv += ',';
            csv += double_str(g.axis_i[j]);
            csv += ',';
            csv += double_str(g.at(i, j));
            csv += '\n';
        }
    write_file(csv_path, csv);
    json meta{{"schema", kSchema},
              {"order", g.order},
              {"damping", g.damping},
              {"flags", g.flags},
              {"axis_s", g.axis_s},
              {"axis_i", g.axis_i},
              {"value_hash", fnv1a64_hex(csv)}};
    write_file(csv_path + ".meta.json", meta.dump(2) + "\n");
}

IntensityGrid load_grid(const std::string& csv_path) {
    json meta = parse_json_file(csv_path + ".meta.json");
    check_schema(meta, csv_path + ".meta.json");
    IntensityGrid g;
    g.order = int(require_number(meta, "order", csv_path + ".meta.json"));
    g.damping = require_number(meta, "damping", csv_path + ".meta.json");
    if (meta.contains("flags")) g.flags = meta["flags"].get<std::vector<std::string>>();
    g.axis_s = meta["axis_s"].get<std::vector<double>>();
    g.axis_i = meta["axis_i"].get<std::vector<double>>();

    std::string csv = read_file(csv_path);
    std::string expected = meta.value("value_hash", std::string());
    if (fnv1a64_hex(csv) != expected)
        throw ValidationError(csv_path + ": content does not match metadata value hash");

    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    if (line != "W_s,W_i,value")
        throw ParseError(csv_path + ":1: expected header \"W_s,W_i,value\"");
    g.values.assign(g.axis_s.size() * g.axis_i.size(), 0.0);
    std::size_t idx = 0, lineno = 1;
    auto parse_double = [&](const char* first, const char* last) {
        double v = 0.0;
        auto res = std::from_chars(first, last, v);
        if (res.ec != std::errc() || res.ptr != last)
            throw ParseError(csv_path + ":" + std::to_string(lineno) + ": malformed number");
        return v;
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (idx >= g.values.size())
            throw ValidationError(csv_path + ": more grid rows than the metadata axes admit");
        std::size_t c1 = line.find(',');
        std::size_t c2 = c1 == std::string::npos ? std::string::npos : line.find(',', c1 + 1);
        if (c2 == std::string::npos)
            throw ParseError(csv_path + ":" + std::to_string(lineno) + ": expected three fields");
        double ws = parse_double(line.data(), line.data() + c1);
        double wi = parse_double(line.data() + c1 + 1, line.data() + c2);
        double v = parse_double(line.data() + c2 + 1, line.data() + line.size());
        std::size_t i = idx / g.axis_i.size(), j = idx % g.axis_i.size();
        if (ws != g.axis_s[i] || wi != g.axis_i[j])
            throw ValidationError(csv_path + ":" + std::to_string(lineno) +
                                  ": axis values disagree with metadata");
        g.values[idx++] = v;
    }
    if (idx != g.values.size())
        throw ValidationError(csv_path + ": fewer grid rows than the metadata axes admit");
    return g;
}

void save_report(const std::string& path, const ReportDocument& doc) {
    json j{{"schema", kSchema},
           {"criteria", criteria_to_json(doc.criteria)},
           {"provenance",
            json{{"seed", doc.seed},
                 {"version", doc.version},
                 {"config", doc.config_echo},
                 {"inputs", json::array()}}}};
    for (const ProvenanceInput& in : doc.inputs)
        j["provenance"]["inputs"].push_back(json{{"path", in.path}, {"fnv1a64", in.fnv1a64}});
    if (doc.reconstruction) j["reconstruction"] = reconstruction_to_json(*doc.reconstruction);
    if (doc.negativity) {
        const NegativityReport& n = *doc.negativity;
        json contours = json::array();
        for (const ZeroContour& c : n.zero_contours) {
            json pts = json::array();
            for (const auto& p : c.points) pts.push_back(json::array({p.first, p.second}));
            contours.push_back(std::move(pts));
        }
        j["negativity"] = json{{"min_value", n.min_value},
                               {"min_location", json::array({n.min_location.first,
                                                             n.min_location.second})},
                               {"negative_fraction", n.negative_fraction},
                               {"eps_neg", n.eps_neg},
                               {"zero_contours", std::move(contours)}};
    }
    write_file(path, j.dump(2) + "\n");
}

} // namespace twb
