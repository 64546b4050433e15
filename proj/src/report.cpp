#include "splitkit/report.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "splitkit/errors.hpp"

namespace splitkit {

namespace {

using nlohmann::json;

std::string fmt_double(double value) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    if (ec != std::errc()) throw NumericError("unformattable double");
    return std::string(buf, ptr);
}

std::string fmt_fixed(double value, int precision) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value,
                                   std::chars_format::fixed, precision);
    if (ec != std::errc()) throw NumericError("unformattable double");
    return std::string(buf, ptr);
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path + "'");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw Error("short write to '" + path + "'");
}

json provenance_to_json(const Provenance& prov) {
    return json{{"config_digest", prov.config_digest},
                {"master_seed", prov.master_seed},
                {"defense_strategy", prov.defense_strategy},
                {"head_arch", prov.head_arch}};
}

Provenance provenance_from_json(const json& j) {
    Provenance out;
    out.config_digest = j.at("config_digest").get<std::string>();
    out.master_seed = j.at("master_seed").get<std::uint64_t>();
    out.defense_strategy = j.at("defense_strategy").get<std::string>();
    out.head_arch = j.at("head_arch").get<std::string>();
    return out;
}

json privacy_report_to_json(const PrivacyReport& r) {
    json j;
    j["cut"] = r.cut;
    j["pa"] = r.pa;
    j["pi"] = r.pi;
    j["pi_raw"] = r.pi_raw;
    j["mi_reduction"] = r.mi_reduction;
    j["accuracy_u"] = r.accuracy_u;
    j["accuracy_u_prime"] = r.accuracy_u_prime;
    j["accuracy_a"] = r.accuracy_a;
    j["accuracy_a_prime"] = r.accuracy_a_prime;
    j["accuracy_r"] = r.accuracy_r;
    j["flops_ratio"] = r.flops_ratio;
    j["params_ratio"] = r.params_ratio;
    j["provenance"] = provenance_to_json(r.provenance);
    return j;
}

PrivacyReport privacy_report_from_json(const json& j) {
    PrivacyReport r;
    r.cut = j.at("cut").get<std::string>();
    r.pa = j.at("pa").get<double>();
    r.pi = j.at("pi").get<double>();
    r.pi_raw = j.at("pi_raw").get<double>();
    r.mi_reduction = j.at("mi_reduction").get<double>();
    r.accuracy_u = j.at("accuracy_u").get<double>();
    r.accuracy_u_prime = j.at("accuracy_u_prime").get<double>();
    r.accuracy_a = j.at("accuracy_a").get<double>();
    r.accuracy_a_prime = j.at("accuracy_a_prime").get<double>();
    r.accuracy_r = j.at("accuracy_r").get<double>();
    r.flops_ratio = j.at("flops_ratio").get<double>();
    r.params_ratio = j.at("params_ratio").get<double>();
    r.provenance = provenance_from_json(j.at("provenance"));
    return r;
}

json source_to_json(const SourceInfo& source) {
    return json{{"kind", source.kind},
                {"seed", source.seed},
                {"params", source.params},
                {"images_digest", source.images_digest},
                {"labels_digest", source.labels_digest}};
}

SourceInfo source_from_json(const json& j) {
    SourceInfo out;
    out.kind = j.at("kind").get<std::string>();
    out.seed = j.at("seed").get<std::uint64_t>();
    out.params = j.at("params").get<std::string>();
    out.images_digest = j.at("images_digest").get<std::string>();
    out.labels_digest = j.at("labels_digest").get<std::string>();
    return out;
}

}  // namespace

std::string report_csv(const RunRecord& record) {
    std::string out =
        "cut,pa,pi,pi_raw,mi_reduction,accuracy_u,accuracy_u_prime,"
        "accuracy_a,accuracy_a_prime,accuracy_r,flops_ratio,params_ratio\n";
    for (const CutRecord& cut : record.cuts) {
        if (!cut.ok) continue;
        const PrivacyReport& r = cut.report;
        out += r.cut;
        out += "," + fmt_double(r.pa);
        out += "," + fmt_double(r.pi);
        out += "," + fmt_double(r.pi_raw);
        out += "," + fmt_double(r.mi_reduction);
        out += "," + fmt_double(r.accuracy_u);
        out += "," + fmt_double(r.accuracy_u_prime);
        out += "," + fmt_double(r.accuracy_a);
        out += "," + fmt_double(r.accuracy_a_prime);
        out += "," + fmt_double(r.accuracy_r);
        out += "," + fmt_double(r.flops_ratio);
        out += "," + fmt_double(r.params_ratio);
        out += "\n";
    }
    return out;
}

std::string report_json_text(const RunRecord& record) {
    json j;
    j["schema_version"] = 1;
    j["config_digest"] = record.config_digest;
    j["master_seed"] = record.master_seed;
    j["arch"] = record.arch;
    j["defense_strategy"] = record.defense_strategy;
    j["head_arch"] = record.head_arch;
    json reports = json::array();
    json failed = json::array();
    for (const CutRecord& cut : record.cuts) {
        if (cut.ok) {
            reports.push_back(privacy_report_to_json(cut.report));
        } else {
            failed.push_back(json{{"cut", cut.cut}, {"error", cut.error}});
        }
    }
    j["reports"] = reports;
    j["failed_cuts"] = failed;
    return j.dump(2) + "\n";
}

std::string run_record_json_text(const RunRecord& record) {
    json j;
    j["schema_version"] = 1;
    j["config_digest"] = record.config_digest;
    j["master_seed"] = record.master_seed;
    j["arch"] = record.arch;
    j["defense_strategy"] = record.defense_strategy;
    j["head_arch"] = record.head_arch;
    j["accuracy_u"] = record.accuracy_u;
    j["user_model_digest"] = record.user_model_digest;
    j["user_source"] = source_to_json(record.user_source);
    j["attacker_source"] = source_to_json(record.attacker_source);
    json cuts = json::array();
    for (const CutRecord& cut : record.cuts) {
        json c;
        c["cut"] = cut.cut;
        c["ok"] = cut.ok;
        if (cut.ok) {
            c["report"] = privacy_report_to_json(cut.report);
            c["sigma"] = cut.sigma;
            c["mi_original"] = cut.mi_original;
            c["mi_noised"] = cut.mi_noised;
            c["frozen_digest_before"] = cut.frozen_digest_before;
            c["frozen_digest_after"] = cut.frozen_digest_after;
        } else {
            c["error"] = cut.error;
        }
        cuts.push_back(c);
    }
    j["cuts"] = cuts;
    return j.dump(2) + "\n";
}

RunRecord parse_run_record(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& err) {
        throw FormatError(std::string("malformed run record: ") + err.what());
    }
    try {
        if (j.at("schema_version").get<int>() != 1) {
            throw FormatError("unsupported run record schema version");
        }
        RunRecord record;
        record.config_digest = j.at("config_digest").get<std::string>();
        record.master_seed = j.at("master_seed").get<std::uint64_t>();
        record.arch = j.at("arch").get<std::string>();
        record.defense_strategy = j.at("defense_strategy").get<std::string>();
        record.head_arch = j.at("head_arch").get<std::string>();
        record.accuracy_u = j.at("accuracy_u").get<double>();
        record.user_model_digest =
            j.at("user_model_digest").get<std::string>();
        record.user_source = source_from_json(j.at("user_source"));
        record.attacker_source = source_from_json(j.at("attacker_source"));
        for (const json& c : j.at("cuts")) {
            CutRecord cut;
            cut.cut = c.at("cut").get<std::string>();
            cut.ok = c.at("ok").get<bool>();
            if (cut.ok) {
                cut.report = privacy_report_from_json(c.at("report"));
                cut.sigma = c.at("sigma").get<double>();
                cut.mi_original = c.at("mi_original").get<double>();
                cut.mi_noised = c.at("mi_noised").get<double>();
                cut.frozen_digest_before =
                    c.at("frozen_digest_before").get<std::string>();
                cut.frozen_digest_after =
                    c.at("frozen_digest_after").get<std::string>();
            } else {
                cut.error = c.at("error").get<std::string>();
            }
            record.cuts.push_back(cut);
        }
        return record;
    } catch (const json::exception& err) {
        throw FormatError(std::string("incomplete run record: ") + err.what());
    }
}

namespace {

struct Series {
    std::string label;
    std::string color;
    std::vector<double> values;  // already in [0, 1]
};

constexpr double kWidth = 640.0;
constexpr double kHeight = 400.0;
constexpr double kLeft = 60.0;
constexpr double kRight = 610.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 350.0;

double x_at(std::size_t i, std::size_t n) {
    if (n <= 1) return (kLeft + kRight) / 2.0;
    return kLeft + (kRight - kLeft) * static_cast<double>(i) /
                       static_cast<double>(n - 1);
}

double y_at(double v) { return kBottom - (kBottom - kTop) * v; }

std::string svg_header(const std::string& title) {
    std::string out;
    out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
           fmt_fixed(kWidth, 0) + "\" height=\"" + fmt_fixed(kHeight, 0) +
           "\" viewBox=\"0 0 " + fmt_fixed(kWidth, 0) + " " +
           fmt_fixed(kHeight, 0) + "\">\n";
    out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out += "<text x=\"" + fmt_fixed(kWidth / 2.0, 1) +
           "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"16\">" +
           title + "</text>\n";
    // axes
    out += "<line x1=\"" + fmt_fixed(kLeft, 1) + "\" y1=\"" +
           fmt_fixed(kTop, 1) + "\" x2=\"" + fmt_fixed(kLeft, 1) +
           "\" y2=\"" + fmt_fixed(kBottom, 1) +
           "\" stroke=\"black\" stroke-width=\"1\"/>\n";
    out += "<line x1=\"" + fmt_fixed(kLeft, 1) + "\" y1=\"" +
           fmt_fixed(kBottom, 1) + "\" x2=\"" + fmt_fixed(kRight, 1) +
           "\" y2=\"" + fmt_fixed(kBottom, 1) +
           "\" stroke=\"black\" stroke-width=\"1\"/>\n";
    for (int tick = 0; tick <= 4; ++tick) {
        double v = tick / 4.0;
        out += "<text x=\"" + fmt_fixed(kLeft - 8.0, 1) + "\" y=\"" +
               fmt_fixed(y_at(v) + 4.0, 1) +
               "\" text-anchor=\"end\" font-family=\"sans-serif\" "
               "font-size=\"11\">" +
               fmt_fixed(v, 2) + "</text>\n";
    }
    return out;
}

std::string cut_labels_svg(const std::vector<std::string>& cuts) {
    std::string out;
    for (std::size_t i = 0; i < cuts.size(); ++i) {
        out += "<text x=\"" + fmt_fixed(x_at(i, cuts.size()), 1) + "\" y=\"" +
               fmt_fixed(kBottom + 18.0, 1) +
               "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
               "font-size=\"12\">" +
               cuts[i] + "</text>\n";
    }
    return out;
}

}  // namespace

std::string render_profile_svg(const RunRecord& record) {
    std::vector<std::string> cuts;
    std::vector<Series> series = {{"pa", "#1f77b4", {}},
                                  {"pi", "#d62728", {}},
                                  {"mi_reduction", "#2ca02c", {}},
                                  {"flops_ratio", "#7f7f7f", {}}};
    for (const CutRecord& cut : record.cuts) {
        if (!cut.ok) continue;
        cuts.push_back(cut.cut);
        series[0].values.push_back(cut.report.pa);
        series[1].values.push_back(cut.report.pi);
        series[2].values.push_back(
            std::clamp(cut.report.mi_reduction, 0.0, 1.0));
        series[3].values.push_back(cut.report.flops_ratio);
    }
    std::string out = svg_header("normalized metrics per cut");
    if (cuts.empty()) {
        out += "<text x=\"320\" y=\"200\" text-anchor=\"middle\" "
               "font-family=\"sans-serif\" font-size=\"14\">no scored "
               "cuts</text>\n</svg>\n";
        return out;
    }
    out += cut_labels_svg(cuts);
    for (std::size_t s = 0; s < series.size(); ++s) {
        std::string points;
        for (std::size_t i = 0; i < cuts.size(); ++i) {
            if (i) points += " ";
            points += fmt_fixed(x_at(i, cuts.size()), 1) + "," +
                      fmt_fixed(y_at(series[s].values[i]), 1);
        }
        out += "<polyline fill=\"none\" stroke=\"" + series[s].color +
               "\" stroke-width=\"2\" points=\"" + points + "\"/>\n";
        for (std::size_t i = 0; i < cuts.size(); ++i) {
            out += "<circle cx=\"" + fmt_fixed(x_at(i, cuts.size()), 1) +
                   "\" cy=\"" + fmt_fixed(y_at(series[s].values[i]), 1) +
                   "\" r=\"3\" fill=\"" + series[s].color + "\"/>\n";
        }
        out += "<text x=\"" + fmt_fixed(kLeft + 10.0 + 130.0 * s, 1) +
               "\" y=\"" + fmt_fixed(kHeight - 10.0, 1) +
               "\" font-family=\"sans-serif\" font-size=\"12\" fill=\"" +
               series[s].color + "\">" + series[s].label + "</text>\n";
    }
    out += "</svg>\n";
    return out;
}

std::string render_attack_svg(const RunRecord& record) {
    std::vector<std::string> cuts;
    std::vector<double> reduction, kept;
    for (const CutRecord& cut : record.cuts) {
        if (!cut.ok) continue;
        cuts.push_back(cut.cut);
        reduction.push_back(std::clamp(cut.report.mi_reduction, 0.0, 1.0));
        double ratio = cut.report.accuracy_a > 0.0
                           ? cut.report.accuracy_a_prime / cut.report.accuracy_a
                           : 0.0;
        kept.push_back(std::clamp(ratio, 0.0, 1.0));
    }
    std::string out = svg_header("mi reduction vs attack accuracy kept");
    if (cuts.empty()) {
        out += "<text x=\"320\" y=\"200\" text-anchor=\"middle\" "
               "font-family=\"sans-serif\" font-size=\"14\">no scored "
               "cuts</text>\n</svg>\n";
        return out;
    }
    out += cut_labels_svg(cuts);
    double slot = (kRight - kLeft) / static_cast<double>(cuts.size());
    double bar = std::min(30.0, slot / 3.0);
    for (std::size_t i = 0; i < cuts.size(); ++i) {
        double center = kLeft + slot * (static_cast<double>(i) + 0.5);
        double r_top = y_at(reduction[i]);
        double k_top = y_at(kept[i]);
        out += "<rect x=\"" + fmt_fixed(center - bar, 1) + "\" y=\"" +
               fmt_fixed(r_top, 1) + "\" width=\"" + fmt_fixed(bar, 1) +
               "\" height=\"" + fmt_fixed(kBottom - r_top, 1) +
               "\" fill=\"#2ca02c\"/>\n";
        out += "<rect x=\"" + fmt_fixed(center, 1) + "\" y=\"" +
               fmt_fixed(k_top, 1) + "\" width=\"" + fmt_fixed(bar, 1) +
               "\" height=\"" + fmt_fixed(kBottom - k_top, 1) +
               "\" fill=\"#ff7f0e\"/>\n";
    }
    out += "<text x=\"" + fmt_fixed(kLeft + 10.0, 1) + "\" y=\"" +
           fmt_fixed(kHeight - 10.0, 1) +
           "\" font-family=\"sans-serif\" font-size=\"12\" "
           "fill=\"#2ca02c\">mi_reduction</text>\n";
    out += "<text x=\"" + fmt_fixed(kLeft + 150.0, 1) + "\" y=\"" +
           fmt_fixed(kHeight - 10.0, 1) +
           "\" font-family=\"sans-serif\" font-size=\"12\" "
           "fill=\"#ff7f0e\">attack accuracy kept</text>\n";
    out += "</svg>\n";
    return out;
}

std::vector<std::string> emit_report(const RunRecord& record,
                                     const std::vector<std::string>& formats,
                                     bool plots, const std::string& out_dir) {
    std::vector<std::string> written;
    auto has = [&](const char* fmt) {
        return std::find(formats.begin(), formats.end(), fmt) != formats.end();
    };
    if (has("csv")) {
        std::string path = out_dir + "/report.csv";
        write_file(path, report_csv(record));
        written.push_back(path);
    }
    if (has("json")) {
        std::string path = out_dir + "/report.json";
        write_file(path, report_json_text(record));
        written.push_back(path);
    }
    {
        std::string path = run_record_path(out_dir);
        write_file(path, run_record_json_text(record));
        written.push_back(path);
    }
    {
        std::string text;
        for (const StageTiming& t : record.timings) {
            text += t.stage + "\t" + fmt_fixed(t.seconds, 3) + "\n";
        }
        std::string path = timings_path(out_dir);
        write_file(path, text);
        written.push_back(path);
    }
    if (plots) {
        std::string profile = out_dir + "/fig_profile.svg";
        write_file(profile, render_profile_svg(record));
        written.push_back(profile);
        std::string attack = out_dir + "/fig_attack.svg";
        write_file(attack, render_attack_svg(record));
        written.push_back(attack);
    }
    return written;
}

}  // namespace splitkit
