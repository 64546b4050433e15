#include "splitkit/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "splitkit/attack.hpp"
#include "splitkit/digest.hpp"
#include "splitkit/errors.hpp"

namespace splitkit {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const std::string& expect) {
    throw InvalidArgument("config key '" + key + "': expected " + expect +
                          ", got '" + value + "'");
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true") return true;
    if (value == "false") return false;
    bad_value(key, value, "true or false");
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
    std::uint64_t out = 0;
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(),
                                     out);
    if (ec != std::errc() || ptr != value.data() + value.size()) {
        bad_value(key, value, "a non-negative integer");
    }
    return out;
}

std::size_t parse_size(const std::string& key, const std::string& value) {
    return static_cast<std::size_t>(parse_u64(key, value));
}

double parse_double(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        double out = std::stod(value, &used);
        if (used != value.size() || !std::isfinite(out)) {
            bad_value(key, value, "a finite number");
        }
        return out;
    } catch (const InvalidArgument&) {
        throw;
    } catch (const std::exception&) {
        bad_value(key, value, "a finite number");
    }
}

std::vector<std::string> split_list(const std::string& value) {
    std::vector<std::string> out;
    std::string item;
    std::stringstream ss(value);
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::vector<double> parse_double_list(const std::string& key,
                                      const std::string& value) {
    std::vector<double> out;
    for (const std::string& item : split_list(value)) {
        out.push_back(parse_double(key, item));
    }
    return out;
}

bool apply_train_key(TrainConfig& tc, const std::string& key,
                     const std::string& suffix, const std::string& value) {
    if (suffix == "lr") tc.lr = parse_double(key, value);
    else if (suffix == "momentum") tc.momentum = parse_double(key, value);
    else if (suffix == "weight_decay") tc.weight_decay = parse_double(key, value);
    else if (suffix == "epsilon") tc.epsilon = parse_double(key, value);
    else if (suffix == "epochs") tc.epochs = parse_size(key, value);
    else if (suffix == "batch_size") tc.batch_size = parse_size(key, value);
    else if (suffix == "milestones") tc.milestones = parse_double_list(key, value);
    else if (suffix == "lr_factor") tc.lr_factor = parse_double(key, value);
    else return false;
    return true;
}

void apply_key(ExperimentConfig& cfg, const std::string& key,
               const std::string& value) {
    auto train_suffix = [&](const std::string& prefix) {
        return key.substr(prefix.size());
    };
    if (key == "seed") {
        cfg.seed = parse_u64(key, value);
        cfg.seed_set = true;
    } else if (key == "out") {
        cfg.out_dir = value;
    } else if (key == "model.arch") {
        cfg.arch = value;
    } else if (key == "data.kind") {
        cfg.data_kind = value;
    } else if (key == "data.n") {
        cfg.synthetic.n = parse_size(key, value);
    } else if (key == "data.user_classes") {
        cfg.synthetic.user_classes = parse_size(key, value);
    } else if (key == "data.attribute") {
        cfg.synthetic.attribute = value;
    } else if (key == "data.decodability") {
        cfg.synthetic.decodability = parse_double(key, value);
    } else if (key == "data.image_size") {
        cfg.synthetic.image_size = parse_size(key, value);
    } else if (key == "data.overlap") {
        cfg.synthetic.overlap = parse_bool(key, value);
    } else if (key == "data.val_fraction") {
        cfg.val_fraction = parse_double(key, value);
    } else if (key == "data.user_images") {
        cfg.user_images_path = value;
    } else if (key == "data.user_labels") {
        cfg.user_labels_path = value;
    } else if (key == "data.attacker_images") {
        cfg.attacker_images_path = value;
    } else if (key == "data.attacker_labels") {
        cfg.attacker_labels_path = value;
    } else if (key == "cuts") {
        cfg.cuts = value == "all" ? std::vector<std::string>{}
                                  : split_list(value);
    } else if (key == "defense.strategy") {
        cfg.defense.strategy = defense_strategy_from_name(value);
    } else if (key == "defense.pa_target") {
        cfg.defense.pa_target = parse_double(key, value);
    } else if (key == "defense.bank_size") {
        cfg.defense.bank_size = parse_size(key, value);
    } else if (key == "defense.lambda") {
        cfg.defense.lambda = parse_double(key, value);
    } else if (key == "defense.calibration_samples") {
        cfg.defense.calibration_samples = parse_size(key, value);
    } else if (key.rfind("defense.train.", 0) == 0) {
        if (!apply_train_key(cfg.defense.bank_train, key,
                             train_suffix("defense.train."), value)) {
            throw InvalidArgument("unknown config key '" + key + "'");
        }
    } else if (key == "mi.estimator") {
        cfg.mi_estimator = value;
    } else if (key == "mi.k") {
        cfg.mi.k = parse_size(key, value);
    } else if (key == "mi.bins") {
        cfg.mi.bins = parse_size(key, value);
    } else if (key == "mi.per_dimension_sum") {
        cfg.mi.per_dimension_sum = parse_bool(key, value);
    } else if (key == "mi.projection_dim") {
        cfg.mi.projection_dim = parse_size(key, value);
    } else if (key == "mi.samples") {
        cfg.mi_samples = parse_size(key, value);
    } else if (key.rfind("user.", 0) == 0) {
        if (!apply_train_key(cfg.user_train, key, train_suffix("user."),
                             value)) {
            throw InvalidArgument("unknown config key '" + key + "'");
        }
    } else if (key == "attack.head") {
        cfg.attack_head = value;
    } else if (key.rfind("attack.", 0) == 0) {
        if (!apply_train_key(cfg.attack_train, key, train_suffix("attack."),
                             value)) {
            throw InvalidArgument("unknown config key '" + key + "'");
        }
    } else if (key == "report.formats") {
        cfg.report_formats = split_list(value);
    } else if (key == "report.plots") {
        cfg.plots = parse_bool(key, value);
    } else {
        throw InvalidArgument("unknown config key '" + key + "'");
    }
}

std::string fmt_double(double value) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    if (ec != std::errc()) throw NumericError("unformattable double");
    return std::string(buf, ptr);
}

std::string fmt_list(const std::vector<double>& values) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out += ",";
        out += fmt_double(values[i]);
    }
    return out;
}

std::string fmt_list(const std::vector<std::string>& values) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out += ",";
        out += values[i];
    }
    return out;
}

void emit_train(std::map<std::string, std::string>& kv,
                const std::string& prefix, const TrainConfig& tc) {
    kv[prefix + "lr"] = fmt_double(tc.lr);
    kv[prefix + "momentum"] = fmt_double(tc.momentum);
    kv[prefix + "weight_decay"] = fmt_double(tc.weight_decay);
    kv[prefix + "epsilon"] = fmt_double(tc.epsilon);
    kv[prefix + "epochs"] = std::to_string(tc.epochs);
    kv[prefix + "batch_size"] = std::to_string(tc.batch_size);
    kv[prefix + "milestones"] = fmt_list(tc.milestones);
    kv[prefix + "lr_factor"] = fmt_double(tc.lr_factor);
}

}  // namespace

void ExperimentConfig::validate() const {
    if (!seed_set) {
        throw InvalidArgument(
            "config must set a seed; runs take no implicit entropy");
    }
    if (arch != "mini5" && arch != "mini-res" && arch != "mlp") {
        throw InvalidArgument("unknown model.arch '" + arch + "'");
    }
    if (data_kind == "idx") {
        if (user_images_path.empty() || user_labels_path.empty() ||
            attacker_images_path.empty() || attacker_labels_path.empty()) {
            throw InvalidArgument(
                "data.kind = idx requires data.user_images, data.user_labels, "
                "data.attacker_images and data.attacker_labels");
        }
    } else if (data_kind == "synthetic") {
        if (synthetic.attribute != "corner_glyph" &&
            synthetic.attribute != "stripe") {
            throw InvalidArgument("unknown data.attribute '" +
                                  synthetic.attribute + "'");
        }
    } else {
        throw InvalidArgument("data.kind must be synthetic or idx");
    }
    if (!(val_fraction > 0.0 && val_fraction < 0.5)) {
        throw InvalidArgument("data.val_fraction must lie in (0, 0.5)");
    }
    defense.validate();
    mi_estimator_from_name(mi_estimator);
    if (mi.k < 3 || mi.k > 10) {
        throw InvalidArgument("mi.k must lie in [3, 10]");
    }
    if (mi.bins < 4 || mi.bins > 64) {
        throw InvalidArgument("mi.bins must lie in [4, 64]");
    }
    if (mi.projection_dim < 1) {
        throw InvalidArgument("mi.projection_dim must be >= 1");
    }
    if (mi_samples < 50) {
        throw InvalidArgument("mi.samples must be >= 50");
    }
    user_train.validate();
    attack_train.validate();
    head_kind_from_name(attack_head);
    if (report_formats.empty()) {
        throw InvalidArgument("report.formats must list at least one format");
    }
    for (const std::string& fmt : report_formats) {
        if (fmt != "csv" && fmt != "json") {
            throw InvalidArgument("unknown report format '" + fmt + "'");
        }
    }
}

ExperimentConfig parse_config_text(const std::string& text,
                                   const std::string& origin) {
    ExperimentConfig cfg;
    std::map<std::string, bool> seen;
    std::stringstream ss(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw InvalidArgument(origin + ":" + std::to_string(lineno) +
                                  ": expected 'key = value'");
        }
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty()) {
            throw InvalidArgument(origin + ":" + std::to_string(lineno) +
                                  ": empty key");
        }
        if (seen[key]) {
            throw InvalidArgument(origin + ":" + std::to_string(lineno) +
                                  ": duplicate key '" + key + "'");
        }
        seen[key] = true;
        try {
            apply_key(cfg, key, value);
        } catch (const InvalidArgument& err) {
            throw InvalidArgument(origin + ":" + std::to_string(lineno) +
                                  ": " + err.what());
        }
    }
    return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidArgument("cannot open config file '" + path + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_config_text(buffer.str(), path);
}

std::string canonical_config_text(const ExperimentConfig& config) {
    std::map<std::string, std::string> kv;
    kv["seed"] = std::to_string(config.seed);
    kv["model.arch"] = config.arch;
    kv["data.kind"] = config.data_kind;
    kv["data.n"] = std::to_string(config.synthetic.n);
    kv["data.user_classes"] = std::to_string(config.synthetic.user_classes);
    kv["data.attribute"] = config.synthetic.attribute;
    kv["data.decodability"] = fmt_double(config.synthetic.decodability);
    kv["data.image_size"] = std::to_string(config.synthetic.image_size);
    kv["data.overlap"] = config.synthetic.overlap ? "true" : "false";
    kv["data.val_fraction"] = fmt_double(config.val_fraction);
    kv["data.user_images"] = config.user_images_path;
    kv["data.user_labels"] = config.user_labels_path;
    kv["data.attacker_images"] = config.attacker_images_path;
    kv["data.attacker_labels"] = config.attacker_labels_path;
    kv["defense.strategy"] = defense_strategy_name(config.defense.strategy);
    kv["defense.pa_target"] = fmt_double(config.defense.pa_target);
    kv["defense.bank_size"] = std::to_string(config.defense.bank_size);
    kv["defense.lambda"] = fmt_double(config.defense.lambda);
    kv["defense.calibration_samples"] =
        std::to_string(config.defense.calibration_samples);
    emit_train(kv, "defense.train.", config.defense.bank_train);
    kv["mi.estimator"] = config.mi_estimator;
    kv["mi.k"] = std::to_string(config.mi.k);
    kv["mi.bins"] = std::to_string(config.mi.bins);
    kv["mi.per_dimension_sum"] = config.mi.per_dimension_sum ? "true" : "false";
    kv["mi.projection_dim"] = std::to_string(config.mi.projection_dim);
    kv["mi.samples"] = std::to_string(config.mi_samples);
    emit_train(kv, "user.", config.user_train);
    kv["attack.head"] = config.attack_head;
    emit_train(kv, "attack.", config.attack_train);
    kv["report.formats"] = fmt_list(config.report_formats);
    kv["report.plots"] = config.plots ? "true" : "false";

    std::string out;
    for (const auto& [key, value] : kv) {
        out += key;
        out += " = ";
        out += value;
        out += "\n";
    }
    return out;
}

std::string config_digest(const ExperimentConfig& config) {
    std::string text = canonical_config_text(config);
    return sha256_hex(reinterpret_cast<const std::uint8_t*>(text.data()),
                      text.size());
}

std::string config_key_reference() {
    return
        "seed                        master seed, required (uint64)\n"
        "out                         output directory (default runs/out)\n"
        "model.arch                  mini5 | mini-res | mlp\n"
        "data.kind                   synthetic | idx\n"
        "data.n                      synthetic sample count (default 5000)\n"
        "data.user_classes           synthetic user classes (default 10)\n"
        "data.attribute              corner_glyph | stripe\n"
        "data.decodability           attribute readability in [0.5, 1]\n"
        "data.image_size             synthetic image side (default 28)\n"
        "data.overlap                draw attribute inside the user region\n"
        "data.val_fraction           validation share in (0, 0.5)\n"
        "data.user_images            IDX images path (idx kind)\n"
        "data.user_labels            IDX labels path (idx kind)\n"
        "data.attacker_images        IDX images path (idx kind)\n"
        "data.attacker_labels        IDX labels path (idx kind)\n"
        "cuts                        all | comma-separated cut labels\n"
        "defense.strategy            calibrated_gaussian | learned_bank | none\n"
        "defense.pa_target           accuracy-keep target in (0, 1]\n"
        "defense.bank_size           learned bank slot count\n"
        "defense.lambda              noise-magnitude reward weight\n"
        "defense.calibration_samples eval samples used to calibrate sigma\n"
        "defense.train.lr            noise-bank trainer learning rate\n"
        "defense.train.momentum      noise-bank trainer momentum\n"
        "defense.train.weight_decay  noise-bank trainer weight decay\n"
        "defense.train.epsilon       noise-bank label smoothing\n"
        "defense.train.epochs        noise-bank trainer epochs\n"
        "defense.train.batch_size    noise-bank trainer batch size\n"
        "defense.train.milestones    noise-bank lr drop points, e.g. 0.5,0.75\n"
        "defense.train.lr_factor     noise-bank lr multiplier at milestones\n"
        "mi.estimator                ksg | histogram\n"
        "mi.k                        ksg neighbor count in [3, 10]\n"
        "mi.bins                     histogram bins per dim in [4, 64]\n"
        "mi.per_dimension_sum        sum of 1-D estimates instead of joint\n"
        "mi.projection_dim           projected feature dimension\n"
        "mi.samples                  activation pairs per estimate (>= 50)\n"
        "user.lr                     user trainer learning rate\n"
        "user.momentum               user trainer momentum\n"
        "user.weight_decay           user trainer weight decay\n"
        "user.epsilon                user label smoothing\n"
        "user.epochs                 user trainer epochs\n"
        "user.batch_size             user trainer batch size\n"
        "user.milestones             user lr drop points, e.g. 0.5,0.75\n"
        "user.lr_factor              user lr multiplier at milestones\n"
        "attack.head                 mirror | mlp\n"
        "attack.lr                   attack trainer learning rate\n"
        "attack.momentum             attack trainer momentum\n"
        "attack.weight_decay         attack trainer weight decay\n"
        "attack.epsilon              attack label smoothing\n"
        "attack.epochs               attack trainer epochs\n"
        "attack.batch_size           attack trainer batch size\n"
        "attack.milestones           attack lr drop points, e.g. 0.5,0.75\n"
        "attack.lr_factor            attack lr multiplier at milestones\n"
        "report.formats              csv,json\n"
        "report.plots                emit SVG plots (true | false)\n";
}

}  // namespace splitkit
