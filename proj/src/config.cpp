#include "transavs/config.hpp"

#include "transavs/errors.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace transavs {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double x = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw UsageError("config key '" + key + "': expected a number, got '" + v + "'");
    }
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
    std::uint64_t x = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
    if (ec != std::errc() || ptr != v.data() + v.size())
        throw UsageError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
    return x;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw UsageError("config key '" + key + "': expected true or false, got '" + v + "'");
}

ThresholdMode parse_threshold_mode(const std::string& key, const std::string& v) {
    if (v == "increasing") return ThresholdMode::Increasing;
    if (v == "fixed") return ThresholdMode::Fixed;
    throw UsageError("config key '" + key + "': expected increasing or fixed, got '" + v + "'");
}

PairNorm parse_pair_norm(const std::string& key, const std::string& v) {
    if (v == "printed") return PairNorm::Printed;
    if (v == "pairs") return PairNorm::Pairs;
    throw UsageError("config key '" + key + "': expected printed or pairs, got '" + v + "'");
}

struct Field {
    const char* key;
    std::function<std::string(TrainConfig)> get;
    std::function<void(TrainConfig&, const std::string&, const std::string&)> set;
};

template <class Member>
Field real(const char* key, Member member) {
    return {key, [member](TrainConfig c) { return format_double(member(c)); },
            [member](TrainConfig& c, const std::string& k, const std::string& v) { member(c) = parse_double(k, v); }};
}

template <class Member>
Field count(const char* key, Member member) {
    return {key, [member](TrainConfig c) { return std::to_string(member(c)); },
            [member](TrainConfig& c, const std::string& k, const std::string& v) {
                member(c) = static_cast<std::remove_reference_t<decltype(member(c))>>(parse_uint(k, v));
            }};
}

template <class Member>
Field flag(const char* key, Member member) {
    return {key, [member](TrainConfig c) { return std::string(member(c) ? "true" : "false"); },
            [member](TrainConfig& c, const std::string& k, const std::string& v) { member(c) = parse_bool(k, v); }};
}

template <class Member>
Field text(const char* key, Member member) {
    return {key, [member](TrainConfig c) { return member(c); },
            [member](TrainConfig& c, const std::string&, const std::string& v) { member(c) = v; }};
}

template <class Member>
Field threshold_mode(const char* key, Member member) {
    return {key,
            [member](TrainConfig c) {
                return std::string(member(c) == ThresholdMode::Fixed ? "fixed" : "increasing");
            },
            [member](TrainConfig& c, const std::string& k, const std::string& v) {
                member(c) = parse_threshold_mode(k, v);
            }};
}

#define M(expr) [](TrainConfig& c) -> auto& { return c.expr; }

const std::vector<Field>& fields() {
    static const std::vector<Field> table = {
        text("data", M(data)),
        text("out_dir", M(out_dir)),
        text("eval_split", M(eval_split)),
        count("seed", M(seed)),
        count("max_iterations", M(max_iterations)),
        count("batch_size", M(batch_size)),
        count("checkpoint_every", M(checkpoint_every)),
        flag("s4_first_frame_only", M(s4_first_frame_only)),
        count("threads", M(threads)),
        real("base_lr", M(base_lr)),
        real("encoder_lr_multiplier", M(encoder_lr_multiplier)),
        real("weight_decay", M(weight_decay)),
        real("grad_clip_norm", M(grad_clip_norm)),
        real("lr_poly_power", M(lr_poly_power)),
        real("beta1", M(beta1)),
        real("beta2", M(beta2)),
        real("adam_eps", M(adam_eps)),
        count("model.queries", M(model.queries)),
        count("model.d", M(model.d)),
        count("model.encoder_layers", M(model.encoder_layers)),
        count("model.decoder_layers", M(model.decoder_layers)),
        count("model.schedule_offset", M(model.schedule_offset)),
        flag("model.ffn", M(model.ffn)),
        count("model.stage1_channels", M(model.stage_channels[0])),
        count("model.stage2_channels", M(model.stage_channels[1])),
        count("model.stage3_channels", M(model.stage_channels[2])),
        count("model.audio_hidden", M(model.audio_hidden)),
        real("loss.lambda_aqdl", M(loss.lambda_aqdl)),
        real("loss.lambda_aqml", M(loss.lambda_aqml)),
        real("loss.lambda_class", M(loss.lambda_class)),
        real("loss.lambda_dice", M(loss.lambda_dice)),
        real("loss.d0", M(loss.d0)),
        threshold_mode("loss.delta1_mode", M(loss.delta1_mode)),
        threshold_mode("loss.delta2_mode", M(loss.delta2_mode)),
        real("loss.delta1_fixed", M(loss.delta1_fixed)),
        real("loss.delta2_fixed", M(loss.delta2_fixed)),
        real("loss.schedule_a", M(loss.schedule_a)),
        real("loss.schedule_b", M(loss.schedule_b)),
        count("loss.schedule_n_iter", M(loss.schedule_n_iter)),
        real("loss.focal_gamma", M(loss.focal_gamma)),
        real("loss.focal_alpha", M(loss.focal_alpha)),
        real("loss.dice_eps", M(loss.dice_eps)),
        real("loss.no_object_weight", M(loss.no_object_weight)),
        flag("loss.background_target", M(loss.background_target)),
        {"loss.pair_norm",
         [](TrainConfig c) { return std::string(c.loss.pair_norm == PairNorm::Pairs ? "pairs" : "printed"); },
         [](TrainConfig& c, const std::string& k, const std::string& v) { c.loss.pair_norm = parse_pair_norm(k, v); }},
    };
    return table;
}

#undef M

}  // namespace

std::string format_double(double value) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", value);
    return buf;
}

ConfigMap parse_config_text(const std::string& text) {
    ConfigMap out;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw UsageError("config line " + std::to_string(lineno) + ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
        if (key.empty()) throw UsageError("config line " + std::to_string(lineno) + ": empty key");
        out[key] = value;
    }
    return out;
}

ConfigMap read_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

void apply_config(TrainConfig& cfg, const ConfigMap& entries) {
    for (const auto& [key, value] : entries) {
        const Field* hit = nullptr;
        for (const auto& f : fields())
            if (key == f.key) hit = &f;
        if (!hit) throw UsageError("unknown config key '" + key + "'");
        hit->set(cfg, key, value);
    }
}

std::vector<std::pair<std::string, std::string>> config_entries(const TrainConfig& cfg) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& f : fields()) out.emplace_back(f.key, f.get(cfg));
    return out;
}

std::string format_config(const TrainConfig& cfg) {
    std::string out;
    for (const auto& [k, v] : config_entries(cfg)) out += k + " = " + v + "\n";
    return out;
}

}  // namespace transavs
