#include "nup/metrics.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <json.hpp>

namespace nup {

namespace {

using ojson = nlohmann::ordered_json;

void reject_unknown(const nlohmann::json& obj, const std::set<std::string>& allowed, const std::string& where) {
    if (!obj.is_object()) throw ConfigError(where + ": expected an object");
    for (const auto& item : obj.items())
        if (!allowed.count(item.key())) throw ConfigError(where + ": unknown key '" + item.key() + "'");
}

template <typename T>
void read(const nlohmann::json& obj, const char* key, T& out, const std::string& where) {
    auto it = obj.find(key);
    if (it == obj.end()) return;
    try {
        if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
            if (!it->is_number_integer()) throw ConfigError(where + "." + key + ": expected an integer");
            if constexpr (std::is_unsigned_v<T>) {
                if (it->is_number_unsigned() || it->get<std::int64_t>() >= 0) {
                    out = it->get<T>();
                    return;
                }
                throw ConfigError(where + "." + key + ": expected a non-negative integer");
            }
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!it->is_number()) throw ConfigError(where + "." + key + ": expected a number");
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!it->is_string()) throw ConfigError(where + "." + key + ": expected a string");
        }
        out = it->get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(where + "." + key + ": " + e.what());
    }
}

std::optional<double> opt_number(const nlohmann::json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    return it->get<double>();
}

std::vector<double> number_list(const nlohmann::json& j, const char* key) {
    std::vector<double> out;
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return out;
    for (const auto& v : *it) out.push_back(v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>());
    return out;
}

ojson opt_json(const std::optional<double>& v) { return v ? ojson(*v) : ojson(nullptr); }

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    reject_unknown(doc, {"model", "train", "data"}, "config");
    RunConfig rc;
    if (doc.contains("model")) {
        const auto& m = doc["model"];
        reject_unknown(m, {"l", "m", "r", "m0", "m_out", "a", "b", "eta", "n", "seed", "scheme", "dtype", "loss"},
                       "model");
        auto& c = rc.model;
        read(m, "l", c.l, "model");
        read(m, "m", c.m, "model");
        read(m, "r", c.r, "model");
        read(m, "m0", c.m0, "model");
        read(m, "m_out", c.m_out, "model");
        read(m, "a", c.a, "model");
        read(m, "b", c.b, "model");
        read(m, "eta", c.eta, "model");
        read(m, "n", c.n, "model");
        read(m, "seed", c.seed, "model");
        std::string s = to_string(c.scheme), d = to_string(c.dtype), lk = to_string(c.loss);
        read(m, "scheme", s, "model");
        read(m, "dtype", d, "model");
        read(m, "loss", lk, "model");
        c.scheme = scale_scheme_from_string(s);
        c.dtype = dtype_from_string(d);
        c.loss = loss_kind_from_string(lk);
    }
    if (doc.contains("train")) {
        const auto& t = doc["train"];
        reject_unknown(t, {"steps", "sharpness_every"}, "train");
        read(t, "steps", rc.steps, "train");
        read(t, "sharpness_every", rc.sharpness_every, "train");
    }
    if (doc.contains("data")) {
        const auto& d = doc["data"];
        reject_unknown(d, {"source", "images", "labels", "subset", "classes", "per_class", "dim", "spread", "radius",
                           "seed"},
                       "data");
        auto& dc = rc.data;
        read(d, "source", dc.source, "data");
        read(d, "images", dc.images, "data");
        read(d, "labels", dc.labels, "data");
        read(d, "subset", dc.subset, "data");
        read(d, "classes", dc.classes, "data");
        read(d, "per_class", dc.per_class, "data");
        read(d, "dim", dc.dim, "data");
        read(d, "spread", dc.spread, "data");
        read(d, "radius", dc.radius, "data");
        read(d, "seed", dc.seed, "data");
    }
    validate(rc.model);
    if (rc.steps < 0) throw ConfigError("train.steps must be >= 0");
    if (rc.sharpness_every < 0) throw ConfigError("train.sharpness_every must be >= 0");
    const auto& dc = rc.data;
    if (dc.source != "synthetic" && dc.source != "mnist")
        throw ConfigError("data.source must be 'synthetic' or 'mnist', got '" + dc.source + "'");
    if (dc.source == "mnist" && (dc.images.empty() || dc.labels.empty()))
        throw ConfigError("data.images and data.labels are required for mnist");
    if (dc.source == "synthetic") {
        if (dc.classes < 2) throw ConfigError("data.classes must be >= 2");
        if (dc.per_class < 1) throw ConfigError("data.per_class must be >= 1");
        if (dc.spread < 0) throw ConfigError("data.spread must be >= 0");
        if (dc.classes > rc.model.m_out && rc.model.loss == LossKind::classification)
            throw ConfigError("data.classes exceeds model.m_out");
    }
    if (dc.subset < 0) throw ConfigError("data.subset must be >= 0");
    return rc;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    RunConfig rc = parse_run_config(ss.str());
    const auto base = std::filesystem::path(path).parent_path();
    for (std::string* p : {&rc.data.images, &rc.data.labels})
        if (!p->empty() && std::filesystem::path(*p).is_relative()) *p = (base / *p).lexically_normal().string();
    return rc;
}

namespace {

ojson config_json(const RunConfig& rc) {
    const auto& c = rc.model;
    ojson j;
    j["model"] = {{"l", c.l},       {"m", c.m},          {"r", c.r},           {"m0", c.m0},
                  {"m_out", c.m_out}, {"a", c.a},        {"b", c.b},           {"eta", c.eta},
                  {"n", c.n},       {"seed", c.seed},    {"scheme", to_string(c.scheme)},
                  {"dtype", to_string(c.dtype)},         {"loss", to_string(c.loss)}};
    j["train"] = {{"steps", rc.steps}, {"sharpness_every", rc.sharpness_every}};
    const auto& d = rc.data;
    j["data"] = {{"source", d.source},   {"images", d.images}, {"labels", d.labels}, {"subset", d.subset},
                 {"classes", d.classes}, {"per_class", d.per_class}, {"dim", d.dim}, {"spread", d.spread},
                 {"radius", d.radius},   {"seed", d.seed}};
    return j;
}

}  // namespace

std::string run_config_to_json(const RunConfig& cfg) { return config_json(cfg).dump(2); }

Dataset load_dataset(const DataConfig& data, Index m0) {
    Dataset ds;
    if (data.source == "mnist") {
        ds = load_mnist_idx(data.images, data.labels);
    } else if (data.source == "synthetic") {
        SeededRng rng(data.seed);
        ds = synth_gaussian(data.classes, data.per_class, data.dim > 0 ? data.dim : m0, data.spread, rng, data.radius);
    } else {
        throw ConfigError("unknown data source '" + data.source + "'");
    }
    if (data.subset > 0) ds = subset(ds, data.subset);
    if (ds.dim() != m0)
        throw ConfigError("dataset dimension " + std::to_string(ds.dim()) + " differs from model.m0 " +
                          std::to_string(m0));
    return ds;
}

std::string header_line(const RunConfig& cfg, const Dataset& ds) {
    ojson j;
    j["record"] = "header";
    j["config"] = config_json(cfg);
    j["dataset"] = {{"source", ds.source},
                    {"size", ds.size()},
                    {"dim", ds.dim()},
                    {"classes", ds.classes},
                    {"sampling", "uniform_with_replacement"},
                    {"normalization", {{"kind", ds.normalization.kind}, {"divisor", ds.normalization.divisor}}}};
    j["fields"] = {"step",          "minibatch_loss", "effective_sharpness", "stability_ratio",
                   "softrank_last_hidden", "grad_scales", "tau", "aborted"};
    return j.dump();
}

std::string metric_line(const MetricRecord& rec) {
    ojson j;
    j["step"] = rec.step;
    j["minibatch_loss"] = std::isfinite(rec.minibatch_loss) ? ojson(rec.minibatch_loss) : ojson(nullptr);
    j["effective_sharpness"] = opt_json(rec.effective_sharpness);
    j["stability_ratio"] = opt_json(rec.stability_ratio);
    j["softrank_last_hidden"] = opt_json(rec.softrank_last_hidden);
    j["grad_scales"] = rec.grad_scales;
    j["tau"] = rec.tau;
    j["aborted"] = rec.aborted;
    return j.dump();
}

MetricRecord parse_metric_line(const std::string& line) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(std::string("metric line is not valid JSON: ") + e.what());
    }
    if (j.contains("record")) throw FormatError("not a step record");
    MetricRecord rec;
    rec.step = j.at("step").get<Index>();
    const auto& loss = j.at("minibatch_loss");
    rec.minibatch_loss = loss.is_null() ? std::numeric_limits<double>::quiet_NaN() : loss.get<double>();
    rec.effective_sharpness = opt_number(j, "effective_sharpness");
    rec.stability_ratio = opt_number(j, "stability_ratio");
    rec.softrank_last_hidden = opt_number(j, "softrank_last_hidden");
    rec.grad_scales = number_list(j, "grad_scales");
    rec.tau = number_list(j, "tau");
    rec.aborted = j.value("aborted", false);
    return rec;
}

}  // namespace nup
