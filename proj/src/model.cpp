#include "nup/model.hpp"

namespace nup {

std::string to_string(ScaleScheme s) { return s == ScaleScheme::unscaled ? "unscaled" : "normalized"; }
std::string to_string(LossKind k) { return k == LossKind::classification ? "classification" : "squared_error"; }
std::string to_string(Dtype d) { return d == Dtype::f32 ? "f32" : "f64"; }

ScaleScheme scale_scheme_from_string(const std::string& s) {
    if (s == "unscaled") return ScaleScheme::unscaled;
    if (s == "normalized") return ScaleScheme::normalized;
    throw ConfigError("unknown scale scheme '" + s + "' (expected unscaled|normalized)");
}

LossKind loss_kind_from_string(const std::string& s) {
    if (s == "classification") return LossKind::classification;
    if (s == "squared_error") return LossKind::squared_error;
    throw ConfigError("unknown loss '" + s + "' (expected classification|squared_error)");
}

Dtype dtype_from_string(const std::string& s) {
    if (s == "f32") return Dtype::f32;
    if (s == "f64") return Dtype::f64;
    throw ConfigError("unknown dtype '" + s + "' (expected f32|f64)");
}

void validate(const NupConfig& cfg) {
    if (cfg.l < 1) throw ConfigError("l must be >= 1");
    if (cfg.m < 1) throw ConfigError("m must be >= 1");
    if (cfg.r < 0) throw ConfigError("r must be >= 0");
    if (cfg.m0 < 1) throw ConfigError("m0 must be >= 1");
    if (cfg.m_out < 1) throw ConfigError("m_out must be >= 1");
    if (cfg.n < 1) throw ConfigError("n must be >= 1");
    if (!(cfg.eta >= 0) || !std::isfinite(cfg.eta)) throw ConfigError("eta must be finite and >= 0");
    if (!std::isfinite(cfg.a) || !std::isfinite(cfg.b)) throw ConfigError("activation coefficients must be finite");
    if (cfg.a == 0.0 && cfg.b == 0.0) throw ConfigError("(a,b) = (0,0) has no edge-of-chaos variance");
}

std::vector<Index> widths(const NupConfig& cfg) {
    std::vector<Index> w;
    w.reserve(static_cast<std::size_t>(cfg.l + 2));
    w.push_back(cfg.m0);
    for (int k = 1; k <= cfg.l; ++k) {
        Index factor = 1;
        for (int p = 0; p < cfg.r; ++p) factor *= cfg.l - k + 1;
        w.push_back(factor * cfg.m);
    }
    w.push_back(cfg.m_out);
    return w;
}

std::int64_t param_count(const NupConfig& cfg) {
    const auto w = widths(cfg);
    std::int64_t total = 0;
    for (std::size_t k = 1; k < w.size(); ++k) total += static_cast<std::int64_t>(w[k]) * w[k - 1];
    return total;
}

}  // namespace nup
