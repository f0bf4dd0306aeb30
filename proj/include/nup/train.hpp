// Scaled SGD: layerwise gradients, the gradient-scale schemes, parameter
// updates, cumulative-update bookkeeping and the training loop.
#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nup/data_io.hpp"
#include "nup/gram.hpp"
#include "nup/loss.hpp"
#include "nup/metrics.hpp"

namespace nup {

template <typename Scalar>
using LayerMats = std::vector<Matrix<Scalar>>;  // entry k-1 belongs to layer k

struct DegenerateTrace : std::domain_error {
    using std::domain_error::domain_error;
};

struct DivergenceError : std::runtime_error {
    DivergenceError(const std::string& what, int layer_, Index step_ = -1)
        : std::runtime_error(what), layer(layer_), step(step_) {}
    int layer;   // offending layer, 0 when the loss itself is non-finite
    Index step;  // training step, -1 when unknown
};

template <typename Scalar>
double inner(const LayerMats<Scalar>& x, const LayerMats<Scalar>& y) {
    double acc = 0;
    for (std::size_t k = 0; k < x.size(); ++k) acc += static_cast<double>(x[k].cwiseProduct(y[k]).sum());
    return acc;
}

template <typename Scalar>
double squared_norm(const LayerMats<Scalar>& x) {
    return inner(x, x);
}

// ∇_k = (1/n) Σ_i b_{k,i} f_{k−1,i}ᵀ.
template <typename Scalar>
LayerMats<Scalar> grad_layerwise(const BatchTrace<Scalar>& tr) {
    if (!tr.has_backward()) throw std::logic_error("grad_layerwise: trace has no backward vectors");
    const int l = tr.l();
    const Scalar inv_n = Scalar(1) / static_cast<Scalar>(tr.n());
    LayerMats<Scalar> g(static_cast<std::size_t>(l + 1));
    for (int k = 1; k <= l + 1; ++k) {
        g[k - 1].noalias() = tr.b[k] * tr.f[k - 1].transpose();
        g[k - 1] *= inv_n;
    }
    return g;
}

// Mean squared norms (1/n) Σ_i ‖f_{k−1,i}‖² and (1/n) Σ_i ‖b_{k,i}‖², i.e.
// tr(F_{k−1}/n) and tr(B_k/n).
template <typename Scalar>
std::pair<double, double> mean_sq_norms(const BatchTrace<Scalar>& tr, int k) {
    const double n = static_cast<double>(tr.n());
    return {static_cast<double>(tr.f[k - 1].squaredNorm()) / n, static_cast<double>(tr.b[k].squaredNorm()) / n};
}

// Unscaled: all ones. Normalized: ξ_k = tr(F_{k−1}/n)^{−1/2} tr(B_k/n)^{−1/2}.
template <typename Scalar>
Vec grad_scales(const BatchTrace<Scalar>& tr, ScaleScheme scheme) {
    const int l = tr.l();
    Vec xi = Vec::Ones(l + 1);
    if (scheme == ScaleScheme::unscaled) return xi;
    for (int k = 1; k <= l + 1; ++k) {
        const auto [fn, bn] = mean_sq_norms(tr, k);
        if (!(fn > 0.0) || !(bn > 0.0))
            throw DegenerateTrace("layer " + std::to_string(k) + " has zero average " +
                                  (fn > 0.0 ? "backward" : "forward") + " norm");
        xi(k - 1) = 1.0 / std::sqrt(fn) / std::sqrt(bn);
    }
    return xi;
}

// Ξ∇: per-layer scaled gradients.
template <typename Scalar>
LayerMats<Scalar> scale_layers(const LayerMats<Scalar>& grads, const Vec& xi) {
    LayerMats<Scalar> u = grads;
    for (std::size_t k = 0; k < u.size(); ++k) u[k] *= static_cast<Scalar>(xi(static_cast<Index>(k)));
    return u;
}

// θ ← θ + alpha · v, layer by layer.
template <typename Scalar>
ParamSet<Scalar> displaced(const ParamSet<Scalar>& p, const LayerMats<Scalar>& v, double alpha) {
    ParamSet<Scalar> out = p;
    for (std::size_t k = 0; k < v.size(); ++k) out.layers[k] += static_cast<Scalar>(alpha) * v[k];
    return out;
}

// θ_{k,t+1} = θ_{k,t} − η ξ_k ∇_k.
template <typename Scalar>
ParamSet<Scalar> sgd_step(const ParamSet<Scalar>& params, const LayerMats<Scalar>& grads, const Vec& xi, double eta) {
    if (grads.size() != params.layers.size() || xi.size() != static_cast<Index>(grads.size()))
        throw ShapeError("sgd_step: layer count mismatch");
    ParamSet<Scalar> out = params;
    for (std::size_t k = 0; k < grads.size(); ++k) {
        if (grads[k].rows() != params.layers[k].rows() || grads[k].cols() != params.layers[k].cols())
            throw ShapeError("sgd_step: gradient shape mismatch in layer " + std::to_string(k + 1));
        out.layers[k] -= static_cast<Scalar>(eta * xi(static_cast<Index>(k))) * grads[k];
        if (!out.layers[k].allFinite())
            throw DivergenceError("non-finite parameters in layer " + std::to_string(k + 1), static_cast<int>(k + 1));
    }
    return out;
}

// Δ_{k,t} = η^{−1}(θ_{k,t} − θ_{k,0}) plus what the norm formula needs.
class CumulativeUpdate {
public:
    struct LayerStep {
        double xi = 1.0;
        double tr_f = 0.0;  // tr(F_{k−1}/n)
        double tr_b = 0.0;  // tr(B_k/n)
        double r_f = 1.0;   // R(F_{k−1})
        double r_b = 1.0;   // R(B_k)
        double cos_fb = 0.0;
        Mat grad;           // kept only when history is retained
    };

    CumulativeUpdate(const ParamSet<double>& theta0, double eta, bool retain_history)
        : theta0_(theta0), eta_(eta), retain_(retain_history) {
        for (const auto& w : theta0.layers) delta_.push_back(Mat::Zero(w.rows(), w.cols()));
        history_.resize(theta0.layers.size());
    }

    // Records one step taken with the given trace, gradients and scales.
    void record(const BatchTrace<double>& tr, const LayerMats<double>& grads, const Vec& xi) {
        for (std::size_t k = 0; k < delta_.size(); ++k) {
            delta_[k] -= xi(static_cast<Index>(k)) * grads[k];
            LayerStep s;
            s.xi = xi(static_cast<Index>(k));
            const Mat F = gram(tr.f[k]);
            const Mat B = gram(tr.b[k + 1]);
            s.tr_f = trace_n(F);
            s.tr_b = trace_n(B);
            s.r_f = soft_rank(F);
            s.r_b = soft_rank(B);
            s.cos_fb = cosine_pair(F, B);
            if (retain_) s.grad = grads[k];
            history_[k].push_back(std::move(s));
        }
        ++steps_;
    }

    Index steps() const { return steps_; }
    double eta() const { return eta_; }
    bool retains_history() const { return retain_; }
    const ParamSet<double>& theta0() const { return theta0_; }
    const Mat& delta(int k) const { return delta_[static_cast<std::size_t>(k - 1)]; }
    const std::vector<LayerStep>& history(int k) const { return history_[static_cast<std::size_t>(k - 1)]; }

private:
    ParamSet<double> theta0_;
    double eta_;
    bool retain_;
    Index steps_ = 0;
    std::vector<Mat> delta_;
    std::vector<std::vector<LayerStep>> history_;
};

// ‖Δ_{k,t}‖² from the stored cumulative update.
double cumulative_norm_direct(const CumulativeUpdate& cum, int k);

// The double sum over past steps of ξ ξ · trace / soft-rank factors ·
// cos(F,B)^{1/2} cos(F,B)^{1/2} · cos(∇_{t1}, ∇_{t2}).
double cumulative_norm_formula(const CumulativeUpdate& cum, int k);

// ‖∇_k‖² = tr(F/n) tr(B/n) R(F)^{−1/2} R(B)^{−1/2} cos(F, B).
double gradient_norm_sq_factored(const Mat& F, const Mat& B);

// ---------------------------------------------------------------------------
// Training loop

struct RunOutcome {
    Index steps_completed = 0;
    bool aborted = false;
    Index abort_step = -1;
    std::string abort_reason;
};

using MetricSink = std::function<void(const MetricRecord&)>;

// Observer called after the diagnostics of each step, before the update.
template <typename Scalar>
using StepObserver = std::function<void(Index step, const ParamSet<Scalar>&, const BatchTrace<Scalar>&,
                                        const LayerMats<Scalar>&, const Vec&)>;

// ⟨u, ∂∇ u⟩ by a central difference of the minibatch gradient along u.
template <typename Scalar>
double curvature_along_fd(const NupConfig& cfg, const ParamSet<Scalar>& params, const Batch<Scalar>& batch,
                          const LayerMats<Scalar>& u, double rel_step = 1e-4) {
    const double un = std::sqrt(squared_norm(u));
    if (!(un > 0.0)) throw std::invalid_argument("curvature_along_fd: zero direction");
    double pn = 0;
    for (const auto& w : params.layers) pn += static_cast<double>(w.squaredNorm());
    const double eps = rel_step * std::max(1.0, std::sqrt(pn)) / un;
    if (!(eps > 0.0) || !std::isfinite(eps)) throw std::domain_error("curvature_along_fd: step underflow");
    const auto gp = grad_layerwise(full_trace(cfg, displaced(params, u, eps), batch));
    const auto gm = grad_layerwise(full_trace(cfg, displaced(params, u, -eps), batch));
    return (inner(u, gp) - inner(u, gm)) / (2.0 * eps);
}

template <typename Scalar>
RunOutcome run_training(const RunConfig& run, const Dataset& ds, const MetricSink& sink,
                        ParamSet<Scalar>* final_params = nullptr, const StepObserver<Scalar>& observer = {}) {
    const NupConfig& cfg = run.model;
    validate(cfg);
    if (ds.dim() != cfg.m0) throw ConfigError("dataset dimension differs from m0");
    SeededRng root(cfg.seed);
    SeededRng init_rng = root.split(0);
    SeededRng batch_rng = root.split(1);
    ParamSet<Scalar> params = init_eoc<Scalar>(cfg, init_rng);
    RunOutcome outcome;

    auto abort_with = [&](Index t, const std::string& why, MetricRecord rec) {
        rec.aborted = true;
        sink(rec);
        outcome.aborted = true;
        outcome.abort_step = t;
        outcome.abort_reason = why;
    };

    for (Index t = 0; t < run.steps; ++t) {
        const auto idx = sample_indices(ds.size(), cfg.n, batch_rng);
        const Batch<Scalar> batch = gather<Scalar>(ds, idx);
        BatchTrace<Scalar> tr = full_trace(cfg, params, batch);

        MetricRecord rec;
        rec.step = t;
        rec.minibatch_loss = static_cast<double>(tr.losses.mean());
        if (!std::isfinite(rec.minibatch_loss)) {
            abort_with(t, "non-finite minibatch loss", rec);
            break;
        }
        const LayerMats<Scalar> grads = grad_layerwise(tr);
        {
            int bad = 0;
            for (std::size_t k = 0; k < grads.size() && !bad; ++k)
                if (!grads[k].allFinite()) bad = static_cast<int>(k + 1);
            if (bad) {
                abort_with(t, "non-finite gradient in layer " + std::to_string(bad), rec);
                break;
            }
        }
        Vec xi;
        try {
            xi = grad_scales(tr, cfg.scheme);
        } catch (const DegenerateTrace& e) {
            abort_with(t, e.what(), rec);
            break;
        }
        rec.grad_scales.assign(xi.data(), xi.data() + xi.size());
        for (int k = 1; k <= cfg.l + 1; ++k) {
            const Mat F = gram(tr.f[k - 1]), B = gram(tr.b[k]);
            double tau = 0.0;
            if (!F.allFinite() || !B.allFinite())
                tau = std::numeric_limits<double>::quiet_NaN();
            else if (F.trace() > 0 && B.trace() > 0)
                tau = std::sqrt(trace_n(F)) * std::sqrt(trace_n(B)) / std::pow(soft_rank(F), 0.25) /
                      std::pow(soft_rank(B), 0.25);
            rec.tau.push_back(tau);
        }
        {
            const Mat Fl = gram(tr.f[cfg.l]);
            if (Fl.allFinite() && Fl.trace() > 0) rec.softrank_last_hidden = soft_rank(Fl);
        }
        if (run.sharpness_every > 0 && t % run.sharpness_every == 0) {
            const LayerMats<Scalar> u = scale_layers(grads, xi);
            const double first = inner(u, grads);
            if (first > 0.0 && std::isfinite(first)) {
                try {
                    const double second = curvature_along_fd(cfg, params, batch, u);
                    if (std::isfinite(second)) {
                        rec.effective_sharpness = second / first;
                        rec.stability_ratio = 0.5 * cfg.eta * *rec.effective_sharpness;
                    }
                } catch (const std::domain_error&) {
                    // Step underflow: the diagnostic is left unmeasured.
                }
            }
        }
        if (observer) observer(t, params, tr, grads, xi);
        try {
            params = sgd_step(params, grads, xi, cfg.eta);
        } catch (const DivergenceError& e) {
            abort_with(t, e.what(), rec);
            break;
        }
        sink(rec);
        outcome.steps_completed = t + 1;
    }
    if (final_params) *final_params = params;
    return outcome;
}

}  // namespace nup
