// Finite-difference oracles over the full parameter space and the equivalence
// suites built on them (gradients, Hessians, third derivatives, the factored
// Taylor terms, cumulative updates).
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "nup/gram_taylor.hpp"
#include "nup/highdiff.hpp"
#include "nup/train.hpp"

namespace nup {

// For order 3, central_4pt extrapolates the ±ε, ±2ε stencil against its
// half-width copy; all probes stay within ±2ε.
enum class FdScheme { central_2pt, central_4pt };

struct FdPlan {
    double step = 1e-5;
    bool relative = true;      // scale the step by max(1, ‖θ‖)
    double kink_guard = 1e-3;  // minimum |preactivation| required at the base point
    FdScheme scheme = FdScheme::central_2pt;

    void check() const;
};

using LossFn = std::function<double(const ParamSet<double>&)>;

double params_norm(const ParamSet<double>& p);

// Entrywise central difference of the loss.
LayerMats<double> fd_gradient(const LossFn& loss, const ParamSet<double>& params, const FdPlan& plan = {});

// k-th derivative (k ∈ {1,2,3}) of ε ↦ loss(θ + εu) at 0. The stencil step is
// plan.step · max(1, ‖θ‖) / (1 + ‖u‖) when plan.relative is set. Order 3 uses
// the five-point stencil (f(2ε) − 2f(ε) + 2f(−ε) − f(−2ε)) / (2ε³).
double fd_directional(const LossFn& loss, const ParamSet<double>& params, const LayerMats<double>& u, int order,
                      const FdPlan& plan);

// Step fd_directional would use.
double fd_directional_step(const ParamSet<double>& params, const LayerMats<double>& u, const FdPlan& plan);

// |x − ref| / max(|ref|, 1e−12).
double rel_error(double x, double ref);
// Max over layers of ‖x_k − ref_k‖_∞ / max(‖ref_k‖_∞, 1e−12).
double rel_error(const LayerMats<double>& x, const LayerMats<double>& ref);

// ---------------------------------------------------------------------------
// Random verification instances

struct Instance {
    NupConfig cfg;
    ParamSet<double> params;
    Batch<double> batch;
    std::uint64_t seed = 0;
    int resamples = 0;  // draws rejected by the kink guard

    bool smooth() const { return cfg.b == 0.0; }
    LossFn loss_fn() const;
    std::string summary() const;
};

struct InstanceSpec {
    int l = 3;
    Index m = 4;
    Index m0 = 5;
    Index m_out = 3;
    Index n = 4;
    int r = -1;             // −1 picks r ∈ {0, 1, 2} at random
    int loss = -1;          // −1 alternates by trial, else a LossKind value
    int activation = -1;    // −1 picks from the three (a, b) pairs, else an index
    double kink_guard = 1e-3;
};

// Activation pairs used by the suites: (1, 0), (1/2, 1/2), (0.6, 0.4).
const std::vector<std::pair<double, double>>& activation_pairs();

// min_{k,i,j} |𝕗_{k,ij}| over the batch (∞ for a network without hidden preactivations).
double min_abs_preactivation(const NupConfig& cfg, const ParamSet<double>& params, const Batch<double>& batch);

// True when every preactivation keeps its sign at θ + εu for each ε in `offsets`.
bool same_kink_pattern(const NupConfig& cfg, const ParamSet<double>& params, const Batch<double>& batch,
                       const LayerMats<double>& u, const std::vector<double>& offsets);

// Deterministic in (seed, trial). Kinked draws whose preactivations come within
// the guard of zero, or that `accept` rejects, are redrawn from the same trial
// stream; the number of rejected draws is recorded.
Instance make_instance(std::uint64_t seed, int trial, const InstanceSpec& spec = {},
                       const std::function<bool(const Instance&)>& accept = {});

// Everything the Taylor checks need at one parameter point.
struct TaylorPieces {
    BatchTrace<double> tr;
    LayerMats<double> grads;
    Vec xi;
    LayerMats<double> u;  // Ξ∇
    CrossDerivatives cross;
};
TaylorPieces taylor_pieces(const Instance& inst);

// |Δ𝓛 − 𝓛̇| at η₀, η₀/2, …, η₀/2^halvings along −u, where 𝓛̇ is the
// third-order expansion from the direct contractions.
std::vector<double> taylor_remainders(const Instance& inst, double eta0, int halvings);

// ---------------------------------------------------------------------------
// Suites

struct SuiteRow {
    std::string level;
    std::string check;
    int trial = 0;
    std::uint64_t seed = 0;
    std::string config;
    double error = 0;      // max relative (or absolute, see check) error
    double tolerance = 0;
    bool pass = false;
    int resamples = 0;
};

struct SuiteReport {
    std::vector<SuiteRow> rows;
    int resamples = 0;

    bool all_pass() const;
    std::string text() const;
    std::string table() const;  // tab-separated, one header line
};

struct SuiteHooks {
    // Applied to the exact gradient before comparison (sensitivity checks).
    std::function<void(LayerMats<double>&)> corrupt_gradient;
};

// level ∈ {grad, hess, tress, theorem, cumulative, all}; throws ConfigError on
// an unknown level.
SuiteReport run_suite(const std::string& level, int trials, std::uint64_t seed, const SuiteHooks& hooks = {});

bool is_suite_level(const std::string& level);

}  // namespace nup
