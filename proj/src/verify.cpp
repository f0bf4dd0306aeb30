#include "nup/verify.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

namespace nup {

void FdPlan::check() const {
    if (!(step > 0.0)) throw ConfigError("FdPlan: step must be positive");
    if (!(kink_guard >= 0.0)) throw ConfigError("FdPlan: kink_guard must be non-negative");
}

double params_norm(const ParamSet<double>& p) {
    double acc = 0;
    for (const auto& w : p.layers) acc += w.squaredNorm();
    return std::sqrt(acc);
}

namespace {

double probe(const LossFn& loss, const ParamSet<double>& p) {
    const double v = loss(p);
    if (!std::isfinite(v)) throw std::domain_error("finite-difference probe produced a non-finite loss");
    return v;
}

}  // namespace

LayerMats<double> fd_gradient(const LossFn& loss, const ParamSet<double>& params, const FdPlan& plan) {
    plan.check();
    const double h = plan.step * (plan.relative ? std::max(1.0, params_norm(params)) : 1.0);
    ParamSet<double> p = params;
    LayerMats<double> g;
    for (std::size_t k = 0; k < p.layers.size(); ++k) {
        Mat gk(p.layers[k].rows(), p.layers[k].cols());
        for (Index i = 0; i < gk.rows(); ++i)
            for (Index j = 0; j < gk.cols(); ++j) {
                double& x = p.layers[k](i, j);
                const double x0 = x;
                auto at = [&](double off) {
                    x = x0 + off;
                    const double v = probe(loss, p);
                    x = x0;
                    return v;
                };
                if (plan.scheme == FdScheme::central_2pt)
                    gk(i, j) = (at(h) - at(-h)) / (2.0 * h);
                else
                    gk(i, j) = (-at(2 * h) + 8.0 * at(h) - 8.0 * at(-h) + at(-2 * h)) / (12.0 * h);
            }
        g.push_back(std::move(gk));
    }
    return g;
}

double fd_directional_step(const ParamSet<double>& params, const LayerMats<double>& u, const FdPlan& plan) {
    plan.check();
    if (!plan.relative) return plan.step;
    return plan.step * std::max(1.0, params_norm(params)) / (1.0 + std::sqrt(squared_norm(u)));
}

double fd_directional(const LossFn& loss, const ParamSet<double>& params, const LayerMats<double>& u, int order,
                      const FdPlan& plan) {
    if (order < 1 || order > 3) throw ConfigError("fd_directional: order must be 1, 2 or 3");
    if (u.size() != params.layers.size()) throw ShapeError("fd_directional: direction has the wrong layer count");
    const double e = fd_directional_step(params, u, plan);
    auto f = [&](double s) { return probe(loss, displaced(params, u, s * e)); };
    switch (order) {
        case 1:
            if (plan.scheme == FdScheme::central_2pt) return (f(1) - f(-1)) / (2 * e);
            return (-f(2) + 8 * f(1) - 8 * f(-1) + f(-2)) / (12 * e);
        case 2:
            if (plan.scheme == FdScheme::central_2pt) return (f(1) - 2 * f(0) + f(-1)) / (e * e);
            return (-f(2) + 16 * f(1) - 30 * f(0) + 16 * f(-1) - f(-2)) / (12 * e * e);
        default: {
            auto d3 = [&](double h) { return (f(2 * h) - 2 * f(h) + 2 * f(-h) - f(-2 * h)) / (2 * h * h * h * e * e * e); };
            if (plan.scheme == FdScheme::central_2pt) return d3(1);
            // One Richardson step on the half-width stencil cancels the ε² term.
            return (4 * d3(0.5) - d3(1)) / 3;
        }
    }
}

double rel_error(double x, double ref) { return std::abs(x - ref) / std::max(std::abs(ref), 1e-12); }

double rel_error(const LayerMats<double>& x, const LayerMats<double>& ref) {
    if (x.size() != ref.size()) throw ShapeError("rel_error: layer count mismatch");
    double worst = 0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double num = (x[k] - ref[k]).cwiseAbs().maxCoeff();
        const double den = std::max(ref[k].cwiseAbs().maxCoeff(), 1e-12);
        worst = std::max(worst, num / den);
    }
    return worst;
}

// ---------------------------------------------------------------------------
// Instances

const std::vector<std::pair<double, double>>& activation_pairs() {
    static const std::vector<std::pair<double, double>> pairs{{1.0, 0.0}, {0.5, 0.5}, {0.6, 0.4}};
    return pairs;
}

LossFn Instance::loss_fn() const {
    return [cfg = cfg, batch = batch](const ParamSet<double>& p) { return minibatch_loss(cfg, p, batch); };
}

std::string Instance::summary() const {
    std::ostringstream os;
    os << "l=" << cfg.l << " m=" << cfg.m << " r=" << cfg.r << " a=" << cfg.a << " b=" << cfg.b
       << " loss=" << to_string(cfg.loss) << " n=" << cfg.n;
    return os.str();
}

double min_abs_preactivation(const NupConfig& cfg, const ParamSet<double>& params, const Batch<double>& batch) {
    const auto tr = forward(cfg, params, batch.x);
    double lo = std::numeric_limits<double>::infinity();
    for (int k = 1; k <= cfg.l; ++k) lo = std::min(lo, tr.pre[k].cwiseAbs().minCoeff());
    return lo;
}

bool same_kink_pattern(const NupConfig& cfg, const ParamSet<double>& params, const Batch<double>& batch,
                       const LayerMats<double>& u, const std::vector<double>& offsets) {
    const auto base = forward(cfg, params, batch.x);
    for (double e : offsets) {
        const auto moved = forward(cfg, displaced(params, u, e), batch.x);
        for (int k = 1; k <= cfg.l; ++k) {
            const Mat prod = base.pre[k].cwiseProduct(moved.pre[k]);
            if ((prod.array() <= 0.0).any()) return false;
        }
    }
    return true;
}

Instance make_instance(std::uint64_t seed, int trial, const InstanceSpec& spec,
                       const std::function<bool(const Instance&)>& accept) {
    SeededRng stream = SeededRng(seed).split(static_cast<std::uint64_t>(trial));
    const auto& acts = activation_pairs();
    for (int attempt = 0;; ++attempt) {
        if (attempt > 1000) throw std::runtime_error("make_instance: kink guard rejected 1000 draws");
        SeededRng rng = stream.split(static_cast<std::uint64_t>(attempt));
        Instance inst;
        NupConfig& c = inst.cfg;
        c.l = spec.l;
        c.m = spec.m;
        c.m0 = spec.m0;
        c.m_out = spec.m_out;
        c.n = spec.n;
        c.r = spec.r >= 0 ? spec.r : static_cast<int>(rng.below(3));
        c.loss = spec.loss >= 0 ? static_cast<LossKind>(spec.loss)
                                : (trial % 2 == 0 ? LossKind::classification : LossKind::squared_error);
        const auto ab = acts[spec.activation >= 0 ? static_cast<std::size_t>(spec.activation) : rng.below(acts.size())];
        c.a = ab.first;
        c.b = ab.second;
        c.seed = rng.next_u64();
        SeededRng init = rng.split(100);
        inst.params = init_eoc<double>(c, init);
        inst.batch.x = gaussian_matrix<double>(rng, c.m0, c.n, 0.0, 1.0);
        inst.batch.labels.resize(static_cast<std::size_t>(c.n));
        for (auto& y : inst.batch.labels) y = static_cast<int>(rng.below(static_cast<std::uint64_t>(c.m_out)));
        inst.seed = seed;
        inst.resamples = attempt;
        if (!inst.smooth() && min_abs_preactivation(c, inst.params, inst.batch) <= spec.kink_guard) continue;
        if (accept && !accept(inst)) continue;
        return inst;
    }
}

TaylorPieces taylor_pieces(const Instance& inst) {
    TaylorPieces tp;
    tp.tr = full_trace(inst.cfg, inst.params, inst.batch);
    tp.grads = grad_layerwise(tp.tr);
    tp.xi = grad_scales(tp.tr, ScaleScheme::normalized);
    tp.u = scale_layers(tp.grads, tp.xi);
    tp.cross = cross_derivatives(inst.cfg, inst.params, tp.tr, inst.batch.labels);
    return tp;
}

std::vector<double> taylor_remainders(const Instance& inst, double eta0, int halvings) {
    const auto tp = taylor_pieces(inst);
    const auto hess = assemble_layer_hessian(tp.tr, tp.cross);
    const double first = first_order_direct(tp.grads, tp.xi);
    const double second = second_order_direct(tp.grads, tp.xi, hess);
    const double third = third_order_direct(tp.grads, tp.xi, tp.tr, tp.cross);
    const auto loss = inst.loss_fn();
    const double l0 = loss(inst.params);
    std::vector<double> out;
    double eta = eta0;
    for (int h = 0; h <= halvings; ++h, eta *= 0.5) {
        const double delta = loss(displaced(inst.params, tp.u, -eta)) - l0;
        out.push_back(std::abs(delta - taylor_delta(eta, first, second, third)));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Suites

bool SuiteReport::all_pass() const {
    return std::all_of(rows.begin(), rows.end(), [](const SuiteRow& r) { return r.pass; });
}

std::string SuiteReport::text() const {
    std::ostringstream os;
    os << std::setprecision(3);
    for (const auto& r : rows)
        os << (r.pass ? "ok   " : "FAIL ") << r.level << '/' << r.check << " trial=" << r.trial << " err=" << r.error
           << " tol=" << r.tolerance << " [" << r.config << "]" << (r.resamples ? " resampled=" : "")
           << (r.resamples ? std::to_string(r.resamples) : "") << '\n';
    os << rows.size() << " checks, " << std::count_if(rows.begin(), rows.end(), [](const SuiteRow& r) { return !r.pass; })
       << " failed, " << resamples << " kink-guard resamples\n";
    return os.str();
}

std::string SuiteReport::table() const {
    std::ostringstream os;
    os << "level\tcheck\ttrial\tseed\tconfig\terror\ttolerance\tpass\tresamples\n";
    os << std::setprecision(6);
    for (const auto& r : rows)
        os << r.level << '\t' << r.check << '\t' << r.trial << '\t' << r.seed << '\t' << r.config << '\t' << r.error
           << '\t' << r.tolerance << '\t' << (r.pass ? 1 : 0) << '\t' << r.resamples << '\n';
    return os.str();
}

bool is_suite_level(const std::string& level) {
    return level == "grad" || level == "hess" || level == "tress" || level == "theorem" || level == "cumulative" ||
           level == "all";
}

namespace {

constexpr double kFdStep2 = 1e-4;
constexpr double kFdStep3 = 1e-3;

struct SuiteContext {
    SuiteReport& report;
    const SuiteHooks& hooks;
    std::uint64_t seed;

    void add(const std::string& level, const std::string& check, int trial, const Instance& inst, double err,
             double tol) {
        SuiteRow row;
        row.level = level;
        row.check = check;
        row.trial = trial;
        row.seed = seed;
        row.config = inst.summary();
        row.error = err;
        row.tolerance = tol;
        row.pass = std::isfinite(err) && err <= tol;
        row.resamples = inst.resamples;
        report.resamples += inst.resamples;
        report.rows.push_back(std::move(row));
    }
};

// Accepts kinked instances only if the stencil along Ξ∇ stays inside one
// linear region.
std::function<bool(const Instance&)> stencil_guard(double base_step, int reach) {
    return [base_step, reach](const Instance& inst) {
        if (inst.smooth()) return true;
        const auto tr = full_trace(inst.cfg, inst.params, inst.batch);
        const auto g = grad_layerwise(tr);
        const auto u = scale_layers(g, grad_scales(tr, ScaleScheme::normalized));
        FdPlan plan;
        plan.step = base_step;
        const double e = fd_directional_step(inst.params, u, plan);
        std::vector<double> offsets;
        for (int s = 1; s <= reach; ++s) {
            offsets.push_back(s * e);
            offsets.push_back(-s * e);
        }
        return same_kink_pattern(inst.cfg, inst.params, inst.batch, u, offsets);
    };
}

void suite_grad(SuiteContext& ctx, int trial) {
    const Instance inst = make_instance(ctx.seed, trial);
    auto exact = grad_layerwise(full_trace(inst.cfg, inst.params, inst.batch));
    if (ctx.hooks.corrupt_gradient) ctx.hooks.corrupt_gradient(exact);
    const auto fd = fd_gradient(inst.loss_fn(), inst.params, FdPlan{});
    ctx.add("grad", "gradient_vs_fd", trial, inst, rel_error(fd, exact), inst.smooth() ? 1e-6 : 1e-5);
}

void suite_hess(SuiteContext& ctx, int trial) {
    const Instance inst = make_instance(ctx.seed, trial, {}, stencil_guard(kFdStep2, 1));
    const auto tp = taylor_pieces(inst);
    const auto hess = assemble_layer_hessian(tp.tr, tp.cross);
    const double direct = second_order_direct(tp.grads, tp.xi, hess);
    FdPlan plan;
    plan.step = kFdStep2;
    const double fd = fd_directional(inst.loss_fn(), inst.params, tp.u, 2, plan);
    ctx.add("hess", "second_direct_vs_fd", trial, inst, rel_error(direct, fd), inst.smooth() ? 1e-4 : 1e-3);

    // Hessian-vector product against a central difference of the gradient.
    SeededRng rng = SeededRng(ctx.seed).split(1000 + static_cast<std::uint64_t>(trial));
    LayerMats<double> v;
    for (const auto& w : inst.params.layers) v.push_back(gaussian_matrix<double>(rng, w.rows(), w.cols(), 0.0, 1.0));
    const double eps = 1e-5 * std::max(1.0, params_norm(inst.params)) / std::sqrt(squared_norm(v));
    const bool guarded =
        inst.smooth() || same_kink_pattern(inst.cfg, inst.params, inst.batch, v, {eps, -eps});
    if (guarded) {
        const auto gp = grad_layerwise(full_trace(inst.cfg, displaced(inst.params, v, eps), inst.batch));
        const auto gm = grad_layerwise(full_trace(inst.cfg, displaced(inst.params, v, -eps), inst.batch));
        LayerMats<double> fd_hv, hv;
        const int L = inst.cfg.l + 1;
        for (int k1 = 1; k1 <= L; ++k1) {
            fd_hv.push_back((gp[k1 - 1] - gm[k1 - 1]) / (2 * eps));
            Vec acc = Vec::Zero(gp[k1 - 1].size());
            for (int k2 = 1; k2 <= L; ++k2) acc += hess.block(k1, k2) * row_major_vec(v[k2 - 1]);
            Mat hk(gp[k1 - 1].rows(), gp[k1 - 1].cols());
            for (Index p = 0; p < hk.rows(); ++p)
                for (Index q = 0; q < hk.cols(); ++q) hk(p, q) = acc(p * hk.cols() + q);
            hv.push_back(hk);
        }
        ctx.add("hess", "hessian_vector_vs_fd", trial, inst, rel_error(hv, fd_hv), inst.smooth() ? 1e-5 : 1e-4);
    }
}

void suite_tress(SuiteContext& ctx, int trial) {
    const Instance inst = make_instance(ctx.seed, trial, {}, stencil_guard(kFdStep3, 2));
    const auto tp = taylor_pieces(inst);
    const double direct = third_order_direct(tp.grads, tp.xi, tp.tr, tp.cross);
    FdPlan plan;
    plan.step = kFdStep3;
    plan.scheme = FdScheme::central_4pt;
    const double fd = fd_directional(inst.loss_fn(), inst.params, tp.u, 3, plan);
    ctx.add("tress", "third_direct_vs_fd", trial, inst, rel_error(direct, fd), inst.smooth() ? 1e-3 : 1e-2);

    // Squared error on a linear network: the loss is quadratic in each single
    // layer, so every diagonal block vanishes.
    InstanceSpec lin;
    lin.loss = static_cast<int>(LossKind::squared_error);
    lin.activation = 0;
    const Instance li = make_instance(ctx.seed ^ 0x5eedULL, trial, lin);
    const auto lp = taylor_pieces(li);
    SeededRng rng = SeededRng(ctx.seed).split(2000 + static_cast<std::uint64_t>(trial));
    double worst = 0;
    for (int k = 1; k <= li.cfg.l + 1; ++k) {
        const auto& w = li.params.theta(k);
        const Mat v1 = gaussian_matrix<double>(rng, w.rows(), w.cols(), 0.0, 1.0);
        const Mat v2 = gaussian_matrix<double>(rng, w.rows(), w.cols(), 0.0, 1.0);
        const Mat v3 = gaussian_matrix<double>(rng, w.rows(), w.cols(), 0.0, 1.0);
        worst = std::max(worst, std::abs(tressian_contract(lp.tr, lp.cross, k, k, k, v1, v2, v3)));
        // Along a single-layer direction the loss is an exact quadratic, so a
        // wide stencil isolates rounding error only.
        LayerMats<double> dir;
        for (int q = 1; q <= li.cfg.l + 1; ++q) dir.push_back(Mat::Zero(li.params.theta(q).rows(), li.params.theta(q).cols()));
        dir[k - 1] = v1 / v1.norm();
        FdPlan wide;
        wide.step = 0.5;
        wide.relative = false;
        worst = std::max(worst, std::abs(fd_directional(li.loss_fn(), li.params, dir, 3, wide)));
    }
    ctx.add("tress", "linear_squared_error_diagonal_abs", trial, li, worst, 1e-12);
}

void suite_theorem(SuiteContext& ctx, int trial) {
    const Instance inst = make_instance(ctx.seed, trial);
    const auto tp = taylor_pieces(inst);
    const auto gs = gram_set(tp.tr, &tp.cross);
    const Vec tau = tau_vector(gs);
    const Vec t1 = t1_vector(gs);
    ctx.add("theorem", "first_order_identity", trial, inst,
            rel_error(first_order_term(tp.xi, tau, t1), first_order_direct(tp.grads, tp.xi)), 1e-10);

    double worst = 0;
    for (int k = 1; k <= inst.cfg.l + 1; ++k)
        worst = std::max(worst, rel_error(gradient_norm_sq_factored(gs.F[k - 1], gs.B[k]), tp.grads[k - 1].squaredNorm()));
    ctx.add("theorem", "gradient_norm_factorization", trial, inst, worst, 1e-12);

    const auto hess = assemble_layer_hessian(tp.tr, tp.cross);
    ctx.add("theorem", "second_factored_vs_direct", trial, inst,
            rel_error(second_order_factored(tp.xi, tau, t2_matrix(gs, tp.tr, tp.cross)),
                      second_order_direct(tp.grads, tp.xi, hess)),
            1e-8);
    ctx.add("theorem", "third_factored_vs_direct", trial, inst,
            rel_error(third_order_factored(tp.xi, tau, t3_tensor(gs, tp.tr, tp.cross)),
                      third_order_direct(tp.grads, tp.xi, tp.tr, tp.cross)),
            1e-8);
}

void suite_cumulative(SuiteContext& ctx, int trial) {
    const Instance inst = make_instance(ctx.seed, trial);
    NupConfig cfg = inst.cfg;
    cfg.scheme = ScaleScheme::normalized;
    cfg.eta = 0.05;
    ParamSet<double> p = inst.params;
    CumulativeUpdate cum(p, cfg.eta, true);
    for (int t = 0; t < 10; ++t) {
        const auto tr = full_trace(cfg, p, inst.batch);
        const auto g = grad_layerwise(tr);
        const Vec xi = grad_scales(tr, cfg.scheme);
        cum.record(tr, g, xi);
        p = sgd_step(p, g, xi, cfg.eta);
    }
    double worst = 0;
    for (int k = 1; k <= cfg.l + 1; ++k)
        worst = std::max(worst, rel_error(cumulative_norm_formula(cum, k), cumulative_norm_direct(cum, k)));
    ctx.add("cumulative", "cumulative_norm_formula_vs_direct", trial, inst, worst, 1e-8);
}

}  // namespace

SuiteReport run_suite(const std::string& level, int trials, std::uint64_t seed, const SuiteHooks& hooks) {
    if (!is_suite_level(level)) throw ConfigError("unknown verification level '" + level + "'");
    if (trials < 0) throw ConfigError("trials must be >= 0");
    SuiteReport report;
    SuiteContext ctx{report, hooks, seed};
    const bool all = level == "all";
    for (int t = 0; t < trials; ++t) {
        if (all || level == "grad") suite_grad(ctx, t);
        if (all || level == "hess") suite_hess(ctx, t);
        if (all || level == "tress") suite_tress(ctx, t);
        if (all || level == "theorem") suite_theorem(ctx, t);
        if (all || level == "cumulative") suite_cumulative(ctx, t);
    }
    return report;
}

}  // namespace nup
