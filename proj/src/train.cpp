#include "nup/train.hpp"

namespace nup {

double cumulative_norm_direct(const CumulativeUpdate& cum, int k) { return cum.delta(k).squaredNorm(); }

double cumulative_norm_formula(const CumulativeUpdate& cum, int k) {
    if (!cum.retains_history()) throw std::logic_error("cumulative_norm_formula: per-step gradients were not retained");
    const auto& h = cum.history(k);
    // Per-step factor ξ · tr(F/n)^{1/2} tr(B/n)^{1/2} / (R(F)^{1/4} R(B)^{1/4}) · cos(F,B)^{1/2}.
    std::vector<double> w(h.size());
    for (std::size_t t = 0; t < h.size(); ++t) {
        const auto& s = h[t];
        w[t] = s.xi * std::sqrt(s.tr_f) * std::sqrt(s.tr_b) / std::pow(s.r_f, 0.25) / std::pow(s.r_b, 0.25) *
               std::sqrt(std::max(s.cos_fb, 0.0));
    }
    double total = 0;
    for (std::size_t t1 = 0; t1 < h.size(); ++t1)
        for (std::size_t t2 = 0; t2 < h.size(); ++t2) total += w[t1] * w[t2] * cosine_pair(h[t1].grad, h[t2].grad);
    return total;
}

double gradient_norm_sq_factored(const Mat& F, const Mat& B) {
    if (F.trace() == 0.0 || B.trace() == 0.0) return 0.0;
    return trace_n(F) * trace_n(B) / std::sqrt(soft_rank(F)) / std::sqrt(soft_rank(B)) * cosine_pair(F, B);
}

}  // namespace nup
