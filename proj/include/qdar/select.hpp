#pragma once

// BIC order selection at single quantile levels and combined over a level grid.

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "qdar/estimate.hpp"
#include "qdar/parallel.hpp"

namespace qdar {

struct BicTable {
    int p_max = 0;
    int n = 0;
    std::vector<double> levels;
    Matrix per_level;              ///< levels x p_max, column p-1 holds BIC_tau(p); NaN for failed fits
    Matrix loss;                   ///< L_n(theta_hat^p) per cell
    std::vector<char> level_used;  ///< false when a fit at that level failed for some order
    Vector combined;               ///< mean of per_level over used levels, length p_max
    int chosen = 0;
    bool degenerate = false;       ///< n - p_max == 1, so the penalty vanishes
    std::vector<std::string> warnings;
};

/// tau_k = k / (K+1), k = 1..K.
inline std::vector<double> bic_levels(int K) {
    require(K >= 1, "K must be >= 1");
    std::vector<double> out;
    for (int k = 1; k <= K; ++k) out.push_back(static_cast<double>(k) / (K + 1));
    return out;
}

/// 2(n - p_max) log(L) + (2p + 1) log(n - p_max).
inline double bic_value(double loss, int p, int n, int p_max) {
    const double m = static_cast<double>(n - p_max);
    return 2.0 * m * std::log(loss) + (2.0 * p + 1.0) * std::log(m);
}

/// 1-based argmin of a BIC vector; ties go to the smaller order.
inline int argmin_order(const Vector& bic) {
    require(bic.size() >= 1, "empty BIC vector");
    int best = 1;
    for (int p = 2; p <= bic.size(); ++p)
        if (bic[p - 1] < bic[best - 1]) best = p;
    return best;
}

namespace detail {

/// Fits orders 1..p_max at one level on the common sample t = p_max+1..n with
/// p_max-depth weights; each order warm-starts from the previous solution padded
/// with zeros, so the attained loss cannot increase with p.
inline std::vector<double> losses_by_order(const SeriesSample& series, double tau, int p_max, int p_top,
                                           const WeightScheme& scheme, const FitOptions& opts) {
    WeightScheme common = scheme;
    common.order = p_max;
    const int n = static_cast<int>(series.size());
    std::vector<double> loss(p_top, std::numeric_limits<double>::quiet_NaN());
    std::optional<ThetaTau> prev;
    for (int p = 1; p <= p_top; ++p) {
        const LaggedDesign d = make_design(series, p, common, p_max);
        FitOptions o = opts;
        o.with_covariance = false;
        o.seed = derive_seed(opts.seed, static_cast<std::uint64_t>(p));
        o.extra_starts.clear();
        if (prev) {
            ThetaTau pad = *prev;
            pad.phi.push_back(0.0);
            pad.beta.push_back(0.0);
            o.extra_starts.push_back(pad);
        }
        const FitResult fr = fit_design(d, tau, o, n, common, 1.0);
        loss[p - 1] = fr.objective / static_cast<double>(n - p_max);
        prev = fr.theta;
    }
    return loss;
}

}  // namespace detail

/// BIC_tau(p) on the common sample, fitting orders 1..p so the warm-start chain matches select_order.
inline double bic_at_level(const SeriesSample& series, double tau, int p, int p_max, const WeightScheme& scheme = {},
                           const FitOptions& opts = {}) {
    require(p >= 1 && p <= p_max, "need 1 <= p <= p_max");
    series.validate();
    const int n = static_cast<int>(series.size());
    const auto loss = detail::losses_by_order(series, tau, p_max, p, scheme, opts);
    return bic_value(loss[p - 1], p, n, p_max);
}

/// Combined BIC over an explicit level grid.
inline BicTable select_order_levels(const SeriesSample& series, const std::vector<double>& levels, int p_max,
                                    const WeightScheme& scheme = {}, const FitOptions& opts = {},
                                    unsigned workers = 1) {
    require(!levels.empty() && p_max >= 1, "need at least one level and p_max >= 1");
    for (double l : levels) require(l > 0.0 && l < 1.0, "levels must lie in (0,1)");
    const int K = static_cast<int>(levels.size());
    series.validate();
    const int n = static_cast<int>(series.size());
    if (n - p_max < 1) fail(ErrorKind::InsufficientData, "series too short for p_max");
    BicTable t;
    t.p_max = p_max;
    t.n = n;
    t.levels = levels;
    t.degenerate = n - p_max == 1;
    if (t.degenerate) t.warnings.push_back("n - p_max = 1: BIC penalty vanishes");
    t.per_level = Matrix::Constant(K, p_max, std::numeric_limits<double>::quiet_NaN());
    t.loss = t.per_level;
    t.level_used.assign(K, true);
    std::vector<std::string> errors(K);
    parallel_for(static_cast<std::size_t>(K), workers, [&](std::size_t k) {
        FitOptions o = opts;
        o.seed = derive_seed(opts.seed, 1000 + k);
        try {
            const auto loss = detail::losses_by_order(series, t.levels[k], p_max, p_max, scheme, o);
            for (int p = 1; p <= p_max; ++p) {
                t.loss(static_cast<int>(k), p - 1) = loss[p - 1];
                t.per_level(static_cast<int>(k), p - 1) = bic_value(loss[p - 1], p, n, p_max);
            }
        } catch (const Error& e) {
            t.level_used[k] = false;
            errors[k] = e.what();
        }
    });
    int used = 0;
    t.combined = Vector::Zero(p_max);
    for (int k = 0; k < K; ++k) {
        if (!t.level_used[k]) {
            t.warnings.push_back("level " + std::to_string(t.levels[k]) + " dropped: " + errors[k]);
            continue;
        }
        t.combined += t.per_level.row(k).transpose();
        ++used;
    }
    if (used == 0) fail(ErrorKind::DidNotConverge, "order selection failed at every level");
    t.combined /= static_cast<double>(used);
    t.chosen = argmin_order(t.combined);
    return t;
}

/// Combined BIC(p) = K^{-1} sum_k BIC_{tau_k}(p) with tau_k = k/(K+1); the chosen
/// order minimises it, ties to the smaller p.
inline BicTable select_order(const SeriesSample& series, int K, int p_max, const WeightScheme& scheme = {},
                             const FitOptions& opts = {}, unsigned workers = 1) {
    return select_order_levels(series, bic_levels(K), p_max, scheme, opts, workers);
}

}  // namespace qdar
