#pragma once

// Rolling one-step VaR forecasts and their backtests: empirical coverage,
// Christoffersen's conditional coverage LR test and the dynamic quantile Wald test.

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "qdar/distributions.hpp"
#include "qdar/estimate.hpp"
#include "qdar/parallel.hpp"

namespace qdar {

struct HitSequence {
    double tau = 0.0;
    std::vector<int> hits;          ///< H_t = I(y_t < forecast_t)
    std::vector<double> forecasts;
    std::vector<double> outcomes;
    std::vector<int> targets;       ///< 0-based series index of each forecast target
    std::vector<char> carried;      ///< 1 when the fit at that origin failed and the last good fit was reused
    int failed_fits = 0;

    [[nodiscard]] int count() const noexcept { return static_cast<int>(hits.size()); }
    [[nodiscard]] int hit_count() const {
        int c = 0;
        for (int h : hits) c += h;
        return c;
    }
    /// Empirical coverage rate as a fraction.
    [[nodiscard]] double ecr() const { return hits.empty() ? 0.0 : static_cast<double>(hit_count()) / count(); }
};

/// Builds a hit sequence from aligned outcomes and forecasts.
inline HitSequence make_hits(double tau, const std::vector<double>& outcomes, const std::vector<double>& forecasts) {
    require(outcomes.size() == forecasts.size(), "outcomes and forecasts must align");
    HitSequence h;
    h.tau = tau;
    h.outcomes = outcomes;
    h.forecasts = forecasts;
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
        h.hits.push_back(outcomes[i] < forecasts[i] ? 1 : 0);
        h.targets.push_back(static_cast<int>(i));
        h.carried.push_back(0);
    }
    return h;
}

struct WindowPolicy {
    enum class Kind { Expanding, Fixed };
    Kind kind = Kind::Expanding;
    int size = 0;  ///< window length for Fixed

    static WindowPolicy expanding() { return {Kind::Expanding, 0}; }
    static WindowPolicy fixed(int w) { return {Kind::Fixed, w}; }
};

/// Forecasts y_t for t = first_target..n-1 (0-based), refitting at every origin on
/// y_start..y_{t-1}. Per-origin fits are independent (seeded by target index) and run
/// in parallel; a failed fit reuses the last successful one and is flagged.
inline HitSequence rolling_forecast(const SeriesSample& series, double tau, int p, int first_target,
                                    WindowPolicy policy = WindowPolicy::expanding(), const WeightScheme& scheme = {},
                                    const FitOptions& opts = {}, unsigned workers = 1) {
    require(tau > 0.0 && tau < 1.0, "quantile level must lie in (0,1)");
    series.validate();
    const int n = static_cast<int>(series.size());
    require(first_target < n, "forecast origin beyond the end of the series");
    const int min_obs = 10 * (2 * p + 1);
    const int first_len = policy.kind == WindowPolicy::Kind::Fixed ? policy.size : first_target;
    if (first_len < min_obs || first_target < first_len)
        fail(ErrorKind::InsufficientData, "first window has fewer than 10(2p+1) observations");
    const int m = n - first_target;
    std::vector<std::optional<ThetaTau>> thetas(m);
    parallel_for(static_cast<std::size_t>(m), workers, [&](std::size_t i) {
        const int t = first_target + static_cast<int>(i);
        const int start = policy.kind == WindowPolicy::Kind::Fixed ? t - policy.size : 0;
        SeriesSample window;
        window.values.assign(series.values.begin() + start, series.values.begin() + t);
        FitOptions o = opts;
        o.with_covariance = false;
        o.seed = derive_seed(opts.seed, static_cast<std::uint64_t>(t));
        try {
            thetas[i] = fit(window, tau, p, scheme, o).theta;
        } catch (const Error&) {
        }
    });
    HitSequence h;
    h.tau = tau;
    std::optional<ThetaTau> last;
    std::vector<double> lags(p);
    for (int i = 0; i < m; ++i) {
        const int t = first_target + i;
        bool carried = false;
        if (thetas[i]) {
            last = thetas[i];
        } else {
            ++h.failed_fits;
            carried = true;
            if (!last) fail(ErrorKind::DidNotConverge, "fit failed at the first forecast origin");
        }
        for (int j = 0; j < p; ++j) lags[j] = series.values[t - 1 - j];
        const double f = cond_quantile(*last, lags);
        h.forecasts.push_back(f);
        h.outcomes.push_back(series.values[t]);
        h.hits.push_back(series.values[t] < f ? 1 : 0);
        h.targets.push_back(t);
        h.carried.push_back(carried ? 1 : 0);
    }
    return h;
}

// ---------------------------------------------------------------------------
// Conditional coverage

struct CcResult {
    double lr_uc = 0.0;
    double lr_ind = 0.0;
    double stat = 0.0;     ///< LR_cc
    double pvalue = 1.0;
    int df = 2;
    bool degenerate = false;  ///< all hits identical: unconditional part only, 1 df
};

namespace detail {
inline double xlogy(double x, double y) { return x == 0.0 ? 0.0 : x * std::log(y); }
}  // namespace detail

/// LR_uc over all m hits, LR_ind over the m-1 transitions of a first-order Markov chain,
/// LR_cc = LR_uc + LR_ind against chi-square(2). Empty cells use 0 log 0 = 0.
inline CcResult cc_test(const HitSequence& h) {
    using detail::xlogy;
    const int m = h.count();
    require(m >= 20, "CC test needs at least 20 hits");
    const double tau = h.tau;
    const double n1 = h.hit_count();
    const double n0 = m - n1;
    const double pi = n1 / m;
    CcResult r;
    r.lr_uc = -2.0 * (xlogy(n0, 1.0 - tau) + xlogy(n1, tau) - xlogy(n0, 1.0 - pi) - xlogy(n1, pi));
    r.lr_uc = std::max(0.0, r.lr_uc);
    if (n1 == 0 || n0 == 0) {
        r.degenerate = true;
        r.df = 1;
        r.stat = r.lr_uc;
        r.pvalue = chi_square_sf(r.stat, 1.0);
        return r;
    }
    double c[2][2] = {{0, 0}, {0, 0}};
    for (int t = 1; t < m; ++t) c[h.hits[t - 1]][h.hits[t]] += 1.0;
    const double n00 = c[0][0], n01 = c[0][1], n10 = c[1][0], n11 = c[1][1];
    const double p01 = n00 + n01 > 0 ? n01 / (n00 + n01) : 0.0;
    const double p11 = n10 + n11 > 0 ? n11 / (n10 + n11) : 0.0;
    const double p2 = (n01 + n11) / (m - 1);
    const double l_ind = xlogy(n00, 1.0 - p01) + xlogy(n01, p01) + xlogy(n10, 1.0 - p11) + xlogy(n11, p11);
    const double l_iid = xlogy(n00 + n10, 1.0 - p2) + xlogy(n01 + n11, p2);
    r.lr_ind = std::max(0.0, -2.0 * (l_iid - l_ind));
    r.stat = r.lr_uc + r.lr_ind;
    r.pvalue = chi_square_sf(r.stat, 2.0);
    return r;
}

// ---------------------------------------------------------------------------
// Dynamic quantile

struct DqResult {
    double stat = 0.0;
    double pvalue = 1.0;
    int df = 0;
    Vector coef;
    double ridge = 0.0;
};

/// Regresses H_t - tau on [1, H_{t-1..t-L}, forecast_t] and tests all coefficients
/// jointly: DQ = b' X'X b / (tau(1 - tau)) against chi-square(rank X).
inline DqResult dq_test(const HitSequence& h, int n_lags = 4) {
    require(n_lags >= 0, "n_lags must be nonnegative");
    const int m = h.count();
    require(m > n_lags + 10, "DQ test needs m > n_lags + 10");
    const double tau = h.tau;
    const int rows = m - n_lags;
    const int cols = n_lags + 2;
    Matrix X(rows, cols);
    Vector y(rows);
    for (int r = 0; r < rows; ++r) {
        const int t = r + n_lags;
        y[r] = h.hits[t] - tau;
        X(r, 0) = 1.0;
        for (int l = 1; l <= n_lags; ++l) X(r, l) = h.hits[t - l];
        X(r, cols - 1) = h.forecasts[t];
    }
    DqResult res;
    const Eigen::ColPivHouseholderQR<Matrix> qr(X);
    res.df = static_cast<int>(qr.rank());
    Matrix xtx = X.transpose() * X;
    if (res.df < cols) {
        res.ridge = 1e-10 * xtx.trace();
        xtx += res.ridge * Matrix::Identity(cols, cols);
    }
    Eigen::SelfAdjointEigenSolver<Matrix> es(xtx);
    const double lo = es.eigenvalues().minCoeff(), hi = es.eigenvalues().maxCoeff();
    if (!(hi > 0.0) || !(lo > 1e-15 * hi)) fail(ErrorKind::RankDeficient, "DQ design X'X is singular");
    res.coef = xtx.ldlt().solve(X.transpose() * y);
    res.stat = std::max(0.0, res.coef.dot(xtx * res.coef) / (tau * (1.0 - tau)));
    res.pvalue = chi_square_sf(res.stat, res.df);
    return res;
}

// ---------------------------------------------------------------------------
// Suite

struct BacktestReport {
    double tau = 0.0;
    int m = 0;
    int hits = 0;
    double ecr = 0.0;       ///< percent
    double cc_stat = 0.0, cc_pvalue = 1.0;
    bool cc_degenerate = false;
    double dq_stat = 0.0, dq_pvalue = 1.0;
    int dq_df = 0;
    int failed_fits = 0;
    std::string error;      ///< non-empty when the level could not be evaluated
    HitSequence sequence;
};

inline BacktestReport backtest_hits(const HitSequence& h, int n_lags = 4) {
    BacktestReport r;
    r.tau = h.tau;
    r.m = h.count();
    r.hits = h.hit_count();
    r.ecr = 100.0 * h.ecr();
    r.failed_fits = h.failed_fits;
    r.sequence = h;
    try {
        const CcResult cc = cc_test(h);
        r.cc_stat = cc.stat;
        r.cc_pvalue = cc.pvalue;
        r.cc_degenerate = cc.degenerate;
        const DqResult dq = dq_test(h, n_lags);
        r.dq_stat = dq.stat;
        r.dq_pvalue = dq.pvalue;
        r.dq_df = dq.df;
    } catch (const Error& e) {
        r.error = e.what();
    }
    return r;
}

inline const std::vector<double>& default_backtest_levels() {
    static const std::vector<double> levels{0.05, 0.10, 0.90, 0.95};
    return levels;
}

/// rolling_forecast + cc_test + dq_test per level. Upper-tail levels keep the hit I(y_t < forecast).
inline std::vector<BacktestReport> backtest_suite(const SeriesSample& series, const std::vector<double>& levels, int p,
                                                  int first_target, WindowPolicy policy = WindowPolicy::expanding(),
                                                  const WeightScheme& scheme = {}, const FitOptions& opts = {},
                                                  unsigned workers = 1) {
    std::vector<BacktestReport> out;
    for (std::size_t k = 0; k < levels.size(); ++k) {
        FitOptions o = opts;
        o.seed = derive_seed(opts.seed, 7000 + k);
        try {
            out.push_back(backtest_hits(rolling_forecast(series, levels[k], p, first_target, policy, scheme, o, workers)));
        } catch (const Error& e) {
            BacktestReport r;
            r.tau = levels[k];
            r.error = e.what();
            out.push_back(r);
        }
    }
    return out;
}

}  // namespace qdar
