#pragma once

// Monte-Carlo replication drivers over the built-in designs: estimator bias/ESD/ASD,
// BIC selection rates, residual QACF calibration and portmanteau size/power.
// Replication r uses seeds derived from (master seed, r), and records are stored by
// replication index, so tables do not depend on the worker count.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "qdar/designs.hpp"
#include "qdar/diagnose.hpp"
#include "qdar/estimate.hpp"
#include "qdar/parallel.hpp"
#include "qdar/select.hpp"
#include "qdar/simulate.hpp"

namespace qdar::studies {

struct StudyConfig {
    std::string design = "eq8-set1";
    DesignParams params;
    int n = 1000;
    double tau = 0.25;
    int reps = 200;
    std::uint64_t seed = 2024;
    unsigned workers = 1;
    WeightScheme weights;
    BandwidthRule bandwidth = BandwidthRule::HallSheather;
    int fit_order = 0;        ///< 0: the design's own order (order 1 for eq14)
    int starts = 8;
    std::size_t burn_in = kDefaultBurnIn;
};

inline int resolved_fit_order(const StudyConfig& c) {
    if (c.fit_order > 0) return c.fit_order;
    return c.design == "eq14" ? 1 : design_order(c.design);
}

inline SeriesSample replicate_series(const StudyConfig& c, const CoefficientFunctions& coefs, int r) {
    return simulate_qdar(coefs, static_cast<std::size_t>(c.n), c.burn_in, derive_seed(c.seed, static_cast<std::uint64_t>(r)));
}

inline FitOptions replicate_options(const StudyConfig& c, int r) {
    FitOptions o;
    o.seed = derive_seed(c.seed ^ 0xA5A5A5A5ULL, static_cast<std::uint64_t>(r));
    o.bandwidth = c.bandwidth;
    o.starts = c.starts;
    return o;
}

struct Moments {
    double mean = 0.0;
    double sd = 0.0;  ///< sample standard deviation (n - 1 divisor)
};

inline Moments moments(const std::vector<double>& v) {
    Moments m;
    if (v.empty()) return m;
    double s = 0.0;
    for (double x : v) s += x;
    m.mean = s / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - m.mean) * (x - m.mean);
    m.sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
    return m;
}

// ---------------------------------------------------------------------------
// Estimation

struct ComponentSummary {
    std::string name;
    double truth = 0.0;
    double bias = 0.0;
    double esd = 0.0;
    double asd = 0.0;  ///< mean asymptotic standard deviation
};

struct EstimationStudy {
    StudyConfig config;
    int p = 0;
    int failures = 0;
    std::vector<ComponentSummary> components;  ///< packed order (phi, b, beta)
    std::vector<std::vector<double>> estimates;  ///< per replication packed estimates (empty when failed)
};

inline std::vector<std::string> component_names(int p) {
    std::vector<std::string> names;
    for (int i = 1; i <= p; ++i) names.push_back("phi" + std::to_string(i));
    names.push_back("b");
    for (int j = 1; j <= p; ++j) names.push_back("beta" + std::to_string(j));
    return names;
}

inline EstimationStudy estimation_study(const StudyConfig& c) {
    const CoefficientFunctions coefs = make_design_coefs(c.design, c.params);
    const int p = resolved_fit_order(c);
    require(p == coefs.order(), "estimation study needs the fitted order to match the design");
    const int dim = 2 * p + 1;
    std::vector<std::vector<double>> est(c.reps), asd(c.reps);
    parallel_for(static_cast<std::size_t>(c.reps), c.workers, [&](std::size_t r) {
        try {
            const SeriesSample s = replicate_series(c, coefs, static_cast<int>(r));
            const FitResult f = fit(s, c.tau, p, c.weights, replicate_options(c, static_cast<int>(r)));
            const Vector v = f.theta.packed();
            est[r].assign(v.data(), v.data() + dim);
            asd[r].assign(f.asd.data(), f.asd.data() + dim);
        } catch (const Error&) {
        }
    });
    EstimationStudy out;
    out.config = c;
    out.p = p;
    out.estimates = est;
    const Vector truth = coefs.at(c.tau).packed();
    const auto names = component_names(p);
    for (int i = 0; i < dim; ++i) {
        std::vector<double> e, a;
        for (int r = 0; r < c.reps; ++r)
            if (!est[r].empty()) {
                e.push_back(est[r][i]);
                a.push_back(asd[r][i]);
            }
        const Moments me = moments(e);
        out.components.push_back({names[i], truth[i], me.mean - truth[i], me.sd, moments(a).mean});
    }
    for (int r = 0; r < c.reps; ++r) out.failures += est[r].empty();
    return out;
}

// ---------------------------------------------------------------------------
// Order selection

struct SelectionStudy {
    StudyConfig config;
    int p_max = 0;
    int K = 0;
    int true_order = 0;
    int under = 0, correct = 0, over = 0, failures = 0;
    std::vector<int> chosen;  ///< per replication (0 when failed)

    [[nodiscard]] double rate(int count) const {
        const int ok = config.reps - failures;
        return ok > 0 ? 100.0 * count / ok : 0.0;
    }
};

inline SelectionStudy selection_study(const StudyConfig& c, int p_max = 5, int K = 9) {
    const CoefficientFunctions coefs = make_design_coefs(c.design, c.params);
    SelectionStudy out;
    out.config = c;
    out.p_max = p_max;
    out.K = K;
    out.true_order = coefs.order();
    out.chosen.assign(c.reps, 0);
    parallel_for(static_cast<std::size_t>(c.reps), c.workers, [&](std::size_t r) {
        try {
            const SeriesSample s = replicate_series(c, coefs, static_cast<int>(r));
            FitOptions o = replicate_options(c, static_cast<int>(r));
            o.with_covariance = false;
            out.chosen[r] = select_order(s, K, p_max, c.weights, o).chosen;
        } catch (const Error&) {
        }
    });
    for (int p : out.chosen) {
        if (p == 0) ++out.failures;
        else if (p < out.true_order) ++out.under;
        else if (p == out.true_order) ++out.correct;
        else ++out.over;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Residual QACFs and portmanteau tests

struct LagSummary {
    int lag = 0;
    bool is_abs = false;
    double bias = 0.0;
    double esd = 0.0;
    double asd = 0.0;
};

struct QacfStudy {
    StudyConfig config;
    int K = 0;
    int failures = 0;
    std::vector<LagSummary> lags;  ///< rho_1..K then r_1..K
    // portmanteau rejection rates in percent at `alpha`
    double alpha = 0.05;
    int B = 0;
    double reject_q1 = 0.0, reject_q2 = 0.0, reject_q = 0.0;
    std::vector<std::vector<double>> records;  ///< per replication: 2K statistics, 2K ASDs, p1, p2, p
};

/// Fits each replication, computes the first K residual QACFs and (when B > 0) the
/// three portmanteau p-values.
inline QacfStudy qacf_study(const StudyConfig& c, int K = 6, int B = 0, double alpha = 0.05) {
    const CoefficientFunctions coefs = make_design_coefs(c.design, c.params);
    const int p = resolved_fit_order(c);
    const int width = 4 * K + 3;
    std::vector<std::vector<double>> rec(c.reps);
    parallel_for(static_cast<std::size_t>(c.reps), c.workers, [&](std::size_t r) {
        try {
            const SeriesSample s = replicate_series(c, coefs, static_cast<int>(r));
            const FitResult f = fit(s, c.tau, p, c.weights, replicate_options(c, static_cast<int>(r)));
            const QacfReport q = qacf(s, f, K);
            std::vector<double> row(width, 1.0);
            for (int k = 0; k < K; ++k) {
                row[k] = q.rho[k];
                row[K + k] = q.r[k];
            }
            for (int i = 0; i < 2 * K; ++i) row[2 * K + i] = std::sqrt(std::max(0.0, q.pi_hat(i, i)) / c.n);
            if (B > 0) {
                const PortmanteauResult pm = portmanteau(q, c.n, B, derive_seed(c.seed ^ 0x5EEDULL, r));
                row[4 * K] = pm.p1;
                row[4 * K + 1] = pm.p2;
                row[4 * K + 2] = pm.p_comb;
            }
            rec[r] = std::move(row);
        } catch (const Error&) {
        }
    });
    QacfStudy out;
    out.config = c;
    out.K = K;
    out.alpha = alpha;
    out.B = B;
    out.records = rec;
    int ok = 0, r1 = 0, r2 = 0, r3 = 0;
    for (const auto& row : rec) {
        if (row.empty()) {
            ++out.failures;
            continue;
        }
        ++ok;
        r1 += row[4 * K] < alpha;
        r2 += row[4 * K + 1] < alpha;
        r3 += row[4 * K + 2] < alpha;
    }
    for (int i = 0; i < 2 * K; ++i) {
        std::vector<double> v, a;
        for (const auto& row : rec)
            if (!row.empty()) {
                v.push_back(row[i]);
                a.push_back(row[2 * K + i]);
            }
        const Moments m = moments(v);
        out.lags.push_back({i % K + 1, i >= K, m.mean, m.sd, moments(a).mean});
    }
    if (ok > 0 && B > 0) {
        out.reject_q1 = 100.0 * r1 / ok;
        out.reject_q2 = 100.0 * r2 / ok;
        out.reject_q = 100.0 * r3 / ok;
    }
    return out;
}

}  // namespace qdar::studies
