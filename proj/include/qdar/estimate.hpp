#pragma once

// Self-weighted conditional quantile estimation of the QDAR model, the sandwich
// covariance of the estimator, and one-step forecasting.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "qdar/core.hpp"
#include "qdar/distributions.hpp"
#include "qdar/optimize.hpp"
#include "qdar/parallel.hpp"
#include "qdar/rng.hpp"

namespace qdar {

// ---------------------------------------------------------------------------
// Bandwidths

enum class BandwidthRule { Bofinger, HallSheather };

inline std::string to_string(BandwidthRule r) { return r == BandwidthRule::Bofinger ? "bofinger" : "hall-sheather"; }

inline BandwidthRule parse_bandwidth_rule(const std::string& s) {
    if (s == "bofinger" || s == "B") return BandwidthRule::Bofinger;
    if (s == "hall-sheather" || s == "hallsheather" || s == "HS") return BandwidthRule::HallSheather;
    fail(ErrorKind::InvalidArgument, "unknown bandwidth rule '" + s + "'");
}

inline constexpr double kBandwidthLower = 0.001;
inline constexpr double kBandwidthUpper = 0.999;

/// Unclamped closed forms:
///   Bofinger       h = n^{-1/5} {4.5 f^4(x) / (2x^2 + 1)^2}^{1/5}
///   Hall-Sheather  h = n^{-1/3} z^{2/3} {1.5 f^2(x) / (2x^2 + 1)}^{1/3}
/// with x = Phi^{-1}(tau), f the normal density and z = Phi^{-1}(1 - alpha/2).
inline double bandwidth_raw(double tau, double n, BandwidthRule rule, double alpha = 0.05) {
    const double x = normal_quantile(tau);
    const double f = normal_pdf(x);
    const double denom = 2.0 * x * x + 1.0;
    if (rule == BandwidthRule::Bofinger)
        return std::pow(n, -0.2) * std::pow(4.5 * std::pow(f, 4) / (denom * denom), 0.2);
    const double z = normal_quantile(1.0 - alpha / 2.0);
    return std::pow(n, -1.0 / 3.0) * std::pow(z, 2.0 / 3.0) * std::cbrt(1.5 * f * f / denom);
}

/// Bandwidth clamped so that tau - h and tau + h stay strictly inside (0.001, 0.999).
/// Levels outside that band fall back to h = min(tau, 1 - tau) / 2.
inline double bandwidth(double tau, std::size_t n, BandwidthRule rule, double alpha = 0.05) {
    require(tau > 0.0 && tau < 1.0, "quantile level must lie in (0,1)");
    require(n >= 2, "bandwidth needs n >= 2");
    require(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0,1)");
    const double h = bandwidth_raw(tau, static_cast<double>(n), rule, alpha);
    const double room = std::min(tau - kBandwidthLower, kBandwidthUpper - tau);
    if (room <= 0.0) return 0.5 * std::min(tau, 1.0 - tau);
    return std::min(h, 0.99 * room);
}

// ---------------------------------------------------------------------------
// Options and results

struct FitOptions {
    int starts = 8;                     ///< total starting points (2 deterministic + random)
    std::uint64_t seed = 1;
    int iterations_per_order = 500;     ///< simplex iteration cap is this times p
    double rel_tol = 1e-9;
    bool polish = true;
    double grad_floor = kDefaultGradFloor;
    bool with_covariance = true;
    BandwidthRule bandwidth = BandwidthRule::HallSheather;
    double alpha = 0.05;
    bool constrain_beta_zero = false;   ///< fit the pure quantile AR sub-model (beta = 0)
    unsigned workers = 1;               ///< threads across starts
    int flank_starts = 2;               ///< starts for the tau +/- h fits (plus a warm start)
    std::optional<ThetaTau> warm_start;
    std::vector<ThetaTau> extra_starts;
};

struct BandwidthUsed {
    BandwidthRule rule = BandwidthRule::HallSheather;
    double value = 0.0;
};

struct FitResult {
    ThetaTau theta;
    int n = 0;                      ///< series length
    int p = 0;
    double loss = 0.0;              ///< weighted check loss / number of rows
    double objective = 0.0;         ///< unnormalised weighted check loss
    bool converged = false;
    int starts_tried = 0;
    int winning_start = 0;
    WeightScheme weights;
    std::uint64_t seed = 0;
    bool beta_constrained = false;
    std::vector<std::string> warnings;

    bool has_covariance = false;
    Matrix covariance;              ///< Sigma_hat(tau) / n
    Vector asd;                     ///< sqrt(diag(covariance))
    BandwidthUsed bandwidth;
    Matrix omega0;
    Matrix omega1;
    double ridge = 0.0;             ///< ridge added to Omega_1 (0 when not needed)
    std::vector<double> fhat;       ///< density quotients per row
    std::optional<ThetaTau> theta_lo;   ///< fit at tau - h
    std::optional<ThetaTau> theta_hi;   ///< fit at tau + h
};

// ---------------------------------------------------------------------------
// Objective

namespace detail {

/// Weighted check-loss objective on a fixed design. Holds scratch buffers, so
/// each thread needs its own instance.
class CheckLossObjective {
public:
    CheckLossObjective(const LaggedDesign& d, double tau, bool beta_zero)
        : d_(d), tau_(tau), beta_zero_(beta_zero), lags2_(d.lags.array().square()), loc_(d.rows()), h_(d.rows()) {}

    [[nodiscard]] int free_dim() const noexcept { return beta_zero_ ? d_.p + 1 : 2 * d_.p + 1; }

    /// Free vector -> full packed (phi, b, beta).
    [[nodiscard]] Vector expand(const Vector& x) const {
        if (!beta_zero_) return x;
        Vector full = Vector::Zero(2 * d_.p + 1);
        full.head(d_.p + 1) = x;
        return full;
    }

    [[nodiscard]] Vector restrict(const Vector& full) const {
        return beta_zero_ ? Vector(full.head(d_.p + 1)) : full;
    }

    double operator()(const Vector& x) {
        const int p = d_.p;
        if (!x.allFinite()) return std::numeric_limits<double>::infinity();
        loc_.noalias() = d_.lags * x.head(p);
        if (beta_zero_) {
            h_.setConstant(x[p]);
        } else {
            h_.noalias() = lags2_ * x.tail(p);
            h_.array() += x[p];
        }
        double total = 0.0;
        const double tau = tau_;
        for (int r = 0; r < d_.rows(); ++r) {
            const double res = d_.y[r] - loc_[r] - s_q(h_[r]);
            total += d_.w[r] * res * (tau - (res < 0.0 ? 1.0 : 0.0));
        }
        return std::isfinite(total) ? total : std::numeric_limits<double>::infinity();
    }

    /// Subgradient -sum w_t psi_tau(r_t) qdot_t with psi_tau(0) = tau and floored qdot.
    Vector gradient(const Vector& x, double floor) {
        const int p = d_.p;
        const Vector full = expand(x);
        Vector g = Vector::Zero(2 * p + 1);
        for (int r = 0; r < d_.rows(); ++r) {
            double loc = 0.0, h = full[p];
            for (int i = 0; i < p; ++i) {
                loc += full[i] * d_.lags(r, i);
                h += full[p + 1 + i] * lags2_(r, i);
            }
            const double res = d_.y[r] - loc - s_q(h);
            const double c = -d_.w[r] * psi(res, tau_);
            const double dh = 0.5 / std::sqrt(std::max(std::fabs(h), floor));
            for (int i = 0; i < p; ++i) {
                g[i] += c * d_.lags(r, i);
                g[p + 1 + i] += c * dh * lags2_(r, i);
            }
            g[p] += c * dh;
        }
        return restrict(g);
    }

private:
    const LaggedDesign& d_;
    double tau_;
    bool beta_zero_;
    Matrix lags2_;
    Vector loc_;
    Vector h_;
};

inline double weighted_quantile_of(std::vector<double> v, double tau) {
    std::sort(v.begin(), v.end());
    const double pos = tau * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

/// Weighted linear quantile regression of y on [1, X] by iteratively reweighted least squares.
inline Vector linear_quantile_regression(const Matrix& X, const Vector& y, const Vector& w, double tau) {
    const int n = static_cast<int>(y.size());
    Matrix A(n, X.cols() + 1);
    A.col(0).setOnes();
    A.rightCols(X.cols()) = X;
    Vector c = w;
    Vector gamma = (A.transpose() * c.asDiagonal() * A).ldlt().solve(A.transpose() * c.asDiagonal() * y);
    const double spread = std::max(1e-12, (y.array() - y.mean()).abs().mean());
    for (int it = 0; it < 40; ++it) {
        const Vector r = y - A * gamma;
        for (int t = 0; t < n; ++t) {
            const double a = std::max(std::fabs(r[t]), 1e-6 * spread);
            c[t] = w[t] * (r[t] >= 0.0 ? tau : 1.0 - tau) / a;
        }
        const Vector next = (A.transpose() * c.asDiagonal() * A).ldlt().solve(A.transpose() * c.asDiagonal() * y);
        if (!next.allFinite()) break;
        const double change = (next - gamma).norm();
        gamma = next;
        if (change < 1e-10 * (1.0 + gamma.norm())) break;
    }
    return gamma;
}

/// Deterministic starting points: (1) linear quantile regression for phi, b from the
/// residual tau-quantile, beta = 0.05 with signs from a squared-residual regression;
/// (2) a double-AR moment fit of the residual scale, mapped to (b, beta).
inline std::vector<Vector> deterministic_starts(const LaggedDesign& d, double tau) {
    const int p = d.p;
    const int n = d.rows();
    const Vector lqr = linear_quantile_regression(d.lags, d.y, d.w, tau);
    const Vector phi = lqr.tail(p);
    const Vector e = d.y - d.lags * phi;
    std::vector<double> ev(e.data(), e.data() + n);
    const double q_e = weighted_quantile_of(ev, tau);

    // squared residuals on [1, lag^2]
    Matrix Z(n, p + 1);
    Z.col(0).setOnes();
    Z.rightCols(p) = d.lags.array().square();
    const Vector e_c = e.array() - weighted_quantile_of(ev, 0.5);
    const Vector e2 = e_c.array().square();
    const Vector coef = (Z.transpose() * d.w.asDiagonal() * Z).ldlt().solve(Z.transpose() * d.w.asDiagonal() * e2);

    Vector s1(2 * p + 1);
    s1.head(p) = phi;
    s1[p] = s_q_inv(q_e);
    const double sign_b = s1[p] < 0.0 ? -1.0 : 1.0;
    for (int j = 0; j < p; ++j) s1[p + 1 + j] = 0.05 * sign_b * (coef[1 + j] < 0.0 ? -1.0 : 1.0);

    const double var_e = std::max(1e-12, e2.mean());
    const double a = std::max(coef[0], 0.05 * var_e);
    Vector c = coef.tail(p).cwiseMax(0.0);
    std::vector<double> z(n);
    for (int t = 0; t < n; ++t) {
        double s2 = a;
        for (int j = 0; j < p; ++j) s2 += c[j] * d.lags(t, j) * d.lags(t, j);
        z[t] = e[t] / std::sqrt(s2);
    }
    const double k = weighted_quantile_of(z, tau);
    const double k2 = s_q_inv(k);
    Vector s2v(2 * p + 1);
    s2v.head(p) = phi;
    s2v[p] = k2 * a;
    for (int j = 0; j < p; ++j) s2v[p + 1 + j] = k2 * c[j];
    return {s1, s2v};
}

struct MinimizeOutcome {
    Vector packed;
    double objective = std::numeric_limits<double>::infinity();
    bool converged = false;
    int starts_tried = 0;
    int winner = 0;
};

inline MinimizeOutcome minimize_check_loss(const LaggedDesign& d, double tau, const FitOptions& opts,
                                           int random_starts, const std::vector<Vector>& warm) {
    const int p = d.p;
    const bool beta_zero = opts.constrain_beta_zero;
    CheckLossObjective probe(d, tau, beta_zero);

    std::vector<Vector> starts = warm;
    for (const Vector& s : deterministic_starts(d, tau)) starts.push_back(s);
    const double var_y = std::max(1e-300, (d.y.array() - d.y.mean()).square().mean());

    // random perturbations of the better deterministic start
    if (random_starts > 0) {
        const std::size_t base_count = starts.size();
        std::size_t base = 0;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < base_count; ++i) {
            const double v = probe(probe.restrict(starts[i]));
            if (v < best) {
                best = v;
                base = i;
            }
        }
        Rng rng(derive_seed(opts.seed, 0x5157));
        for (int k = 0; k < random_starts; ++k) {
            Vector s = starts[base];
            for (int i = 0; i < p; ++i) s[i] += 0.1 * rng.normal();
            s[p] += (0.3 * std::fabs(s[p]) + 0.1 * var_y) * rng.normal();
            for (int j = 0; j < p; ++j) s[p + 1 + j] += (0.3 * std::fabs(s[p + 1 + j]) + 0.05) * rng.normal();
            starts.push_back(s);
        }
    }
    if (beta_zero)
        for (Vector& s : starts) s.tail(p).setZero();

    opt::SimplexOptions sopts;
    sopts.max_iterations = opts.iterations_per_order * p;
    sopts.rel_tol = opts.rel_tol;

    std::vector<opt::SimplexResult> results(starts.size());
    parallel_for(starts.size(), opts.workers, [&](std::size_t k) {
        CheckLossObjective obj(d, tau, beta_zero);
        const Vector x0 = obj.restrict(starts[k]);
        Vector steps(x0.size());
        for (int i = 0; i < p; ++i) steps[i] = 0.1;
        steps[p] = std::max(0.1 * std::fabs(x0[p]), 0.05 * var_y);
        if (!beta_zero)
            for (int j = 0; j < p; ++j) steps[p + 1 + j] = std::max(0.1 * std::fabs(x0[p + 1 + j]), 0.05);
        opt::SimplexResult r = opt::nelder_mead(obj, x0, steps, sopts);
        if (opts.polish && std::isfinite(r.f)) {
            opt::PolishOptions popts;
            popts.rel_tol = opts.rel_tol;
            const double floor = opts.grad_floor;
            const opt::SimplexResult q = opt::quasi_newton_polish(
                obj, [&obj, floor](const Vector& x) { return obj.gradient(x, floor); }, r.x, r.f, popts);
            if (q.f < r.f) {
                r.x = q.x;
                r.f = q.f;
            }
        }
        results[k] = std::move(r);
    });

    MinimizeOutcome out;
    out.starts_tried = static_cast<int>(starts.size());
    for (std::size_t k = 0; k < results.size(); ++k) {
        if (results[k].f < out.objective) {
            out.objective = results[k].f;
            out.packed = probe.expand(results[k].x);
            out.converged = results[k].converged;
            out.winner = static_cast<int>(k);
        }
    }
    // a start that exhausts its iteration budget has met the stopping rule too; only a
    // search that never left non-finite territory counts as a failure
    if (!std::isfinite(out.objective)) fail(ErrorKind::DidNotConverge, "no start produced a finite objective");
    return out;
}

inline double interquartile_range(const std::vector<double>& v) {
    return weighted_quantile_of(v, 0.75) - weighted_quantile_of(v, 0.25);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Density quotients and covariance

/// f_t = 2h / (q_t(theta_hi) - q_t(theta_lo)) per design row, clipped to [0, f_max].
inline std::vector<double> density_quotient(const LaggedDesign& d, const ThetaTau& lo, const ThetaTau& hi, double h,
                                            double f_max) {
    require(lo.order() == d.p && hi.order() == d.p, "flanking fits must share the design order");
    require(h > 0.0 && f_max > 0.0, "bandwidth and f_max must be positive");
    const Vector qlo = fitted_quantiles(lo, d);
    const Vector qhi = fitted_quantiles(hi, d);
    std::vector<double> f(static_cast<std::size_t>(d.rows()));
    for (int r = 0; r < d.rows(); ++r) {
        const double gap = qhi[r] - qlo[r];
        double v = gap > 0.0 ? 2.0 * h / gap : (gap < 0.0 ? 0.0 : f_max);
        f[r] = std::clamp(v, 0.0, f_max);
    }
    return f;
}

/// Clip level for density quotients: 10 / interquartile range of the series.
inline double density_clip(const SeriesSample& series) {
    const double iqr = detail::interquartile_range(series.values);
    return iqr > 0.0 ? 10.0 / iqr : 1e12;
}

struct CovarianceEstimate {
    Matrix omega0;
    Matrix omega1;
    Matrix covariance;   ///< Sigma_hat / n
    double ridge = 0.0;
};

/// Packed-parameter indices that are free (beta fixed at zero is excluded when constrained).
inline std::vector<int> free_indices(int p, bool beta_zero) {
    std::vector<int> idx;
    for (int i = 0; i < (beta_zero ? p + 1 : 2 * p + 1); ++i) idx.push_back(i);
    return idx;
}

/// Symmetric matrix with negative eigenvalues set to zero.
inline Matrix psd_project(const Matrix& m, double* deviation = nullptr) {
    const Matrix sym = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
    Vector ev = es.eigenvalues();
    double dev = 0.0;
    for (int i = 0; i < ev.size(); ++i)
        if (ev[i] < 0.0) {
            dev += ev[i] * ev[i];
            ev[i] = 0.0;
        }
    if (deviation) *deviation = std::sqrt(dev);
    const Matrix out = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
    return 0.5 * (out + out.transpose());
}

/// Omega0 = (1/n) sum w^2 qdot qdot', Omega1 = (1/n) sum f w qdot qdot',
/// Sigma = tau(1-tau) Omega1^{-1} Omega0 Omega1^{-1}; returns Sigma / n.
inline CovarianceEstimate asymptotic_covariance(const LaggedDesign& d, const ThetaTau& theta,
                                                const std::vector<double>& fhat, int n,
                                                double floor = kDefaultGradFloor, bool beta_zero = false) {
    require(static_cast<int>(fhat.size()) == d.rows(), "density quotients must match design rows");
    require(n > 0, "sample size must be positive");
    const int p = d.p;
    const auto idx = free_indices(p, beta_zero);
    const int k = static_cast<int>(idx.size());
    Matrix o0 = Matrix::Zero(k, k), o1 = Matrix::Zero(k, k);
    Vector g(k);
    for (int r = 0; r < d.rows(); ++r) {
        const auto lags = design_lags(d, r);
        const Vector full = cond_quantile_grad(theta, lags, floor);
        for (int i = 0; i < k; ++i) g[i] = full[idx[i]];
        o0.selfadjointView<Eigen::Lower>().rankUpdate(g, d.w[r] * d.w[r]);
        o1.selfadjointView<Eigen::Lower>().rankUpdate(g, fhat[r] * d.w[r]);
    }
    o0 = Matrix(o0.selfadjointView<Eigen::Lower>()) / static_cast<double>(n);
    o1 = Matrix(o1.selfadjointView<Eigen::Lower>()) / static_cast<double>(n);

    CovarianceEstimate est;
    est.omega0 = o0;
    est.omega1 = o1;
    Eigen::SelfAdjointEigenSolver<Matrix> es(o1);
    const Vector ev = es.eigenvalues();
    Matrix o1r = o1;
    if (!(ev.minCoeff() > 1e-12 * std::max(ev.maxCoeff(), 1e-300))) {
        est.ridge = 1e-8 * o1.trace() / static_cast<double>(k);
        o1r += est.ridge * Matrix::Identity(k, k);
        Eigen::SelfAdjointEigenSolver<Matrix> es2(o1r);
        if (!(es2.eigenvalues().minCoeff() > 0.0) || !std::isfinite(est.ridge) || est.ridge <= 0.0)
            fail(ErrorKind::SingularInformation, "Omega_1 is singular even after ridge regularisation");
    }
    const Eigen::LDLT<Matrix> ldlt(o1r);
    const Matrix inv = ldlt.solve(Matrix::Identity(k, k));
    if (!inv.allFinite()) fail(ErrorKind::SingularInformation, "Omega_1 inverse is not finite");
    const double tau = theta.tau;
    const Matrix sigma = psd_project(tau * (1.0 - tau) * inv * o0 * inv);

    const int full_dim = 2 * p + 1;
    est.covariance = Matrix::Zero(full_dim, full_dim);
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) est.covariance(idx[i], idx[j]) = sigma(i, j) / static_cast<double>(n);
    if (beta_zero) {
        Matrix o0f = Matrix::Zero(full_dim, full_dim), o1f = Matrix::Zero(full_dim, full_dim);
        for (int i = 0; i < k; ++i)
            for (int j = 0; j < k; ++j) {
                o0f(idx[i], idx[j]) = o0(i, j);
                o1f(idx[i], idx[j]) = o1(i, j);
            }
        est.omega0 = o0f;
        est.omega1 = o1f;
    }
    return est;
}

// ---------------------------------------------------------------------------
// Fitting

/// Minimises sum w_t rho_tau(y_t - q_t(theta)) over the rows of an existing design.
/// `n_total` is the series length used to normalise the covariance.
inline FitResult fit_design(const LaggedDesign& d, double tau, const FitOptions& opts, int n_total,
                            const WeightScheme& scheme, double f_max) {
    require(tau > 0.0 && tau < 1.0, "quantile level must lie in (0,1)");
    const int p = d.p;
    if (d.rows() < 10 * (2 * p + 1) - p)
        fail(ErrorKind::InsufficientData, "need at least 10(2p+1) observations for order " + std::to_string(p));
    if ((d.y.array() == d.y[0]).all()) fail(ErrorKind::Degenerate, "series is constant");

    std::vector<Vector> warm;
    if (opts.warm_start) {
        require(opts.warm_start->order() == p, "warm start order mismatch");
        warm.push_back(opts.warm_start->packed());
    }
    for (const ThetaTau& s : opts.extra_starts) {
        require(s.order() == p, "extra start order mismatch");
        warm.push_back(s.packed());
    }
    const int random_starts = std::max(0, opts.starts - 2);
    const detail::MinimizeOutcome m = detail::minimize_check_loss(d, tau, opts, random_starts, warm);

    FitResult fr;
    fr.theta = ThetaTau::unpack(tau, m.packed);
    fr.n = n_total;
    fr.p = p;
    fr.objective = m.objective;
    fr.loss = m.objective / static_cast<double>(d.rows());
    fr.converged = m.converged;
    fr.starts_tried = m.starts_tried;
    fr.winning_start = m.winner;
    fr.weights = scheme;
    fr.seed = opts.seed;
    fr.beta_constrained = opts.constrain_beta_zero;
    if (!fr.converged)
        fr.warnings.push_back("best start stopped at the iteration cap before meeting the relative tolerance");
    if (tau > 0.45 && tau < 0.55)
        fr.warnings.push_back("quantile level near 0.5: b(tau) and beta(tau) may be close to zero and the "
                              "estimate unreliable");

    if (opts.with_covariance) {
        const double h = bandwidth(tau, static_cast<std::size_t>(n_total), opts.bandwidth, opts.alpha);
        FitOptions flank = opts;
        flank.with_covariance = false;
        flank.starts = opts.flank_starts;
        flank.warm_start = fr.theta;
        flank.extra_starts.clear();
        flank.seed = derive_seed(opts.seed, 0xF1A);
        auto fit_flank = [&](double level) {
            ThetaTau ws = fr.theta;
            ws.tau = level;
            flank.warm_start = ws;
            const auto mo = detail::minimize_check_loss(d, level, flank, std::max(0, flank.starts - 2),
                                                        {ws.packed()});
            return ThetaTau::unpack(level, mo.packed);
        };
        const ThetaTau lo = fit_flank(tau - h);
        const ThetaTau hi = fit_flank(tau + h);
        fr.fhat = density_quotient(d, lo, hi, h, f_max);
        const CovarianceEstimate ce =
            asymptotic_covariance(d, fr.theta, fr.fhat, n_total, opts.grad_floor, opts.constrain_beta_zero);
        fr.omega0 = ce.omega0;
        fr.omega1 = ce.omega1;
        fr.covariance = ce.covariance;
        fr.ridge = ce.ridge;
        fr.asd = fr.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
        fr.bandwidth = {opts.bandwidth, h};
        fr.has_covariance = true;
        fr.theta_lo = lo;
        fr.theta_hi = hi;
        if (ce.ridge > 0.0) fr.warnings.push_back("Omega_1 ridge-regularised by " + std::to_string(ce.ridge));
    }
    return fr;
}

/// Self-weighted conditional quantile estimate at level tau and order p.
inline FitResult fit(const SeriesSample& series, double tau, int p, const WeightScheme& scheme = {},
                     const FitOptions& opts = {}) {
    require(tau > 0.0 && tau < 1.0, "quantile level must lie in (0,1)");
    require(p >= 1, "model order must be >= 1");
    series.validate();
    const int n = static_cast<int>(series.size());
    if (n < 10 * (2 * p + 1))
        fail(ErrorKind::InsufficientData, "need at least 10(2p+1) = " + std::to_string(10 * (2 * p + 1)) +
                                              " observations, got " + std::to_string(n));
    if (std::all_of(series.values.begin(), series.values.end(), [&](double v) { return v == series.values[0]; }))
        fail(ErrorKind::Degenerate, "series is constant");
    const LaggedDesign d = make_design(series, p, scheme);
    return fit_design(d, tau, opts, n, scheme, density_clip(series));
}

/// Q_hat_tau(y_{n+1} | F_n) from the p most recent values (most-recent-first).
inline double forecast_one_step(const FitResult& fit, std::span<const double> last_p_values) {
    return cond_quantile(fit.theta, last_p_values);
}

/// Most-recent-first lag vector at the end of a series.
inline std::vector<double> last_values(const SeriesSample& s, int p) {
    if (static_cast<int>(s.size()) < p) fail(ErrorKind::InsufficientData, "series shorter than p");
    std::vector<double> out(p);
    for (int i = 0; i < p; ++i) out[i] = s.values[s.size() - 1 - i];
    return out;
}

// ---------------------------------------------------------------------------
// Several levels at once

struct MultiFit {
    std::vector<double> levels;
    std::vector<std::optional<FitResult>> fits;
    std::vector<std::string> status;   ///< "ok" or the error message per level
    Matrix fitted;                     ///< levels x rows of fitted quantiles (NaN for failed levels)
    bool rearranged = false;

    [[nodiscard]] bool all_ok() const {
        return std::all_of(fits.begin(), fits.end(), [](const auto& f) { return f.has_value(); });
    }
};

/// Sorts each column in place across rows of fitted quantiles, skipping NaN rows.
inline void rearrange_columns(Matrix& q) {
    std::vector<int> valid;
    for (int k = 0; k < q.rows(); ++k)
        if (q.row(k).allFinite()) valid.push_back(k);
    std::vector<double> col(valid.size());
    for (int t = 0; t < q.cols(); ++t) {
        for (std::size_t i = 0; i < valid.size(); ++i) col[i] = q(valid[i], t);
        std::sort(col.begin(), col.end());
        for (std::size_t i = 0; i < valid.size(); ++i) q(valid[i], t) = col[i];
    }
}

/// Independent fits per level; fitted quantile values (never parameters) are optionally
/// rearranged into monotone order across levels.
inline MultiFit fit_levels(const SeriesSample& series, const std::vector<double>& levels, int p,
                           const WeightScheme& scheme = {}, const FitOptions& opts = {}, bool rearrange = true,
                           unsigned workers = 1) {
    require(!levels.empty(), "need at least one level");
    for (std::size_t k = 0; k < levels.size(); ++k) {
        require(levels[k] > 0.0 && levels[k] < 1.0, "levels must lie in (0,1)");
        if (k > 0) require(levels[k] > levels[k - 1], "levels must be strictly increasing");
    }
    MultiFit mf;
    mf.levels = levels;
    mf.fits.resize(levels.size());
    mf.status.assign(levels.size(), "ok");
    parallel_for(levels.size(), workers, [&](std::size_t k) {
        FitOptions o = opts;
        o.seed = derive_seed(opts.seed, k);
        try {
            mf.fits[k] = fit(series, levels[k], p, scheme, o);
        } catch (const Error& e) {
            mf.status[k] = e.what();
        }
    });
    const LaggedDesign d = make_design(series, p, scheme);
    mf.fitted = Matrix::Constant(static_cast<int>(levels.size()), d.rows(), std::numeric_limits<double>::quiet_NaN());
    for (std::size_t k = 0; k < levels.size(); ++k)
        if (mf.fits[k]) mf.fitted.row(static_cast<int>(k)) = fitted_quantiles(mf.fits[k]->theta, d).transpose();
    if (rearrange) {
        rearrange_columns(mf.fitted);
        mf.rearranged = true;
    }
    return mf;
}

/// One-step forecasts at every fitted level, optionally rearranged.
inline std::vector<double> forecast_levels(const MultiFit& mf, std::span<const double> last_p_values,
                                           bool rearrange = true) {
    std::vector<double> out(mf.levels.size(), std::numeric_limits<double>::quiet_NaN());
    std::vector<double> ok;
    for (std::size_t k = 0; k < mf.fits.size(); ++k)
        if (mf.fits[k]) {
            out[k] = forecast_one_step(*mf.fits[k], last_p_values);
            ok.push_back(out[k]);
        }
    if (rearrange) {
        std::sort(ok.begin(), ok.end());
        std::size_t i = 0;
        for (auto& v : out)
            if (std::isfinite(v)) v = ok[i++];
    }
    return out;
}

}  // namespace qdar
