#pragma once

// Model primitives for the quantile double autoregression
//
//   Q_tau(y_t | F_{t-1}) = sum_i phi_i(tau) y_{t-i} + S_Q(b(tau) + sum_j beta_j(tau) y_{t-j}^2)
//
// Lag vectors are always most-recent-first: lags[0] = y_{t-1}, ..., lags[p-1] = y_{t-p}.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "qdar/errors.hpp"

namespace qdar {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr double kDefaultGradFloor = 1e-8;

// ---------------------------------------------------------------------------
// Scalar transforms

/// sqrt(|x|) sgn(x): the odd extension of the square root.
inline double s_q(double x) noexcept { return std::copysign(std::sqrt(std::fabs(x)), x); }

/// x^2 sgn(x), the inverse of s_q.
inline double s_q_inv(double x) noexcept { return x * std::fabs(x); }

/// Check function rho_tau(x) = x (tau - I(x < 0)).
inline double check_loss(double x, double tau) noexcept { return x * (tau - (x < 0.0 ? 1.0 : 0.0)); }

/// psi_tau(x) = tau - I(x < 0). The indicator is strict, so psi_tau(0) = tau.
inline double psi(double x, double tau) noexcept { return tau - (x < 0.0 ? 1.0 : 0.0); }

// ---------------------------------------------------------------------------
// Domain types

/// theta_tau = (phi', b, beta')' at one quantile level.
struct ThetaTau {
    double tau = 0.5;
    std::vector<double> phi;
    double b = 0.0;
    std::vector<double> beta;

    [[nodiscard]] int order() const noexcept { return static_cast<int>(phi.size()); }
    [[nodiscard]] int dim() const noexcept { return 2 * order() + 1; }

    void validate() const {
        require(tau > 0.0 && tau < 1.0, "quantile level must lie in (0,1)");
        require(!phi.empty() && phi.size() == beta.size(), "phi and beta must have equal length p >= 1");
        bool finite = std::isfinite(b);
        for (double v : phi) finite = finite && std::isfinite(v);
        for (double v : beta) finite = finite && std::isfinite(v);
        if (!finite) fail(ErrorKind::NonFinite, "ThetaTau has non-finite entries");
    }

    /// Packed as (phi_1..phi_p, b, beta_1..beta_p).
    [[nodiscard]] Vector packed() const {
        const int p = order();
        Vector v(2 * p + 1);
        for (int i = 0; i < p; ++i) v[i] = phi[i];
        v[p] = b;
        for (int j = 0; j < p; ++j) v[p + 1 + j] = beta[j];
        return v;
    }

    static ThetaTau unpack(double tau, const Vector& v) {
        require(v.size() % 2 == 1 && v.size() >= 3, "packed parameter vector must have odd length 2p+1");
        const int p = static_cast<int>((v.size() - 1) / 2);
        ThetaTau t;
        t.tau = tau;
        t.phi.resize(p);
        t.beta.resize(p);
        for (int i = 0; i < p; ++i) t.phi[i] = v[i];
        t.b = v[p];
        for (int j = 0; j < p; ++j) t.beta[j] = v[p + 1 + j];
        return t;
    }
};

/// An observed univariate series y_1..y_n.
struct SeriesSample {
    std::vector<double> values;
    std::string origin;

    [[nodiscard]] std::size_t size() const noexcept { return values.size(); }

    void validate() const {
        for (std::size_t i = 0; i < values.size(); ++i)
            if (!std::isfinite(values[i]))
                fail(ErrorKind::NonFinite, "series value at index " + std::to_string(i + 1) + " is not finite");
    }
};

enum class WeightKind { SelfWeightCubic, Unit };

/// `order` is the lag depth of the weight denominator; 0 means "same as the fitted order".
struct WeightScheme {
    WeightKind kind = WeightKind::SelfWeightCubic;
    int order = 0;

    [[nodiscard]] int depth(int p) const noexcept { return order > 0 ? order : p; }
};

// ---------------------------------------------------------------------------
// Conditional quantile function

inline double scale_argument(const ThetaTau& theta, std::span<const double> lags) noexcept {
    double h = theta.b;
    for (std::size_t j = 0; j < theta.beta.size(); ++j) h += theta.beta[j] * lags[j] * lags[j];
    return h;
}

/// q_t(theta) given the p most recent observations (most-recent-first).
inline double cond_quantile(const ThetaTau& theta, std::span<const double> lags) {
    require(lags.size() == theta.phi.size(), "lag vector length must equal the model order");
    double loc = 0.0;
    for (std::size_t i = 0; i < theta.phi.size(); ++i) loc += theta.phi[i] * lags[i];
    return loc + s_q(scale_argument(theta, lags));
}

/// Gradient of q_t with respect to (phi, b, beta). |h_t| is floored at `floor`
/// so the derivative stays finite at the S_Q kink.
inline Vector cond_quantile_grad(const ThetaTau& theta, std::span<const double> lags,
                                 double floor = kDefaultGradFloor) {
    require(lags.size() == theta.phi.size(), "lag vector length must equal the model order");
    require(floor > 0.0, "gradient floor must be positive");
    const int p = theta.order();
    const double h = std::fabs(scale_argument(theta, lags));
    const double d = 0.5 / std::sqrt(std::max(h, floor));
    Vector g(2 * p + 1);
    for (int i = 0; i < p; ++i) g[i] = lags[i];
    g[p] = d;
    for (int j = 0; j < p; ++j) g[p + 1 + j] = d * lags[j] * lags[j];
    return g;
}

// ---------------------------------------------------------------------------
// Weights and lagged design

/// Weights w_t for t = p+1..n (returned 0-based, index 0 is t = p+1).
/// SelfWeightCubic: w_t = 1 / (1 + sum_{i=1..d} |y_{t-i}|^3) with d = scheme.depth(p).
inline std::vector<double> self_weights(const SeriesSample& series, int p, const WeightScheme& scheme) {
    const int n = static_cast<int>(series.size());
    require(p >= 1 && n > p, "self_weights requires n > p >= 1");
    const int depth = scheme.depth(p);
    std::vector<double> w(static_cast<std::size_t>(n - p), 1.0);
    if (scheme.kind == WeightKind::Unit) return w;
    for (int t = p; t < n; ++t) {
        double s = 1.0;
        for (int i = 1; i <= depth && t - i >= 0; ++i) {
            const double a = std::fabs(series.values[t - i]);
            s += a * a * a;
        }
        w[t - p] = 1.0 / s;
    }
    return w;
}

/// The rows (y_t, lags_t, w_t) entering a fit, for t = first..n-1 (0-based).
/// Built once per (series, order, weights, first row) and shared by every fit on it.
struct LaggedDesign {
    int p = 0;
    int first = 0;              ///< 0-based index of the first response row
    Vector y;                   ///< responses
    Matrix lags;                ///< rows x p, column i holds y_{t-1-i}
    Vector w;                   ///< weights

    [[nodiscard]] int rows() const noexcept { return static_cast<int>(y.size()); }
};

/// `first` defaults to p; a larger value trims the sample (common-sample order selection).
inline LaggedDesign make_design(const SeriesSample& series, int p, const WeightScheme& scheme, int first = -1) {
    const int n = static_cast<int>(series.size());
    if (first < 0) first = p;
    require(p >= 1, "model order must be >= 1");
    require(first >= p, "first response row must leave p lags");
    if (n - first < 1) fail(ErrorKind::InsufficientData, "series too short for the requested order");
    const int depth = scheme.depth(p);
    require(first >= depth || scheme.kind == WeightKind::Unit, "weight depth exceeds available lags");
    LaggedDesign d;
    d.p = p;
    d.first = first;
    const int rows = n - first;
    d.y.resize(rows);
    d.lags.resize(rows, p);
    d.w.resize(rows);
    for (int r = 0; r < rows; ++r) {
        const int t = first + r;
        d.y[r] = series.values[t];
        for (int i = 0; i < p; ++i) d.lags(r, i) = series.values[t - 1 - i];
        double s = 1.0;
        if (scheme.kind == WeightKind::SelfWeightCubic) {
            for (int i = 1; i <= depth; ++i) {
                const double a = std::fabs(series.values[t - i]);
                s += a * a * a;
            }
        }
        d.w[r] = 1.0 / s;
    }
    return d;
}

/// Lags at row r of a design as a contiguous vector (most-recent-first).
inline std::vector<double> design_lags(const LaggedDesign& d, int r) {
    std::vector<double> out(static_cast<std::size_t>(d.p));
    for (int i = 0; i < d.p; ++i) out[i] = d.lags(r, i);
    return out;
}

/// Fitted conditional quantiles q_t(theta) over every row of the design.
inline Vector fitted_quantiles(const ThetaTau& theta, const LaggedDesign& d) {
    require(theta.order() == d.p, "theta order does not match design");
    Vector q(d.rows());
    for (int r = 0; r < d.rows(); ++r) {
        double loc = 0.0;
        double h = theta.b;
        for (int i = 0; i < d.p; ++i) {
            const double l = d.lags(r, i);
            loc += theta.phi[i] * l;
            h += theta.beta[i] * l * l;
        }
        q[r] = loc + s_q(h);
    }
    return q;
}

/// Quantile residuals eta_t = y_t - q_t(theta) for t = p+1..n.
inline std::vector<double> residuals(const ThetaTau& theta, const SeriesSample& series) {
    const int p = theta.order();
    require(p >= 1, "theta must have order >= 1");
    if (static_cast<int>(series.size()) <= p) fail(ErrorKind::InsufficientData, "series shorter than p+1");
    std::vector<double> out;
    out.reserve(series.size() - p);
    std::vector<double> lags(p);
    for (std::size_t t = p; t < series.size(); ++t) {
        for (int i = 0; i < p; ++i) lags[i] = series.values[t - 1 - i];
        out.push_back(series.values[t] - cond_quantile(theta, lags));
    }
    return out;
}

}  // namespace qdar
