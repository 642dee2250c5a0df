#pragma once

// Self-weighted residual quantile autocorrelations, their joint asymptotic covariance
// and the portmanteau tests Q1(K), Q2(K), Q(K) with simulated null distributions.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "qdar/core.hpp"
#include "qdar/distributions.hpp"
#include "qdar/estimate.hpp"
#include "qdar/parallel.hpp"
#include "qdar/rng.hpp"

namespace qdar {

struct QacfReport {
    int K = 0;
    int n = 0;
    int p = 0;
    double tau = 0.0;
    Vector rho;            ///< rho_hat_1..K
    Vector r;              ///< r_hat_1..K
    Matrix pi_hat;         ///< 2K x 2K, ordered (rho_1..rho_K, r_1..r_K)
    double psd_deviation = 0.0;
    Vector ci_halfwidths;  ///< 2K half-widths z_{0.975} sqrt(Pi_kk / n)
    double mu1 = 0.0, mu2 = 0.0, sigma1_sq = 0.0, sigma2_sq = 0.0;
};

struct QacfStatistics {
    Vector rho;
    Vector r;
    double mu1 = 0.0, mu2 = 0.0, sigma1_sq = 0.0, sigma2_sq = 0.0;
};

/// rho_k and r_k from residuals eta_t and weights w_t for t = p+1..n (index 0 is t = p+1).
inline QacfStatistics qacf_statistics(const Vector& eta, const Vector& w, double tau, int K) {
    require(eta.size() == w.size(), "residuals and weights must align");
    const int N = static_cast<int>(eta.size());
    require(K >= 1 && N > K, "need more residuals than lags");
    QacfStatistics s;
    const Vector aeta = eta.cwiseAbs();
    s.mu1 = eta.mean();
    s.mu2 = aeta.mean();
    s.sigma1_sq = (eta.array() - s.mu1).square().mean();
    s.sigma2_sq = (aeta.array() - s.mu2).square().mean();
    if (!(s.sigma1_sq > 0.0) || !(s.sigma2_sq > 0.0)) fail(ErrorKind::Degenerate, "residuals have zero dispersion");
    const double c1 = 1.0 / (std::sqrt((tau - tau * tau) * s.sigma1_sq) * N);
    const double c2 = 1.0 / (std::sqrt((tau - tau * tau) * s.sigma2_sq) * N);
    s.rho = Vector::Zero(K);
    s.r = Vector::Zero(K);
    for (int k = 1; k <= K; ++k) {
        double a = 0.0, b = 0.0;
        for (int t = k; t < N; ++t) {
            const double wp = w[t] * psi(eta[t], tau);
            a += wp * (eta[t - k] - s.mu1);
            b += wp * (aeta[t - k] - s.mu2);
        }
        s.rho[k - 1] = c1 * a;
        s.r[k - 1] = c2 * b;
    }
    return s;
}

/// Residual QACFs of a fitted model.
///
///   rho_k = [(tau - tau^2) s1^2]^{-1/2} (n-p)^{-1} sum_{t=p+k+1}^n w_t psi(eta_t) (eta_{t-k} - mu1)
///   r_k   = [(tau - tau^2) s2^2]^{-1/2} (n-p)^{-1} sum_{t=p+k+1}^n w_t psi(eta_t) (|eta_{t-k}| - mu2)
///
/// Pi = Psi + H Xi H' - M Omega1^{-1} H' - H Omega1^{-1} M' with sample averages over
/// t = p+1..n (lagged entries that fall before the sample contribute zero); lagged
/// residuals enter H, M and Psi centred at mu1 and mu2, as they do in the statistic.
/// `fhat` are density quotients for rows t = p+1..n (the fit's own are used when empty).
inline QacfReport qacf(const SeriesSample& series, const FitResult& fit, int K, std::vector<double> fhat = {},
                       double level = 0.95) {
    require(K >= 1, "K must be >= 1");
    const int p = fit.p;
    const int n = static_cast<int>(series.size());
    const int N = n - p;
    if (N <= K + 10) fail(ErrorKind::InsufficientData, "need n - p > K + 10 for the QACF lag window");
    if (fhat.empty()) fhat = fit.fhat;
    require(static_cast<int>(fhat.size()) == N, "density quotients must cover t = p+1..n");
    require(fit.omega1.rows() == 2 * p + 1, "fit carries no Omega estimates (fit with covariance enabled)");

    const double tau = fit.theta.tau;
    const LaggedDesign d = make_design(series, p, fit.weights);
    const Vector q = fitted_quantiles(fit.theta, d);
    const Vector eta = d.y - q;
    const Vector aeta = eta.cwiseAbs();

    const QacfStatistics st = qacf_statistics(eta, d.w, tau, K);
    QacfReport rep;
    rep.K = K;
    rep.n = n;
    rep.p = p;
    rep.tau = tau;
    rep.rho = st.rho;
    rep.r = st.r;
    rep.mu1 = st.mu1;
    rep.mu2 = st.mu2;
    rep.sigma1_sq = st.sigma1_sq;
    rep.sigma2_sq = st.sigma2_sq;
    const double s1 = std::sqrt(rep.sigma1_sq), s2 = std::sqrt(rep.sigma2_sq);

    // centred, standardised lagged residual vector eps_{t-1} of length 2K per row
    Matrix eps = Matrix::Zero(N, 2 * K);
    for (int r = 0; r < N; ++r)
        for (int k = 1; k <= K; ++k)
            if (r - k >= 0) {
                eps(r, k - 1) = (eta[r - k] - rep.mu1) / s1;
                eps(r, K + k - 1) = (aeta[r - k] - rep.mu2) / s2;
            }

    const auto idx = free_indices(p, fit.beta_constrained);
    const int dim = static_cast<int>(idx.size());
    Matrix qdot(N, dim);
    for (int r = 0; r < N; ++r) {
        const auto lags = design_lags(d, r);
        const Vector g = cond_quantile_grad(fit.theta, lags);
        for (int i = 0; i < dim; ++i) qdot(r, i) = g[idx[i]];
    }
    Matrix o0(dim, dim), o1(dim, dim);
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j) {
            o0(i, j) = fit.omega0(idx[i], idx[j]);
            o1(i, j) = fit.omega1(idx[i], idx[j]);
        }
    if (fit.ridge > 0.0) o1 += fit.ridge * Matrix::Identity(dim, dim);
    const Matrix o1inv = o1.ldlt().solve(Matrix::Identity(dim, dim));
    if (!o1inv.allFinite()) fail(ErrorKind::SingularInformation, "Omega_1 is not invertible");
    const Matrix xi = o1inv * o0 * o1inv;

    Vector wf(N), w2(N);
    for (int r = 0; r < N; ++r) {
        wf[r] = d.w[r] * fhat[r];
        w2[r] = d.w[r] * d.w[r];
    }
    const double inv_n = 1.0 / static_cast<double>(N);
    const Matrix H = eps.transpose() * wf.asDiagonal() * qdot * inv_n;
    const Matrix M = eps.transpose() * w2.asDiagonal() * qdot * inv_n;
    const Matrix Psi = eps.transpose() * w2.asDiagonal() * eps * inv_n;
    const Matrix pi = Psi + H * xi * H.transpose() - M * o1inv * H.transpose() - H * o1inv * M.transpose();
    rep.pi_hat = psd_project(pi, &rep.psd_deviation);

    const double z = normal_quantile(0.5 + level / 2.0);
    rep.ci_halfwidths = (rep.pi_hat.diagonal().cwiseMax(0.0).cwiseSqrt() * (z / std::sqrt(static_cast<double>(n))));
    return rep;
}

struct ConfidenceBand {
    int lag = 0;
    bool is_abs = false;  ///< false for rho_k, true for r_k
    double estimate = 0.0;
    double half_width = 0.0;

    [[nodiscard]] bool covers_zero() const { return std::fabs(estimate) <= half_width; }
};

/// half-width_k = z_{(1+level)/2} sqrt(Pi_kk) / sqrt(n) for every rho and r lag.
inline std::vector<ConfidenceBand> qacf_confidence_bands(const QacfReport& rep, int n, double level = 0.95) {
    require(n > 0, "n must be positive");
    require(level > 0.0 && level < 1.0, "confidence level must lie in (0,1)");
    require(rep.pi_hat.rows() == 2 * rep.K, "report has no covariance");
    const double z = normal_quantile(0.5 + level / 2.0);
    std::vector<ConfidenceBand> out;
    for (int i = 0; i < 2 * rep.K; ++i) {
        ConfidenceBand b;
        b.lag = i % rep.K + 1;
        b.is_abs = i >= rep.K;
        b.estimate = b.is_abs ? rep.r[i - rep.K] : rep.rho[i];
        b.half_width = z * std::sqrt(std::max(0.0, rep.pi_hat(i, i))) / std::sqrt(static_cast<double>(n));
        out.push_back(b);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Portmanteau tests

enum class FactorKind { Eigen, Cholesky };

/// A with A A' = Sigma for a symmetric PSD Sigma.
inline Matrix psd_factor(const Matrix& sigma, FactorKind kind = FactorKind::Eigen) {
    const Matrix sym = 0.5 * (sigma + sigma.transpose());
    if (kind == FactorKind::Eigen) {
        Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
        const Vector root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
        return es.eigenvectors() * root.asDiagonal();
    }
    // pivoted LDL': P' L D L' P
    const Eigen::LDLT<Matrix> ldlt(sym);
    const int k = static_cast<int>(sym.rows());
    Matrix L = ldlt.matrixL();
    const Vector root = ldlt.vectorD().cwiseMax(0.0).cwiseSqrt();
    Matrix A = ldlt.transpositionsP().transpose() * (L * root.asDiagonal());
    if (!A.allFinite()) A = Matrix::Zero(k, k);
    return A;
}

struct PortmanteauResult {
    int K = 0;
    double q1 = 0.0, q2 = 0.0, q = 0.0;
    double p1 = 1.0, p2 = 1.0, p_comb = 1.0;
    int B = 0;
    std::uint64_t seed = 0;
};

inline constexpr int kDefaultNullDraws = 10000;

/// Q1 = n sum rho^2, Q2 = n sum r^2, Q = Q1 + Q2; p-values are the fraction of B draws
/// z ~ N(0, Pi_hat) with z1'z1 >= Q1, z2'z2 >= Q2, z'z >= Q. Draws come in blocks of
/// 1000 with per-block seeds, so results do not depend on the worker count.
inline PortmanteauResult portmanteau(const QacfReport& rep, int n, int B = kDefaultNullDraws, std::uint64_t seed = 1,
                                     FactorKind factor = FactorKind::Eigen, unsigned workers = 1) {
    require(B >= 1000, "need at least 1000 null draws");
    require(n > 0 && rep.K >= 1, "invalid report");
    const int K = rep.K;
    PortmanteauResult res;
    res.K = K;
    res.B = B;
    res.seed = seed;
    res.q1 = n * rep.rho.squaredNorm();
    res.q2 = n * rep.r.squaredNorm();
    res.q = res.q1 + res.q2;

    const Matrix A = psd_factor(rep.pi_hat, factor);
    constexpr int kBlock = 1000;
    const int blocks = (B + kBlock - 1) / kBlock;
    std::vector<std::array<long, 3>> counts(blocks, {0, 0, 0});
    parallel_for(static_cast<std::size_t>(blocks), workers, [&](std::size_t blk) {
        Rng rng(derive_seed(seed, blk));
        const int lo = static_cast<int>(blk) * kBlock;
        const int hi = std::min(B, lo + kBlock);
        Vector e(2 * K);
        for (int b = lo; b < hi; ++b) {
            for (int i = 0; i < 2 * K; ++i) e[i] = rng.normal();
            const Vector z = A * e;
            const double z1 = z.head(K).squaredNorm();
            const double z2 = z.tail(K).squaredNorm();
            counts[blk][0] += z1 >= res.q1;
            counts[blk][1] += z2 >= res.q2;
            counts[blk][2] += z1 + z2 >= res.q;
        }
    });
    long c1 = 0, c2 = 0, c3 = 0;
    for (const auto& c : counts) {
        c1 += c[0];
        c2 += c[1];
        c3 += c[2];
    }
    res.p1 = static_cast<double>(c1) / B;
    res.p2 = static_cast<double>(c2) / B;
    res.p_comb = static_cast<double>(c3) / B;
    return res;
}

}  // namespace qdar
