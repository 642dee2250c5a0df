#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "qdar/core.hpp"
#include "qdar/distributions.hpp"
#include "qdar/parallel.hpp"
#include "qdar/rng.hpp"

namespace qdar {

using CoefFn = std::function<double(double)>;

/// Quantile-indexed coefficient curves b(.), phi_i(.), beta_j(.) of a QDAR process.
struct CoefficientFunctions {
    CoefFn b_fn;
    std::vector<CoefFn> phi_fns;
    std::vector<CoefFn> beta_fns;
    std::string description;

    [[nodiscard]] int order() const noexcept { return static_cast<int>(phi_fns.size()); }

    /// theta_tau of the process at level tau.
    [[nodiscard]] ThetaTau at(double tau) const {
        ThetaTau t;
        t.tau = tau;
        t.b = b_fn(tau);
        for (const auto& f : phi_fns) t.phi.push_back(f(tau));
        for (const auto& f : beta_fns) t.beta.push_back(f(tau));
        return t;
    }

    /// True when b and every beta_j are non-decreasing on a grid of `points` levels,
    /// the sufficient condition under which the QDAR right-hand side is monotone in tau.
    [[nodiscard]] bool scale_curves_nondecreasing(int points = 999) const {
        auto nondecreasing = [points](const CoefFn& f) {
            double prev = f(1.0 / (points + 1));
            for (int k = 2; k <= points; ++k) {
                const double cur = f(static_cast<double>(k) / (points + 1));
                if (cur < prev - 1e-12 * (1.0 + std::fabs(prev))) return false;
                prev = cur;
            }
            return true;
        };
        if (!nondecreasing(b_fn)) return false;
        for (const auto& f : beta_fns)
            if (!nondecreasing(f)) return false;
        return true;
    }

    void validate(int points = 199) const {
        require(static_cast<bool>(b_fn), "b function missing");
        require(!phi_fns.empty() && phi_fns.size() == beta_fns.size(),
                "phi and beta curves must have equal length p >= 1");
        for (int k = 1; k <= points; ++k) {
            const double tau = static_cast<double>(k) / (points + 1);
            const ThetaTau t = at(tau);
            bool finite = std::isfinite(t.b);
            for (double v : t.phi) finite = finite && std::isfinite(v);
            for (double v : t.beta) finite = finite && std::isfinite(v);
            if (!finite) fail(ErrorKind::NonFinite, "coefficient curve not finite at tau=" + std::to_string(tau));
        }
    }
};

/// Classical double AR: y_t = sum phi_i y_{t-i} + eps_t sqrt(omega + sum beta_j y_{t-j}^2).
struct DoubleArSpec {
    std::vector<double> phi;
    double omega = 1.0;
    std::vector<double> beta;
    Innovation innovation = Innovation::normal();

    void validate() const {
        require(!phi.empty() && phi.size() == beta.size(), "phi and beta must have equal length p >= 1");
        require(omega > 0.0, "omega must be positive");
        for (double b : beta) require(b >= 0.0, "beta_j must be nonnegative");
    }
};

/// The QDAR embedding of a double AR model: b(tau) = s_q_inv(b_tau sqrt(omega)),
/// phi_i(tau) = phi_i, beta_j(tau) = b(tau) beta_j / omega, with b_tau the
/// tau-quantile of the (unstandardised) innovation.
inline CoefficientFunctions from_double_ar(const DoubleArSpec& spec) {
    spec.validate();
    CoefficientFunctions c;
    const double omega = spec.omega;
    const Innovation inn = spec.innovation;
    auto b = [inn, omega](double tau) { return s_q_inv(inn.quantile(tau) * std::sqrt(omega)); };
    c.b_fn = b;
    for (double phi : spec.phi) c.phi_fns.emplace_back([phi](double) { return phi; });
    for (double beta : spec.beta)
        c.beta_fns.emplace_back([b, beta, omega](double tau) { return b(tau) * beta / omega; });
    c.description = "double AR embedding, " + inn.name() + " innovations";
    return c;
}

/// Iterates y_t = sum phi_i(u_t) y_{t-i} + S_Q(b(u_t) + sum beta_j(u_t) y_{t-j}^2)
/// from a zero initial state over the supplied uniforms, dropping the first `burn_in` values.
inline SeriesSample simulate_qdar_from_uniforms(const CoefficientFunctions& coefs, std::span<const double> uniforms,
                                                std::size_t burn_in) {
    const int p = coefs.order();
    require(p >= 1, "coefficient functions must have order >= 1");
    const std::size_t total = uniforms.size();
    require(total >= burn_in, "fewer uniforms than burn-in");
    std::vector<double> path(total + p, 0.0);
    for (std::size_t s = 0; s < total; ++s) {
        const double u = uniforms[s];
        const std::size_t t = s + p;
        double loc = 0.0;
        double h = coefs.b_fn(u);
        for (int i = 0; i < p; ++i) {
            const double lag = path[t - 1 - i];
            loc += coefs.phi_fns[i](u) * lag;
            h += coefs.beta_fns[i](u) * lag * lag;
        }
        const double y = loc + s_q(h);
        if (!std::isfinite(y))
            fail(ErrorKind::NonFinite, "simulated path overflowed at step " + std::to_string(s + 1) +
                                           " (explosive parameterisation)");
        path[t] = y;
    }
    SeriesSample out;
    out.values.assign(path.begin() + static_cast<std::ptrdiff_t>(p + burn_in), path.end());
    out.origin = "simulated: " + coefs.description;
    return out;
}

inline std::vector<double> draw_uniforms(std::size_t count, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> u(count);
    for (auto& v : u) v = rng.uniform();
    return u;
}

inline constexpr std::size_t kDefaultBurnIn = 500;

inline SeriesSample simulate_qdar(const CoefficientFunctions& coefs, std::size_t n, std::size_t burn_in,
                                  std::uint64_t seed) {
    const auto u = draw_uniforms(n + burn_in, seed);
    SeriesSample s = simulate_qdar_from_uniforms(coefs, u, burn_in);
    s.origin += ", seed " + std::to_string(seed);
    return s;
}

// ---------------------------------------------------------------------------
// Stationarity

struct StationarityVerdict {
    double kappa = 1.0;
    double bound = 0.0;
    bool stationary = false;
    double mc_std_err = 0.0;
};

inline constexpr std::size_t kDefaultStationarityDraws = 100000;

/// Monte-Carlo estimate of sum_i max{E|phi_i(u) - sqrt|beta_i(u)||^k, E|phi_i(u) + sqrt|beta_i(u)||^k}.
/// The verdict is stationary when bound + margin * std_err < 1.
inline StationarityVerdict stationarity_bound(const CoefficientFunctions& coefs, double kappa,
                                              std::size_t draws = kDefaultStationarityDraws,
                                              std::uint64_t seed = 1, double margin = 2.0) {
    require(kappa > 0.0 && kappa <= 1.0, "kappa must lie in (0,1]");
    require(draws >= 1000, "at least 1000 Monte-Carlo draws are required");
    const int p = coefs.order();
    Rng rng(seed);
    std::vector<double> sum_minus(p, 0.0), sum_plus(p, 0.0), sq_minus(p, 0.0), sq_plus(p, 0.0);
    for (std::size_t d = 0; d < draws; ++d) {
        const double u = rng.uniform();
        for (int i = 0; i < p; ++i) {
            const double phi = coefs.phi_fns[i](u);
            const double root = std::sqrt(std::fabs(coefs.beta_fns[i](u)));
            const double m = std::pow(std::fabs(phi - root), kappa);
            const double q = std::pow(std::fabs(phi + root), kappa);
            sum_minus[i] += m;
            sq_minus[i] += m * m;
            sum_plus[i] += q;
            sq_plus[i] += q * q;
        }
    }
    const double nd = static_cast<double>(draws);
    StationarityVerdict v;
    v.kappa = kappa;
    double var = 0.0;
    for (int i = 0; i < p; ++i) {
        const double mm = sum_minus[i] / nd;
        const double mp = sum_plus[i] / nd;
        const bool use_plus = mp >= mm;
        const double mean = use_plus ? mp : mm;
        const double second = (use_plus ? sq_plus[i] : sq_minus[i]) / nd;
        v.bound += mean;
        var += std::max(0.0, second - mean * mean) / (nd - 1.0);
    }
    v.mc_std_err = std::sqrt(var);
    v.stationary = v.bound + margin * v.mc_std_err < 1.0;
    return v;
}

struct RegionCell {
    double phi = 0.0;
    double beta = 0.0;
    bool stationary = false;
    double bound = 0.0;   ///< E|phi + eps sqrt(beta)|^kappa, or E ln|.| when kappa = 0
    double std_err = 0.0;
};

/// Row-major (phi index major) grid of cells.
struct StationarityRegion {
    Innovation innovation;
    double kappa = 0.0;
    std::vector<double> phi_grid;
    std::vector<double> beta_grid;
    std::vector<RegionCell> cells;

    [[nodiscard]] const RegionCell& at(std::size_t i_phi, std::size_t j_beta) const {
        return cells[i_phi * beta_grid.size() + j_beta];
    }
};

/// Order-one double AR stationarity map: for kappa in (0,1] the cell is stationary when
/// E|phi + eps sqrt(beta)|^kappa < 1, for kappa = 0 when E ln|phi + eps sqrt(beta)| < 0.
/// Draws are antithetic pairs (u, 1-u) seeded per cell from (seed, cell index), so grids
/// evaluated with the same seed share random numbers across kappa and innovation laws.
inline StationarityRegion stationarity_region(const Innovation& innovation, double kappa,
                                              const std::vector<double>& phi_grid,
                                              const std::vector<double>& beta_grid, std::size_t draws,
                                              std::uint64_t seed, unsigned workers = default_workers()) {
    require(kappa >= 0.0 && kappa <= 1.0, "kappa must lie in [0,1] (0 selects the log-moment condition)");
    require(draws >= 2, "need at least two draws");
    for (double b : beta_grid) require(b >= 0.0 && std::isfinite(b), "beta grid must be finite and nonnegative");
    for (double f : phi_grid) require(std::isfinite(f), "phi grid must be finite");
    StationarityRegion region{innovation, kappa, phi_grid, beta_grid, {}};
    region.cells.resize(phi_grid.size() * beta_grid.size());
    const std::size_t pairs = (draws + 1) / 2;
    parallel_for(region.cells.size(), workers, [&](std::size_t idx) {
        const double phi = phi_grid[idx / beta_grid.size()];
        const double beta = beta_grid[idx % beta_grid.size()];
        RegionCell cell{phi, beta, false, 0.0, 0.0};
        auto term = [kappa](double x) {
            const double a = std::fabs(x);
            return kappa == 0.0 ? std::log(a) : std::pow(a, kappa);
        };
        if (beta == 0.0) {
            cell.bound = term(phi);
        } else {
            const double root = std::sqrt(beta);
            Rng rng(derive_seed(seed, idx));
            double sum = 0.0, sq = 0.0;
            for (std::size_t d = 0; d < pairs; ++d) {
                const double u = rng.uniform();
                const double a = term(phi + innovation.quantile(u) * root);
                const double b = term(phi + innovation.quantile(1.0 - u) * root);
                const double m = 0.5 * (a + b);
                sum += m;
                sq += m * m;
            }
            const double np = static_cast<double>(pairs);
            cell.bound = sum / np;
            cell.std_err = std::sqrt(std::max(0.0, sq / np - cell.bound * cell.bound) / std::max(1.0, np - 1.0));
        }
        cell.stationary = kappa == 0.0 ? cell.bound < 0.0 : cell.bound < 1.0;
        region.cells[idx] = cell;
    });
    return region;
}

inline std::vector<double> linspace(double lo, double hi, std::size_t count) {
    std::vector<double> g(count);
    if (count == 1) {
        g[0] = lo;
        return g;
    }
    for (std::size_t i = 0; i < count; ++i) g[i] = lo + (hi - lo) * static_cast<double>(i) / (count - 1);
    return g;
}

}  // namespace qdar
