#pragma once

// Derivative-free simplex search and a subgradient quasi-Newton polish, both generic
// over the objective type. Used by the estimator; nothing here is model-specific.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace qdar::opt {

using Vector = Eigen::VectorXd;

struct SimplexOptions {
    int max_iterations = 500;
    double rel_tol = 1e-9;  ///< stop when (f_worst - f_best) <= rel_tol * |f_best|
    int max_restarts = 3;   ///< restarts from the incumbent after each convergence
};

struct SimplexResult {
    Vector x;
    double f = std::numeric_limits<double>::infinity();
    int iterations = 0;
    int evaluations = 0;
    bool converged = false;
};

/// Nelder-Mead with dimension-adaptive coefficients (Gao and Han, 2012). After each
/// convergence the simplex is rebuilt around the incumbent; the search ends once a
/// restart fails to improve it.
template <class F>
SimplexResult nelder_mead(F&& f, const Vector& x0, const Vector& steps, const SimplexOptions& opts) {
    const int d = static_cast<int>(x0.size());
    const double dd = static_cast<double>(d);
    const double alpha = 1.0;
    const double gamma = 1.0 + 2.0 / dd;
    const double rho = 0.75 - 0.5 / dd;
    const double sigma = 1.0 - 1.0 / dd;

    SimplexResult res;
    res.x = x0;
    res.f = f(x0);
    res.evaluations = 1;
    if (!std::isfinite(res.f)) return res;

    std::vector<Vector> pts(d + 1);
    std::vector<double> vals(d + 1);
    std::vector<int> order(d + 1);
    Vector step = steps;

    for (int restart = 0; restart <= opts.max_restarts && res.iterations < opts.max_iterations; ++restart) {
        const double f_start = res.f;
        pts[0] = res.x;
        vals[0] = res.f;
        for (int i = 0; i < d; ++i) {
            pts[i + 1] = res.x;
            pts[i + 1][i] += step[i];
            vals[i + 1] = f(pts[i + 1]);
            ++res.evaluations;
        }
        bool converged = false;
        while (res.iterations < opts.max_iterations) {
            std::iota(order.begin(), order.end(), 0);
            std::sort(order.begin(), order.end(), [&](int a, int b) { return vals[a] < vals[b]; });
            const int best = order[0], worst = order[d], second = order[d - 1];
            const double fb = vals[best], fw = vals[worst];
            if (fw - fb <= opts.rel_tol * std::fabs(fb) || fw - fb <= 1e-300) {
                converged = true;
                break;
            }
            ++res.iterations;
            Vector centroid = Vector::Zero(d);
            for (int k = 0; k < d; ++k) centroid += pts[order[k]];
            centroid /= dd;

            const Vector xr = centroid + alpha * (centroid - pts[worst]);
            const double fr = f(xr);
            ++res.evaluations;
            if (fr < fb) {
                const Vector xe = centroid + gamma * (xr - centroid);
                const double fe = f(xe);
                ++res.evaluations;
                if (fe < fr) {
                    pts[worst] = xe;
                    vals[worst] = fe;
                } else {
                    pts[worst] = xr;
                    vals[worst] = fr;
                }
                continue;
            }
            if (fr < vals[second]) {
                pts[worst] = xr;
                vals[worst] = fr;
                continue;
            }
            const bool outside = fr < fw;
            const Vector xc = outside ? Vector(centroid + rho * (xr - centroid))
                                      : Vector(centroid - rho * (centroid - pts[worst]));
            const double fc = f(xc);
            ++res.evaluations;
            if (outside ? fc <= fr : fc < fw) {
                pts[worst] = xc;
                vals[worst] = fc;
                continue;
            }
            for (int k = 1; k <= d; ++k) {
                const int idx = order[k];
                pts[idx] = pts[best] + sigma * (pts[idx] - pts[best]);
                vals[idx] = f(pts[idx]);
                ++res.evaluations;
            }
        }
        const int best = static_cast<int>(std::min_element(vals.begin(), vals.end()) - vals.begin());
        if (vals[best] < res.f) {
            res.f = vals[best];
            res.x = pts[best];
        }
        res.converged = converged;
        if (!converged) break;
        const bool improved = f_start - res.f > opts.rel_tol * std::fabs(res.f);
        if (restart > 0 && !improved) break;
        // shrink the restart simplex towards the scale of the last collapse
        step *= 0.5;
    }
    return res;
}

struct PolishOptions {
    int max_iterations = 50;
    double rel_tol = 1e-9;
};

/// BFGS driven by a (sub)gradient with Armijo backtracking. Each accepted step strictly
/// lowers the objective; the routine returns the best point seen, so it can only improve
/// on its starting value.
template <class F, class G>
SimplexResult quasi_newton_polish(F&& f, G&& grad, const Vector& x0, double f0, const PolishOptions& opts) {
    const int d = static_cast<int>(x0.size());
    SimplexResult res;
    res.x = x0;
    res.f = f0;
    res.converged = true;
    Eigen::MatrixXd inv_h = Eigen::MatrixXd::Identity(d, d);
    Vector g = grad(x0);
    if (!g.allFinite()) return res;
    const double scale = std::max(1.0, g.norm());
    inv_h /= scale;
    for (int it = 0; it < opts.max_iterations; ++it) {
        ++res.iterations;
        Vector dir = -inv_h * g;
        double slope = g.dot(dir);
        if (!(slope < 0.0)) {
            inv_h = Eigen::MatrixXd::Identity(d, d) / scale;
            dir = -inv_h * g;
            slope = g.dot(dir);
            if (!(slope < 0.0)) break;
        }
        double t = 1.0;
        Vector x_new;
        double f_new = res.f;
        bool accepted = false;
        for (int ls = 0; ls < 30; ++ls) {
            x_new = res.x + t * dir;
            f_new = f(x_new);
            ++res.evaluations;
            if (std::isfinite(f_new) && f_new <= res.f + 1e-4 * t * slope && f_new < res.f) {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) break;
        const double rel = (res.f - f_new) / std::max(std::fabs(res.f), 1e-300);
        const Vector g_new = grad(x_new);
        const Vector s = x_new - res.x;
        const Vector yv = g_new - g;
        res.x = x_new;
        res.f = f_new;
        g = g_new;
        if (!g.allFinite()) break;
        const double sy = s.dot(yv);
        if (sy > 1e-12 * s.norm() * yv.norm()) {
            const double r = 1.0 / sy;
            const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(d, d);
            inv_h = (I - r * s * yv.transpose()) * inv_h * (I - r * yv * s.transpose()) + r * s * s.transpose();
        }
        if (rel < opts.rel_tol) break;
    }
    return res;
}

}  // namespace qdar::opt
