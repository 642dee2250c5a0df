// Simulates a conditionally heteroscedastic series, fits the model at a few lower
// quantiles, prints one-step VaR forecasts and backtests the 5% forecaster.

#include <cstdio>

#include "qdar/qdar.hpp"

int main() {
    const auto coefs = qdar::make_design_coefs("eq8-set1");
    const qdar::SeriesSample y = qdar::simulate_qdar(coefs, 800, qdar::kDefaultBurnIn, 42);

    const qdar::FitResult f = qdar::fit(y, 0.05, 1);
    std::printf("tau=0.05  phi=%.4f (%.4f)  b=%.4f (%.4f)  beta=%.4f (%.4f)\n", f.theta.phi[0], f.asd[0], f.theta.b,
                f.asd[1], f.theta.beta[0], f.asd[2]);
    const auto truth = coefs.at(0.05);
    std::printf("true      phi=%.4f           b=%.4f           beta=%.4f\n", truth.phi[0], truth.b, truth.beta[0]);

    const auto levels = std::vector<double>{0.01, 0.05, 0.10};
    const auto mf = qdar::fit_levels(y, levels, 1);
    const auto last = qdar::last_values(y, 1);
    const auto fc = qdar::forecast_levels(mf, last);
    for (std::size_t k = 0; k < levels.size(); ++k) std::printf("VaR forecast at %.2f: %.4f\n", levels[k], fc[k]);

    qdar::FitOptions quick;
    quick.starts = 2;
    const auto hits = qdar::rolling_forecast(y, 0.05, 1, 600, qdar::WindowPolicy::expanding(), {}, quick);
    const auto report = qdar::backtest_hits(hits);
    std::printf("backtest: m=%d hits=%d ECR=%.2f%%  CC p=%.3f  DQ p=%.3f\n", report.m, report.hits, report.ecr,
                report.cc_pvalue, report.dq_pvalue);
}
