// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.
//
//   acceptance [--only N] [--workers W] [--sp500 path/to/weekly.csv]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "qdar/qdar.hpp"

using namespace qdar;

namespace {

struct Outcome {
    enum Status { Pass, Fail, Skip } status = Pass;
    std::string detail;
};

// accumulates sub-checks of one criterion
class Checks {
public:
    void expect(bool ok, const std::string& what) {
        all_ = all_ && ok;
        if (!detail_.empty()) detail_ += "; ";
        detail_ += what + (ok ? "" : " [x]");
    }
    Outcome outcome() const { return {all_ ? Outcome::Pass : Outcome::Fail, detail_}; }

private:
    bool all_ = true;
    std::string detail_;
};

std::string fmt(double v, int digits = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

bool within_rel(double value, double target, double rel) { return std::fabs(value - target) <= rel * std::fabs(target); }

unsigned g_workers = 1;
std::string g_sp500;

// ---------------------------------------------------------------------------

Outcome estimator_replication() {
    constexpr double kBiasTol = 0.02, kRel = 0.30;
    studies::StudyConfig c;
    c.design = "eq8-set1";
    c.n = 1000;
    c.tau = 0.25;
    c.reps = 200;
    c.seed = 20240601;
    c.workers = g_workers;
    const auto st = studies::estimation_study(c);
    // packed order is (phi, b, beta); reference standard deviations
    const double ref_esd[3] = {0.064, 0.094, 0.096};
    Checks ch;
    ch.expect(st.failures == 0, "failures=" + std::to_string(st.failures));
    for (int i = 0; i < 3; ++i) {
        const auto& x = st.components[i];
        ch.expect(std::fabs(x.bias) <= kBiasTol, x.name + " bias=" + fmt(x.bias));
        ch.expect(within_rel(x.esd, ref_esd[i], kRel), x.name + " esd=" + fmt(x.esd) + " (ref " + fmt(ref_esd[i], 3) + ")");
        ch.expect(within_rel(x.asd, x.esd, kRel), x.name + " asd=" + fmt(x.asd));
    }
    return ch.outcome();
}

Outcome bandwidth_formulas() {
    constexpr double kTol = 0.0005;
    const double bof = bandwidth(0.5, 1000, BandwidthRule::Bofinger);
    const double hs = bandwidth(0.5, 1000, BandwidthRule::HallSheather);
    // reference: the same expressions with the normal density and quantile evaluated
    // in long double at the median (z = 0, phi(0) = 1/sqrt(2 pi)), z_{0.975} fixed
    const long double pi = 3.141592653589793238462643383279502884L;
    const long double dens = 1.0L / std::sqrt(2.0L * pi);
    const long double z975 = 1.959963984540054235524594430520551527955L;
    const long double n = 1000.0L;
    const long double ref_bof = std::pow(n, -0.2L) * std::pow(4.5L * std::pow(dens, 4.0L), 0.2L);
    const long double ref_hs = std::pow(n, -1.0L / 3) * std::pow(z975, 2.0L / 3) * std::pow(1.5L * dens * dens, 1.0L / 3);
    Checks ch;
    ch.expect(std::fabs(bof - 0.1627) <= kTol, "bofinger=" + fmt(bof, 5));
    ch.expect(std::fabs(hs - 0.0972) <= kTol, "hall-sheather=" + fmt(hs, 5));
    ch.expect(std::fabs(bof - static_cast<double>(ref_bof)) <= 1e-12, "bofinger vs reference");
    ch.expect(std::fabs(hs - static_cast<double>(ref_hs)) <= 1e-12, "hall-sheather vs reference");
    return ch.outcome();
}

Outcome order_selection() {
    constexpr double kMinRate = 92.0;
    studies::StudyConfig c;
    c.design = "eq13-i";
    c.n = 1000;
    c.reps = 200;
    c.seed = 31337;
    c.starts = 2;
    c.workers = g_workers;
    const auto st = studies::selection_study(c, 5, 9);
    const double rate = st.rate(st.correct);
    Checks ch;
    ch.expect(rate >= kMinRate, "correct=" + fmt(rate, 1) + "% under=" + fmt(st.rate(st.under), 1) +
                                    "% over=" + fmt(st.rate(st.over), 1) + "% failures=" + std::to_string(st.failures));
    return ch.outcome();
}

Outcome qacf_calibration() {
    constexpr double kMeanTol = 0.005, kRel = 0.30, kRatioLo = 0.75, kRatioHi = 1.3;
    studies::StudyConfig c;
    c.design = "eq8-set1";
    c.n = 1000;
    c.tau = 0.25;
    c.reps = 200;
    c.seed = 4242;
    c.workers = g_workers;
    const auto st = studies::qacf_study(c, 6);
    const auto& l = st.lags[3];  // rho at lag 4
    const double ratio = l.esd / l.asd;
    Checks ch;
    ch.expect(st.failures == 0, "failures=" + std::to_string(st.failures));
    ch.expect(std::fabs(l.bias) <= kMeanTol, "mean=" + fmt(l.bias, 5));
    ch.expect(within_rel(l.esd, 0.0215, kRel), "esd=" + fmt(l.esd, 5));
    ch.expect(ratio >= kRatioLo && ratio <= kRatioHi, "esd/asd=" + fmt(ratio, 3));
    return ch.outcome();
}

studies::QacfStudy portmanteau_study(double c1, double c2, int reps, std::uint64_t seed) {
    studies::StudyConfig c;
    c.design = "eq14";
    c.params.c1 = c1;
    c.params.c2 = c2;
    c.n = 1000;
    c.tau = 0.25;
    c.reps = reps;
    c.seed = seed;
    c.workers = g_workers;
    return studies::qacf_study(c, 6, 10000);
}

Outcome test_size() {
    constexpr double kLo = 2.5, kHi = 8.5;
    const auto st = portmanteau_study(0.0, 0.0, 500, 555);
    auto in = [](double r) { return r >= kLo && r <= kHi; };
    Checks ch;
    ch.expect(st.failures == 0, "failures=" + std::to_string(st.failures));
    ch.expect(in(st.reject_q1), "Q1=" + fmt(st.reject_q1, 1) + "%");
    ch.expect(in(st.reject_q2), "Q2=" + fmt(st.reject_q2, 1) + "%");
    ch.expect(in(st.reject_q), "Q=" + fmt(st.reject_q, 1) + "%");
    return ch.outcome();
}

Outcome test_power() {
    constexpr double kMinLocationPower = 90.0;
    const auto loc = portmanteau_study(0.3, 0.0, 300, 777);
    const auto sc = portmanteau_study(0.0, 0.3, 300, 778);
    Checks ch;
    ch.expect(loc.reject_q1 >= loc.reject_q2,
              "c1: Q1=" + fmt(loc.reject_q1, 1) + "% Q2=" + fmt(loc.reject_q2, 1) + "%");
    ch.expect(loc.reject_q1 >= kMinLocationPower, "c1: Q1 >= 90%");
    ch.expect(sc.reject_q2 >= sc.reject_q1, "c2: Q1=" + fmt(sc.reject_q1, 1) + "% Q2=" + fmt(sc.reject_q2, 1) + "%");
    return ch.outcome();
}

Outcome stationarity_regions() {
    // 20 points in [-2, 2] do not include |phi| = 1, so the boundary cells get their own grid
    const auto phi = linspace(-2.0, 2.0, 20);
    const auto beta = linspace(0.0, 8.0, 20);
    const std::size_t draws = 20000;
    const auto n01 = stationarity_region(Innovation::normal(), 0.1, phi, beta, draws, 11, g_workers);
    const auto n09 = stationarity_region(Innovation::normal(), 0.9, phi, beta, draws, 11, g_workers);
    const auto t01 = stationarity_region(Innovation::student_t(3), 0.1, phi, beta, draws, 11, g_workers);
    int kappa_violations = 0, tail_violations = 0, c01 = 0, c09 = 0, ct = 0;
    for (std::size_t k = 0; k < n01.cells.size(); ++k) {
        kappa_violations += n09.cells[k].stationary && !n01.cells[k].stationary;
        tail_violations += t01.cells[k].stationary && !n01.cells[k].stationary;
        c01 += n01.cells[k].stationary;
        c09 += n09.cells[k].stationary;
        ct += t01.cells[k].stationary;
    }
    const auto edge = stationarity_region(Innovation::normal(), 0.5, {-1.0, -0.999, 0.999, 1.0}, {0.0}, draws, 11, 1);
    Checks ch;
    ch.expect(kappa_violations == 0 && c09 < c01,
              "kappa 0.9 inside 0.1 (" + std::to_string(c09) + " of " + std::to_string(c01) + " cells)");
    ch.expect(tail_violations == 0 && ct < c01,
              "t3 inside normal (" + std::to_string(ct) + " of " + std::to_string(c01) + " cells)");
    ch.expect(!edge.at(0, 0).stationary && !edge.at(3, 0).stationary && edge.at(0, 0).bound == 1.0 &&
                  edge.at(3, 0).bound == 1.0,
              "beta=0 |phi|=1 non-stationary");
    ch.expect(edge.at(1, 0).stationary && edge.at(2, 0).stationary, "beta=0 |phi|<1 stationary");
    return ch.outcome();
}

Outcome backtest_calibration() {
    constexpr double kLo = 2.5, kHi = 8.5, kTau = 0.05;
    constexpr int kM = 500, kReps = 2000;
    Rng rng(8080);
    int cc_rej = 0, dq_rej = 0;
    bool integral = true;
    double worst_additivity = 0.0;
    for (int rep = 0; rep < kReps; ++rep) {
        std::vector<double> f(kM), y(kM);
        for (int i = 0; i < kM; ++i) {
            f[i] = rng.normal();
            y[i] = rng.uniform() < kTau ? f[i] - 1.0 : f[i] + 1.0;
        }
        const auto r = backtest_hits(make_hits(kTau, y, f));
        const double hits = r.ecr * r.m / 100.0;
        integral = integral && std::fabs(hits - std::round(hits)) < 1e-9 && std::lround(hits) == r.hits;
        const CcResult cc = cc_test(make_hits(kTau, y, f));
        worst_additivity = std::max(worst_additivity, std::fabs(cc.stat - (cc.lr_uc + cc.lr_ind)));
        cc_rej += r.cc_pvalue < 0.05;
        dq_rej += r.dq_pvalue < 0.05;
    }
    const double cc_size = 100.0 * cc_rej / kReps, dq_size = 100.0 * dq_rej / kReps;
    Checks ch;
    ch.expect(cc_size >= kLo && cc_size <= kHi, "CC size=" + fmt(cc_size, 2) + "%");
    ch.expect(dq_size >= kLo && dq_size <= kHi, "DQ size=" + fmt(dq_size, 2) + "%");
    ch.expect(integral, "ECR*m integral");
    ch.expect(worst_additivity <= 1e-10, "LR additivity");
    return ch.outcome();
}

Outcome oracle_equivalences() {
    Checks ch;
    // gradient against central differences
    {
        Rng rng(5);
        const double step = 1e-6;
        double worst = 0.0;
        int checked = 0;
        for (int trial = 0; trial < 2000; ++trial) {
            const int p = 1 + trial % 3;
            ThetaTau th;
            th.tau = 0.3;
            for (int i = 0; i < p; ++i) {
                th.phi.push_back(rng.uniform(-1, 1));
                th.beta.push_back(rng.uniform(-1, 1));
            }
            th.b = rng.uniform(-3, 3);
            std::vector<double> lags(p);
            for (auto& l : lags) l = rng.uniform(-2, 2);
            if (std::fabs(scale_argument(th, lags)) < 1e-2) continue;
            const Vector g = cond_quantile_grad(th, lags);
            const Vector x = th.packed();
            for (int k = 0; k < x.size(); ++k) {
                Vector hi = x, lo = x;
                hi[k] += step;
                lo[k] -= step;
                const ThetaTau th_hi = ThetaTau::unpack(0.3, hi), th_lo = ThetaTau::unpack(0.3, lo);
                if (std::signbit(scale_argument(th_hi, lags)) != std::signbit(scale_argument(th_lo, lags))) continue;
                const double fd = (cond_quantile(th_hi, lags) - cond_quantile(th_lo, lags)) / (2 * step);
                worst = std::max(worst, std::fabs(fd - g[k]) / std::max(1.0, std::fabs(g[k])));
                ++checked;
            }
        }
        ch.expect(worst < 1e-5 && checked > 1000, "gradient rel err=" + fmt(worst * 1e6, 3) + "e-6");
    }
    // embedded double AR against the direct recursion
    {
        double worst = 0.0;
        for (const Innovation inn : {Innovation::normal(), Innovation::student_t(5)}) {
            const DoubleArSpec spec{{0.1, -0.3}, 1.5, {0.2, 0.4}, inn};
            const auto u = draw_uniforms(5000, 21);
            const SeriesSample s = simulate_qdar_from_uniforms(from_double_ar(spec), u, 0);
            double y1 = 0.0, y2 = 0.0;
            for (std::size_t t = 0; t < u.size(); ++t) {
                const double y = 0.1 * y1 - 0.3 * y2 + inn.quantile(u[t]) * std::sqrt(1.5 + 0.2 * y1 * y1 + 0.4 * y2 * y2);
                worst = std::max(worst, std::fabs(s.values[t] - y) / std::max(1.0, std::fabs(y)));
                y2 = y1;
                y1 = y;
            }
        }
        ch.expect(worst <= 1e-10, "embedding max err=" + fmt(worst * 1e12, 3) + "e-12");
    }
    // S_Q round trip
    {
        double worst = 0.0;
        for (int i = 0; i < 100001; ++i) {
            const double x = -100.0 + 200.0 * i / 100000.0;
            worst = std::max(worst, std::fabs(s_q(s_q_inv(x)) - x) / std::max(1.0, std::fabs(x)));
            worst = std::max(worst, std::fabs(s_q_inv(s_q(x)) - x) / std::max(1.0, std::fabs(x)));
        }
        ch.expect(worst <= 1e-12, "S_Q round trip");
    }
    return ch.outcome();
}

Outcome real_data_backtest() {
    if (g_sp500.empty()) return {Outcome::Skip, "no --sp500 series supplied"};
    constexpr double kEcrTol = 0.005, kMinP = 0.1;
    const auto csv = io::read_series_csv(g_sp500);
    const auto reports = backtest_suite(csv.series, default_backtest_levels(), 3, 500, WindowPolicy::expanding(), {},
                                        {}, g_workers);
    const double expected[4] = {5.34, 9.02, 91.53, 95.95};
    Checks ch;
    for (std::size_t k = 0; k < reports.size(); ++k) {
        const auto& r = reports[k];
        ch.expect(r.error.empty() && std::fabs(r.ecr - expected[k]) <= kEcrTol && r.cc_pvalue > kMinP &&
                      r.dq_pvalue > kMinP,
                  "tau=" + fmt(r.tau, 2) + " ECR=" + fmt(r.ecr, 2) + " CC p=" + fmt(r.cc_pvalue, 3) +
                      " DQ p=" + fmt(r.dq_pvalue, 3));
    }
    return ch.outcome();
}

struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
    int only = 0;
    g_workers = std::max(1u, std::thread::hardware_concurrency());
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--only" && i + 1 < argc) only = std::atoi(argv[++i]);
        else if (a == "--workers" && i + 1 < argc) g_workers = static_cast<unsigned>(std::atoi(argv[++i]));
        else if (a == "--sp500" && i + 1 < argc) g_sp500 = argv[++i];
        else {
            std::cerr << "usage: acceptance [--only N] [--workers W] [--sp500 file]\n";
            return 2;
        }
    }
    const std::vector<Criterion> criteria{
        {1, "estimator replication", estimator_replication},
        {2, "bandwidth formulas", bandwidth_formulas},
        {3, "order selection", order_selection},
        {4, "QACF calibration", qacf_calibration},
        {5, "portmanteau size", test_size},
        {6, "portmanteau power ordering", test_power},
        {7, "stationarity regions", stationarity_regions},
        {8, "backtest calibration", backtest_calibration},
        {9, "oracle equivalences", oracle_equivalences},
        {10, "real-data backtest", real_data_backtest},
    };
    int failed = 0;
    for (const auto& c : criteria) {
        if (only != 0 && c.id != only) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {Outcome::Fail, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const char* tag = o.status == Outcome::Pass ? "PASS" : o.status == Outcome::Fail ? "FAIL" : "SKIP";
        failed += o.status == Outcome::Fail;
        std::cout << "[" << tag << "] " << c.id << " " << c.name << ": " << o.detail << " (" << fmt(secs, 1) << " s)"
                  << std::endl;
    }
    return failed == 0 ? 0 : 1;
}
