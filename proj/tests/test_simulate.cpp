#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "qdar/designs.hpp"
#include "qdar/distributions.hpp"
#include "qdar/rng.hpp"
#include "qdar/simulate.hpp"

using namespace qdar;

namespace {

CoefFn constant(double v) {
    return [v](double) { return v; };
}

CoefficientFunctions order_one(CoefFn b, CoefFn phi, CoefFn beta) {
    CoefficientFunctions c;
    c.b_fn = std::move(b);
    c.phi_fns = {std::move(phi)};
    c.beta_fns = {std::move(beta)};
    c.description = "test";
    return c;
}

CoefficientFunctions iid_normal() {
    const Innovation inn = Innovation::normal();
    return order_one([inn](double u) { return s_q_inv(inn.quantile(u)); }, constant(0.0), constant(0.0));
}

double ks_statistic(std::vector<double> x, const Innovation& law) {
    std::sort(x.begin(), x.end());
    const double n = static_cast<double>(x.size());
    double d = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double f = law.cdf(x[i]);
        d = std::max({d, (i + 1) / n - f, f - i / n});
    }
    return d;
}

}  // namespace

TEST(SimulateQdar, IidNormalPassesKolmogorovSmirnov) {
    const std::size_t n = 100000;
    const SeriesSample s = simulate_qdar(iid_normal(), n, 0, 11);
    ASSERT_EQ(s.size(), n);
    EXPECT_LT(ks_statistic(s.values, Innovation::normal()), 1.628 / std::sqrt(static_cast<double>(n)));
}

TEST(SimulateQdar, ZeroCoefficientsGiveZeros) {
    const SeriesSample s = simulate_qdar(order_one(constant(0), constant(0), constant(0)), 200, 10, 3);
    for (double v : s.values) EXPECT_EQ(v, 0.0);
}

TEST(SimulateQdar, ReproducibleAndSeedSensitive) {
    const auto c = make_design_coefs("eq13-ii");
    const SeriesSample a = simulate_qdar(c, 500, 100, 8);
    const SeriesSample b = simulate_qdar(c, 500, 100, 8);
    const SeriesSample d = simulate_qdar(c, 500, 100, 9);
    EXPECT_EQ(a.values, b.values);
    EXPECT_NE(a.values, d.values);
}

TEST(SimulateQdar, BurnInDropsLeadingValues) {
    const auto c = make_design_coefs("eq8-set1");
    const auto u = draw_uniforms(700, 4);
    const SeriesSample full = simulate_qdar_from_uniforms(c, u, 0);
    const SeriesSample cut = simulate_qdar_from_uniforms(c, u, 200);
    ASSERT_EQ(cut.size(), 500u);
    for (std::size_t i = 0; i < cut.size(); ++i) EXPECT_EQ(cut.values[i], full.values[i + 200]);
}

TEST(SimulateQdar, ExplosiveParameterisationRaisesNonFinite) {
    auto c = order_one(constant(1.0), constant(0.0), constant(50.0));
    try {
        simulate_qdar(c, 2000, 0, 1);
        FAIL() << "expected an overflow";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::NonFinite);
    }
}

TEST(Embedding, MatchesDirectDoubleArRecursion) {
    for (const Innovation inn : {Innovation::normal(), Innovation::student_t(5)}) {
        const DoubleArSpec spec{{-0.2}, 1.0, {0.4}, inn};
        const auto u = draw_uniforms(5000, 21);
        const SeriesSample s = simulate_qdar_from_uniforms(from_double_ar(spec), u, 0);
        double y = 0.0;
        for (std::size_t t = 0; t < u.size(); ++t) {
            y = -0.2 * y + inn.quantile(u[t]) * std::sqrt(1.0 + 0.4 * y * y);
            ASSERT_NEAR(s.values[t], y, 1e-10 * std::max(1.0, std::fabs(y))) << t;
        }
    }
}

TEST(Embedding, OrderTwoWithNonUnitOmega) {
    const DoubleArSpec spec{{0.1, 0.3}, 2.5, {0.1, 0.4}, Innovation::normal()};
    const auto u = draw_uniforms(3000, 5);
    const SeriesSample s = simulate_qdar_from_uniforms(from_double_ar(spec), u, 0);
    double y1 = 0.0, y2 = 0.0;
    for (std::size_t t = 0; t < u.size(); ++t) {
        const double eps = Innovation::normal().quantile(u[t]);
        const double y = 0.1 * y1 + 0.3 * y2 + eps * std::sqrt(2.5 + 0.1 * y1 * y1 + 0.4 * y2 * y2);
        ASSERT_NEAR(s.values[t], y, 1e-10 * std::max(1.0, std::fabs(y)));
        y2 = y1;
        y1 = y;
    }
}

TEST(FromDoubleAr, TrueValuesAtFivePercent) {
    const auto normal = from_double_ar({{-0.2}, 1.0, {0.4}, Innovation::normal()}).at(0.05);
    EXPECT_DOUBLE_EQ(normal.phi[0], -0.2);
    EXPECT_NEAR(normal.b, -2.706, 5e-4);
    EXPECT_NEAR(normal.beta[0], -1.082, 5e-4);
    const auto t5 = from_double_ar({{-0.2}, 1.0, {0.4}, Innovation::student_t(5)}).at(0.05);
    EXPECT_NEAR(t5.b, -4.060, 5e-4);
    EXPECT_NEAR(t5.beta[0], -1.624, 5e-4);
}

TEST(FromDoubleAr, ZeroBetaGivesZeroCurve) {
    const auto c = from_double_ar({{0.3}, 1.0, {0.0}, Innovation::normal()});
    for (double tau : {0.01, 0.3, 0.5, 0.97}) EXPECT_EQ(c.beta_fns[0](tau), 0.0);
}

TEST(FromDoubleAr, RejectsInvalidSpec) {
    EXPECT_THROW(from_double_ar({{0.1}, 0.0, {0.2}, Innovation::normal()}), Error);
    EXPECT_THROW(from_double_ar({{0.1}, 1.0, {-0.2}, Innovation::normal()}), Error);
    EXPECT_THROW(from_double_ar({{0.1, 0.2}, 1.0, {0.2}, Innovation::normal()}), Error);
}

TEST(Monotonicity, DesignsRecordNondecreasingScaleCurves) {
    EXPECT_TRUE(make_design_coefs("eq8-set1").scale_curves_nondecreasing());
    EXPECT_TRUE(make_design_coefs("eq13-i").scale_curves_nondecreasing());
    auto dec = order_one([](double u) { return 1.0 - u; }, constant(0), constant(0));
    EXPECT_FALSE(dec.scale_curves_nondecreasing());
}

TEST(StationarityBound, TrivialCases) {
    const auto v = stationarity_bound(order_one(constant(1), constant(0.5), constant(0)), 1.0);
    EXPECT_NEAR(v.bound, 0.5, 1e-12);
    EXPECT_TRUE(v.stationary);
    const auto w = stationarity_bound(order_one(constant(1), constant(0.0), constant(1.0)), 1.0);
    EXPECT_NEAR(w.bound, 1.0, 1e-12);
    EXPECT_FALSE(w.stationary);
    EXPECT_GE(w.mc_std_err, 0.0);
}

TEST(StationarityBound, AgreesWithLargeIndependentIntegral) {
    const auto coefs = make_design_coefs("eq8-set1");
    const auto v = stationarity_bound(coefs, 0.5, 100000, 3);
    EXPECT_TRUE(v.stationary);
    // independent oracle: midpoint rule on 10^6 nodes
    const int m = 1000000;
    double lo = 0.0, hi = 0.0;
    for (int k = 0; k < m; ++k) {
        const double u = (k + 0.5) / m;
        const double root = std::sqrt(std::fabs(coefs.beta_fns[0](u)));
        lo += std::sqrt(std::fabs(-0.2 - root));
        hi += std::sqrt(std::fabs(-0.2 + root));
    }
    const double oracle = std::max(lo, hi) / m;
    EXPECT_LT(oracle, 1.0);
    EXPECT_NEAR(v.bound, oracle, 4.0 * v.mc_std_err + 1e-9);
}

TEST(StationarityBound, RejectsBadArguments) {
    const auto c = make_design_coefs("eq8-set1");
    EXPECT_THROW(stationarity_bound(c, 0.0), Error);
    EXPECT_THROW(stationarity_bound(c, 1.5), Error);
    EXPECT_THROW(stationarity_bound(c, 0.5, 10), Error);
}

TEST(StationarityRegion, ZeroBetaColumnIsExact) {
    const auto phi = linspace(-1.5, 1.5, 13);
    const auto r = stationarity_region(Innovation::normal(), 0.5, phi, {0.0, 0.5}, 2000, 1, 1);
    for (std::size_t i = 0; i < phi.size(); ++i) {
        EXPECT_EQ(r.at(i, 0).stationary, std::fabs(phi[i]) < 1.0) << phi[i];
        EXPECT_DOUBLE_EQ(r.at(i, 0).bound, std::pow(std::fabs(phi[i]), 0.5));
    }
}

TEST(StationarityRegion, NarrowsWithKappaAndTailWeight) {
    const auto phi = linspace(-2.0, 2.0, 20);
    const auto beta = linspace(0.0, 8.0, 20);
    const std::size_t draws = 20000;
    const auto n01 = stationarity_region(Innovation::normal(), 0.1, phi, beta, draws, 77, 2);
    const auto n09 = stationarity_region(Innovation::normal(), 0.9, phi, beta, draws, 77, 2);
    const auto t01 = stationarity_region(Innovation::student_t(3), 0.1, phi, beta, draws, 77, 2);
    int count01 = 0, count09 = 0, countt = 0;
    for (std::size_t k = 0; k < n01.cells.size(); ++k) {
        if (n09.cells[k].stationary) EXPECT_TRUE(n01.cells[k].stationary) << k;
        if (t01.cells[k].stationary) EXPECT_TRUE(n01.cells[k].stationary) << k;
        count01 += n01.cells[k].stationary;
        count09 += n09.cells[k].stationary;
        countt += t01.cells[k].stationary;
    }
    EXPECT_LT(count09, count01);
    EXPECT_LT(countt, count01);
}

TEST(StationarityRegion, LogMomentVariant) {
    const auto r = stationarity_region(Innovation::normal(), 0.0, {0.0}, {1.0, 3.0, 4.0}, 200000, 2, 1);
    // E ln|eps| sqrt(beta) = 0.5 ln beta - 0.6352; the boundary sits near beta = 3.56
    EXPECT_TRUE(r.at(0, 0).stationary);
    EXPECT_TRUE(r.at(0, 1).stationary);
    EXPECT_FALSE(r.at(0, 2).stationary);
    EXPECT_NEAR(r.at(0, 0).bound, -0.5 * (std::log(2.0) + 0.5772156649), 0.01);
}

TEST(StationarityRegion, IndependentOfWorkerCount) {
    const auto phi = linspace(-1.0, 1.0, 7);
    const auto beta = linspace(0.0, 3.0, 7);
    const auto a = stationarity_region(Innovation::student_t(3), 0.5, phi, beta, 4000, 9, 1);
    const auto b = stationarity_region(Innovation::student_t(3), 0.5, phi, beta, 4000, 9, 4);
    for (std::size_t k = 0; k < a.cells.size(); ++k) EXPECT_EQ(a.cells[k].bound, b.cells[k].bound);
}

TEST(Properties, LagOneAutocorrelationOfPureAr) {
    const Innovation inn = Innovation::normal();
    const double c = 0.6;
    const auto coefs = order_one([inn](double u) { return s_q_inv(inn.quantile(u)); }, constant(c), constant(0.0));
    const SeriesSample s = simulate_qdar(coefs, 100000, 500, 13);
    double mean = 0.0;
    for (double v : s.values) mean += v;
    mean /= s.size();
    double num = 0.0, den = 0.0;
    for (std::size_t t = 0; t < s.size(); ++t) {
        den += (s.values[t] - mean) * (s.values[t] - mean);
        if (t > 0) num += (s.values[t] - mean) * (s.values[t - 1] - mean);
    }
    EXPECT_NEAR(num / den, c, 0.02);
}

TEST(Designs, TrueOrdersAndUnknownName) {
    for (const auto& name : design_names()) EXPECT_EQ(make_design_coefs(name).order(), design_order(name));
    EXPECT_THROW(make_design_coefs("nope"), Error);
}
