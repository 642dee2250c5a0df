#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <string>

#include "qdar/designs.hpp"
#include "qdar/io.hpp"

using namespace qdar;

namespace {

io::CsvSeries parse(const std::string& text, const std::string& column = "") {
    std::istringstream in(text);
    return io::parse_series_csv(in, "mem.csv", column);
}

std::string parse_error(const std::string& text, const std::string& column = "") {
    try {
        parse(text, column);
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Parse);
        return e.what();
    }
    ADD_FAILURE() << "no error for:\n" << text;
    return {};
}

}  // namespace

TEST(Csv, SingleColumnWithComments) {
    const auto c = parse("# generated\ny\n1.5\n\n-2e-3\n# note\n+4\n");
    EXPECT_EQ(c.column, "y");
    EXPECT_EQ(c.series.values, (std::vector<double>{1.5, -0.002, 4.0}));
}

TEST(Csv, DateColumnIgnoredWithNote) {
    const auto c = parse("date,return\r\n2001-01-05,0.3\r\n2001-01-12,-1.25\r\n");
    EXPECT_EQ(c.column, "return");
    EXPECT_EQ(c.series.values, (std::vector<double>{0.3, -1.25}));
    EXPECT_EQ(c.dates, (std::vector<std::string>{"2001-01-05", "2001-01-12"}));
    ASSERT_EQ(c.notes.size(), 1u);
}

TEST(Csv, NamedColumnSelection) {
    const auto c = parse("a,b,c\n1,2,3\n4,5,6\n", "b");
    EXPECT_EQ(c.series.values, (std::vector<double>{2, 5}));
    EXPECT_NE(parse_error("a,b,c\n1,2,3\n").find("select"), std::string::npos);
    EXPECT_NE(parse_error("a,b\n1,2\n", "z").find("'z'"), std::string::npos);
}

TEST(Csv, ErrorsNameTheOffendingCell) {
    const std::string msg = parse_error("y\n1.0\n2.0\nabc\n");
    EXPECT_NE(msg.find("line 4"), std::string::npos) << msg;
    EXPECT_NE(msg.find("data row 3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("'abc'"), std::string::npos) << msg;
    EXPECT_NE(parse_error("y\n1\nnan\n").find("non-finite"), std::string::npos);
    EXPECT_NE(parse_error("y\n1\ninf\n").find("non-finite"), std::string::npos);
    parse_error("");
    parse_error("d,y\n2001,\n", "y");
}

TEST(Csv, MissingFile) { EXPECT_THROW(io::read_series_csv("/no/such/file.csv"), Error); }

TEST(Csv, WriteReadRoundTripIsExact) {
    const SeriesSample s = simulate_qdar(make_design_coefs("eq8-set1"), 500, 100, 5);
    std::ostringstream out;
    io::write_series_csv(out, s);
    const auto back = parse(out.str());
    EXPECT_EQ(back.series.values, s.values);
}

TEST(Csv, TableWriterLeavesNanEmpty) {
    std::ostringstream out;
    io::write_table_csv(out, {"k", "v"}, {{1, 0.25}, {2, std::nan("")}});
    EXPECT_EQ(out.str(), "k,v\n1,0.25\n2,\n");
}

TEST(CoefficientTable, PiecewiseLinearClampedCurves) {
    std::istringstream in("tau,b,phi1,beta1\n0.1,-1,0.2,-0.4\n0.5,0,0.2,0\n0.9,1,0.6,0.4\n");
    const auto c = io::read_coefficient_table(in);
    ASSERT_EQ(c.order(), 1);
    EXPECT_DOUBLE_EQ(c.b_fn(0.3), -0.5);
    EXPECT_DOUBLE_EQ(c.phi_fns[0](0.7), 0.4);
    EXPECT_DOUBLE_EQ(c.beta_fns[0](0.05), -0.4);
    EXPECT_DOUBLE_EQ(c.beta_fns[0](0.95), 0.4);
    EXPECT_TRUE(c.scale_curves_nondecreasing());
}

TEST(CoefficientTable, RejectsMalformedTables) {
    for (const std::string text : {"tau,b,phi1\n0.1,1,2\n0.2,1,2\n", "tau,b,phi1,beta1\n0.5,1,0,0\n",
                                   "tau,b,phi1,beta1\n0.5,1,0,0\n0.4,1,0,0\n", "tau,b,phi1,beta1\n0.1,1,0\n",
                                   "tau,b,phi1,beta1\n0.1,1,0,x\n0.2,1,0,0\n"}) {
        std::istringstream in(text);
        EXPECT_THROW(io::read_coefficient_table(in), Error) << text;
    }
}

TEST(Json, FitResultCarriesDocumentedKeys) {
    const SeriesSample s = simulate_qdar(make_design_coefs("eq8-set1"), 400, 100, 5);
    const FitResult f = fit(s, 0.25, 1);
    const io::Json j = io::to_json(f);
    for (const char* key : {"tau", "p", "theta", "asd", "covariance", "loss", "bandwidth", "converged", "seed"})
        EXPECT_TRUE(j.contains(key)) << key;
    EXPECT_EQ(j["bandwidth"]["rule"], "hall-sheather");
    EXPECT_EQ(j["covariance"].size(), 3u);
    const ThetaTau t = io::theta_from_json(0.25, j["theta"]);
    EXPECT_EQ(t.packed(), f.theta.packed());
    const io::Json env = io::envelope("fit", {{"tau", 0.25}}, j);
    EXPECT_EQ(env["spec_version"], io::kSpecVersion);
    EXPECT_EQ(env["command"], "fit");
}

TEST(Json, FormattedDoublesRoundTrip) {
    for (double v : {0.1, -2.706, 1e-300, 123456789.123456789, 5e-324}) {
        double back = 0.0;
        ASSERT_TRUE(io::detail::parse_double(io::format_double(v), back));
        EXPECT_EQ(back, v);
    }
}
