#pragma once

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include <cmath>
#include <string>

#include "qdar/errors.hpp"

namespace qdar {

/// Innovation law of a double AR model. Student-t laws are unstandardised.
struct Innovation {
    enum class Kind { Normal, StudentT };
    Kind kind = Kind::Normal;
    double df = 0.0;

    static Innovation normal() { return {Kind::Normal, 0.0}; }
    static Innovation student_t(double df) {
        require(df > 0.0, "Student-t degrees of freedom must be positive");
        return {Kind::StudentT, df};
    }

    [[nodiscard]] double quantile(double u) const {
        if (kind == Kind::Normal) return boost::math::quantile(boost::math::normal_distribution<>(), u);
        return boost::math::quantile(boost::math::students_t_distribution<>(df), u);
    }

    [[nodiscard]] double cdf(double x) const {
        if (kind == Kind::Normal) return boost::math::cdf(boost::math::normal_distribution<>(), x);
        return boost::math::cdf(boost::math::students_t_distribution<>(df), x);
    }

    [[nodiscard]] std::string name() const {
        if (kind == Kind::Normal) return "normal";
        const double r = std::round(df);
        return "t" + (r == df ? std::to_string(static_cast<long>(r)) : std::to_string(df));
    }
};

/// Parses "normal", "t5", "t3", "student-t:4.5".
inline Innovation parse_innovation(const std::string& name) {
    if (name == "normal" || name == "gaussian") return Innovation::normal();
    std::string digits;
    if (name.size() > 1 && name[0] == 't') digits = name.substr(1);
    else if (name.rfind("student-t:", 0) == 0) digits = name.substr(10);
    if (!digits.empty()) {
        try {
            std::size_t used = 0;
            const double df = std::stod(digits, &used);
            if (used == digits.size()) return Innovation::student_t(df);
        } catch (const std::exception&) {
        }
    }
    fail(ErrorKind::InvalidArgument, "unknown innovation distribution '" + name + "'");
}

inline double normal_pdf(double x) { return boost::math::pdf(boost::math::normal_distribution<>(), x); }
inline double normal_cdf(double x) { return boost::math::cdf(boost::math::normal_distribution<>(), x); }
inline double normal_quantile(double u) { return boost::math::quantile(boost::math::normal_distribution<>(), u); }

/// Upper tail P(X >= x) for X ~ chi-square(df).
inline double chi_square_sf(double x, double df) {
    if (!(x > 0.0)) return 1.0;
    return boost::math::cdf(boost::math::complement(boost::math::chi_squared_distribution<>(df), x));
}

}  // namespace qdar
