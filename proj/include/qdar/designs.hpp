#pragma once

// Built-in simulation designs. Every design uses b(tau) = s_q_inv(F^{-1}(tau)) for the
// chosen innovation law F, so the scale part reduces to F^{-1}(u) sqrt(1 + c y^2)
// whenever beta(tau) = c b(tau).

#include <string>
#include <vector>

#include "qdar/simulate.hpp"

namespace qdar {

struct DesignParams {
    Innovation innovation = Innovation::normal();
    double c1 = 0.0;  ///< location departure at lag 2 (eq14)
    double c2 = 0.0;  ///< scale departure at lag 2 (eq14)
};

inline const std::vector<std::string>& design_names() {
    static const std::vector<std::string> names{"eq8-set1", "eq8-set2", "eq13-i", "eq13-ii", "eq13-iii", "eq14"};
    return names;
}

/// True order of the data-generating process.
inline int design_order(const std::string& name) {
    if (name == "eq8-set1" || name == "eq8-set2") return 1;
    if (name == "eq13-i" || name == "eq13-ii" || name == "eq13-iii" || name == "eq14") return 2;
    fail(ErrorKind::InvalidArgument, "unknown design '" + name + "'");
}

inline CoefficientFunctions make_design_coefs(const std::string& name, const DesignParams& params = {}) {
    const Innovation inn = params.innovation;
    auto b = [inn](double tau) { return s_q_inv(inn.quantile(tau)); };
    auto constant = [](double v) { return CoefFn([v](double) { return v; }); };
    auto scaled_b = [b](double c) { return CoefFn([b, c](double tau) { return c * b(tau); }); };
    auto tau_scaled_b = [b](double c) { return CoefFn([b, c](double tau) { return c * tau * b(tau); }); };
    auto tau_linear = [](double c) { return CoefFn([c](double tau) { return c * tau; }); };

    CoefficientFunctions c;
    c.b_fn = b;
    if (name == "eq8-set1") {
        // y_t = -0.2 y_{t-1} + eps_t sqrt(1 + 0.4 y_{t-1}^2)
        c.phi_fns = {constant(-0.2)};
        c.beta_fns = {scaled_b(0.4)};
    } else if (name == "eq8-set2") {
        // y_t = 0.5 u_t y_{t-1} + eps_t sqrt(1 + 0.5 u_t y_{t-1}^2)
        c.phi_fns = {tau_linear(0.5)};
        c.beta_fns = {tau_scaled_b(0.5)};
    } else if (name == "eq13-i") {
        c.phi_fns = {constant(0.1), constant(0.3)};
        c.beta_fns = {scaled_b(0.1), scaled_b(0.4)};
    } else if (name == "eq13-ii") {
        c.phi_fns = {tau_linear(0.1), constant(0.3)};
        c.beta_fns = {tau_scaled_b(0.1), scaled_b(0.4)};
    } else if (name == "eq13-iii") {
        c.phi_fns = {tau_linear(0.1), constant(0.3)};
        c.beta_fns = {tau_scaled_b(0.1), tau_scaled_b(0.4)};
    } else if (name == "eq14") {
        // order-two process with location departure c1 and scale departure c2 at lag 2
        c.phi_fns = {constant(0.0), constant(params.c1)};
        c.beta_fns = {scaled_b(0.1), scaled_b(params.c2)};
    } else {
        fail(ErrorKind::InvalidArgument, "unknown design '" + name + "'");
    }
    c.description = name + " (" + inn.name() + ")";
    return c;
}

}  // namespace qdar
