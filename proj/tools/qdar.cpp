// qdar: command-line front end for simulation, estimation, order selection,
// diagnostics, forecasting, backtesting and replication studies.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "qdar/qdar.hpp"

namespace fs = std::filesystem;
using qdar::io::Json;

namespace {

struct Common {
    std::string input;
    std::string column;
    std::string output_dir = ".";
    double tau = 0.05;
    std::string tau_grid;
    int order = 1;
    int p_max = 10;
    std::string weights = "cubic";
    std::string bandwidth = "hall-sheather";
    std::uint64_t seed = 1;
    int reps = 200;
    unsigned workers = 1;
    std::string design = "eq8-set1";
    std::string innovation = "normal";
    double c1 = 0.0;
    double c2 = 0.0;
    int n = 1000;
    int starts = 8;
};

qdar::WeightScheme parse_weights(const std::string& s) {
    if (s == "cubic") return {qdar::WeightKind::SelfWeightCubic, 0};
    if (s == "unit") return {qdar::WeightKind::Unit, 0};
    qdar::fail(qdar::ErrorKind::InvalidArgument, "unknown weight scheme '" + s + "' (cubic|unit)");
}

/// "0.05,0.1,0.9" or an integer K meaning k/(K+1).
std::vector<double> parse_levels(const std::string& s) {
    std::vector<double> out;
    if (s.find_first_of(".,") == std::string::npos) {
        try {
            return qdar::bic_levels(std::stoi(s));
        } catch (const std::logic_error&) {
            qdar::fail(qdar::ErrorKind::InvalidArgument, "bad level grid '" + s + "'");
        }
    }
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        double v = 0.0;
        if (!qdar::io::detail::parse_double(qdar::io::detail::trim(cell), v))
            qdar::fail(qdar::ErrorKind::InvalidArgument, "bad level '" + cell + "'");
        out.push_back(v);
    }
    return out;
}

Json common_config(const Common& c) {
    Json j;
    j["input"] = c.input;
    j["output_dir"] = c.output_dir;
    j["weights"] = c.weights;
    j["bandwidth"] = c.bandwidth;
    j["seed"] = c.seed;
    j["workers"] = c.workers;
    return j;
}

qdar::FitOptions fit_options(const Common& c) {
    qdar::FitOptions o;
    o.seed = c.seed;
    o.bandwidth = qdar::parse_bandwidth_rule(c.bandwidth);
    o.starts = c.starts;
    return o;
}

qdar::SeriesSample load(const Common& c, Json& config) {
    if (c.input.empty()) qdar::fail(qdar::ErrorKind::InvalidArgument, "--input is required");
    auto csv = qdar::io::read_series_csv(c.input, c.column);
    for (const auto& note : csv.notes) std::cerr << "note: " << note << '\n';
    config["column"] = csv.column;
    config["n"] = csv.series.size();
    return csv.series;
}

fs::path out_path(const Common& c, const std::string& name) {
    fs::create_directories(c.output_dir);
    return fs::path(c.output_dir) / name;
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p);
    if (!out) qdar::fail(qdar::ErrorKind::InvalidArgument, "cannot write '" + p.string() + "'");
    out << text;
}

std::string csv_header_comment(const Json& config) { return "# config: " + config.dump() + "\n"; }

// Each command returns true when statistical-degeneracy warnings were raised.

bool cmd_simulate(const Common& c, const std::string& coef_table, std::size_t burn_in) {
    Json config = common_config(c);
    qdar::CoefficientFunctions coefs;
    if (!coef_table.empty()) {
        coefs = qdar::io::read_coefficient_table(coef_table);
        config["coef_table"] = coef_table;
    } else {
        qdar::DesignParams params{qdar::parse_innovation(c.innovation), c.c1, c.c2};
        coefs = qdar::make_design_coefs(c.design, params);
        config["design"] = c.design;
        config["innovation"] = c.innovation;
        config["c1"] = c.c1;
        config["c2"] = c.c2;
    }
    coefs.validate();
    config["n"] = c.n;
    config["burn_in"] = burn_in;
    if (c.n < 0) qdar::fail(qdar::ErrorKind::InvalidArgument, "n must be nonnegative");
    const qdar::SeriesSample s = qdar::simulate_qdar(coefs, static_cast<std::size_t>(c.n), burn_in, c.seed);
    std::ostringstream csv;
    csv << csv_header_comment(config);
    qdar::io::write_series_csv(csv, s);
    write_text(out_path(c, "series.csv"), csv.str());
    Json result{{"origin", s.origin}, {"n", s.size()}, {"monotone_scale_curves", coefs.scale_curves_nondecreasing()}};
    qdar::io::write_json(out_path(c, "simulate.json").string(), qdar::io::envelope("simulate", config, result));
    return false;
}

bool cmd_fit(const Common& c, bool qar, bool write_fitted) {
    Json config = common_config(c);
    const qdar::SeriesSample s = load(c, config);
    const auto scheme = parse_weights(c.weights);
    qdar::FitOptions o = fit_options(c);
    o.constrain_beta_zero = qar;
    config["order"] = c.order;
    config["qar"] = qar;
    config["starts"] = c.starts;
    bool warned = false;
    Json result;
    if (c.tau_grid.empty()) {
        config["tau"] = c.tau;
        const qdar::FitResult f = qdar::fit(s, c.tau, c.order, scheme, o);
        warned = !f.warnings.empty();
        result = qdar::io::to_json(f);
        if (write_fitted) {
            const auto d = qdar::make_design(s, c.order, scheme);
            const qdar::Vector q = qdar::fitted_quantiles(f.theta, d);
            std::vector<std::vector<double>> rows;
            for (int r = 0; r < d.rows(); ++r) rows.push_back({double(d.first + r + 1), d.y[r], q[r]});
            std::ostringstream csv;
            qdar::io::write_table_csv(csv, {"t", "y", "q"}, rows);
            write_text(out_path(c, "fitted.csv"), csv.str());
        }
    } else {
        const auto levels = parse_levels(c.tau_grid);
        config["tau_grid"] = levels;
        const qdar::MultiFit mf = qdar::fit_levels(s, levels, c.order, scheme, o, true, c.workers);
        Json fits = Json::array();
        for (std::size_t k = 0; k < levels.size(); ++k) {
            Json one = mf.fits[k] ? qdar::io::to_json(*mf.fits[k]) : Json{{"tau", levels[k]}};
            one["status"] = mf.status[k];
            if (mf.fits[k] && !mf.fits[k]->warnings.empty()) warned = true;
            if (!mf.fits[k]) warned = true;
            fits.push_back(one);
        }
        result["fits"] = fits;
        result["rearranged"] = mf.rearranged;
        if (write_fitted) {
            std::vector<std::string> header{"t"};
            for (double l : levels) header.push_back("q" + qdar::io::format_double(l));
            std::vector<std::vector<double>> rows;
            for (int r = 0; r < mf.fitted.cols(); ++r) {
                std::vector<double> row{double(c.order + r + 1)};
                for (int k = 0; k < mf.fitted.rows(); ++k) row.push_back(mf.fitted(k, r));
                rows.push_back(row);
            }
            std::ostringstream csv;
            qdar::io::write_table_csv(csv, header, rows);
            write_text(out_path(c, "fitted.csv"), csv.str());
        }
    }
    qdar::io::write_json(out_path(c, "fit.json").string(), qdar::io::envelope("fit", config, result));
    std::cout << qdar::io::envelope("fit", config, result)["result"].dump(2) << '\n';
    return warned;
}

bool cmd_select(const Common& c) {
    Json config = common_config(c);
    const qdar::SeriesSample s = load(c, config);
    const auto levels = parse_levels(c.tau_grid.empty() ? "9" : c.tau_grid);
    config["p_max"] = c.p_max;
    config["tau_grid"] = levels;
    config["starts"] = c.starts;
    qdar::FitOptions o = fit_options(c);
    const qdar::BicTable t = qdar::select_order_levels(s, levels, c.p_max, parse_weights(c.weights), o, c.workers);
    std::vector<std::string> header{"p"};
    for (double l : levels) header.push_back("bic_" + qdar::io::format_double(l));
    header.push_back("combined");
    std::vector<std::vector<double>> rows;
    for (int p = 1; p <= c.p_max; ++p) {
        std::vector<double> row{double(p)};
        for (int k = 0; k < t.per_level.rows(); ++k) row.push_back(t.per_level(k, p - 1));
        row.push_back(t.combined[p - 1]);
        rows.push_back(row);
    }
    std::ostringstream csv;
    csv << csv_header_comment(config);
    qdar::io::write_table_csv(csv, header, rows);
    write_text(out_path(c, "bic.csv"), csv.str());
    const Json env = qdar::io::envelope("select", config, qdar::io::to_json(t));
    qdar::io::write_json(out_path(c, "select.json").string(), env);
    std::cout << "chosen order: " << t.chosen << '\n';
    return t.degenerate || !t.warnings.empty();
}

bool cmd_diagnose(const Common& c, int K, int B) {
    Json config = common_config(c);
    const qdar::SeriesSample s = load(c, config);
    config["tau"] = c.tau;
    config["order"] = c.order;
    config["lags"] = K;
    config["B"] = B;
    const qdar::FitResult f = qdar::fit(s, c.tau, c.order, parse_weights(c.weights), fit_options(c));
    const qdar::QacfReport rep = qdar::qacf(s, f, K);
    const qdar::PortmanteauResult pm =
        qdar::portmanteau(rep, static_cast<int>(s.size()), B, qdar::derive_seed(c.seed, 99), qdar::FactorKind::Eigen,
                          c.workers);
    std::vector<std::vector<double>> rows;
    for (const auto& b : qdar::qacf_confidence_bands(rep, static_cast<int>(s.size())))
        rows.push_back({double(b.lag), b.is_abs ? 1.0 : 0.0, b.estimate, b.half_width});
    std::ostringstream csv;
    csv << csv_header_comment(config);
    qdar::io::write_table_csv(csv, {"k", "abs", "value", "half_width"}, rows);
    write_text(out_path(c, "qacf.csv"), csv.str());
    Json result{{"fit", qdar::io::to_json(f)}, {"qacf", qdar::io::to_json(rep)}, {"portmanteau", qdar::io::to_json(pm)}};
    qdar::io::write_json(out_path(c, "diagnose.json").string(), qdar::io::envelope("diagnose", config, result));
    std::cout << "Q1=" << pm.q1 << " (p=" << pm.p1 << ")  Q2=" << pm.q2 << " (p=" << pm.p2 << ")  Q=" << pm.q
              << " (p=" << pm.p_comb << ")\n";
    return !f.warnings.empty() || rep.psd_deviation > 0.0;
}

bool cmd_forecast(const Common& c) {
    Json config = common_config(c);
    const qdar::SeriesSample s = load(c, config);
    const auto levels = c.tau_grid.empty() ? std::vector<double>{c.tau} : parse_levels(c.tau_grid);
    config["tau_grid"] = levels;
    config["order"] = c.order;
    const qdar::MultiFit mf = qdar::fit_levels(s, levels, c.order, parse_weights(c.weights), fit_options(c), true,
                                               c.workers);
    const auto last = qdar::last_values(s, c.order);
    const auto fc = qdar::forecast_levels(mf, last, true);
    Json result = Json::array();
    bool warned = false;
    for (std::size_t k = 0; k < levels.size(); ++k) {
        result.push_back(Json{{"tau", levels[k]},
                              {"forecast", std::isfinite(fc[k]) ? Json(fc[k]) : Json(nullptr)},
                              {"status", mf.status[k]}});
        warned = warned || !mf.fits[k] || !mf.fits[k]->warnings.empty();
        std::cout << levels[k] << ": " << fc[k] << '\n';
    }
    qdar::io::write_json(out_path(c, "forecast.json").string(), qdar::io::envelope("forecast", config, result));
    return warned;
}

bool cmd_backtest(const Common& c, int origin, int window, bool qar) {
    Json config = common_config(c);
    const qdar::SeriesSample s = load(c, config);
    const auto levels = c.tau_grid.empty() ? qdar::default_backtest_levels() : parse_levels(c.tau_grid);
    config["tau_grid"] = levels;
    config["order"] = c.order;
    config["origin"] = origin;
    config["window"] = window;
    config["qar"] = qar;
    qdar::FitOptions o = fit_options(c);
    o.constrain_beta_zero = qar;
    const auto policy = window > 0 ? qdar::WindowPolicy::fixed(window) : qdar::WindowPolicy::expanding();
    const auto reports =
        qdar::backtest_suite(s, levels, c.order, origin - 1, policy, parse_weights(c.weights), o, c.workers);
    Json result = Json::array();
    std::ostringstream csv;
    csv << csv_header_comment(config) << "model,tau,ecr,cc,dq\n";
    bool warned = false;
    const std::string model = qar ? "QAR" : "QDAR";
    for (const auto& r : reports) {
        result.push_back(qdar::io::to_json(r));
        csv << model << ',' << qdar::io::format_double(r.tau) << ',' << qdar::io::format_double(r.ecr) << ','
            << qdar::io::format_double(r.cc_pvalue) << ',' << qdar::io::format_double(r.dq_pvalue) << '\n';
        warned = warned || !r.error.empty() || r.cc_degenerate || r.failed_fits > 0;
        std::cout << "tau=" << r.tau << " ECR=" << r.ecr << "% CC p=" << r.cc_pvalue << " DQ p=" << r.dq_pvalue
                  << (r.error.empty() ? "" : "  [" + r.error + "]") << '\n';
    }
    write_text(out_path(c, "backtest.csv"), csv.str());
    qdar::io::write_json(out_path(c, "backtest.json").string(), qdar::io::envelope("backtest", config, result));
    return warned;
}

bool cmd_replicate(const Common& c, const std::string& study, int K, int B, double kappa) {
    Json config = common_config(c);
    qdar::studies::StudyConfig sc;
    sc.design = c.design;
    sc.params = {qdar::parse_innovation(c.innovation), c.c1, c.c2};
    sc.n = c.n;
    sc.tau = c.tau;
    sc.reps = c.reps;
    sc.seed = c.seed;
    sc.workers = c.workers;
    sc.weights = parse_weights(c.weights);
    sc.bandwidth = qdar::parse_bandwidth_rule(c.bandwidth);
    sc.starts = c.starts;
    config["study"] = study;
    config["design"] = c.design;
    config["innovation"] = c.innovation;
    config["c1"] = c.c1;
    config["c2"] = c.c2;
    config["n"] = c.n;
    config["tau"] = c.tau;
    config["reps"] = c.reps;
    config["starts"] = c.starts;
    std::ostringstream csv;
    Json result;
    if (study == "estimation") {
        const auto e = qdar::studies::estimation_study(sc);
        csv << csv_header_comment(config) << "component,true,bias,esd,asd\n";
        for (const auto& x : e.components)
            csv << x.name << ',' << qdar::io::format_double(x.truth) << ',' << qdar::io::format_double(x.bias) << ','
                << qdar::io::format_double(x.esd) << ',' << qdar::io::format_double(x.asd) << '\n';
        result["failures"] = e.failures;
    } else if (study == "selection") {
        const auto s = qdar::studies::selection_study(sc, c.p_max, K);
        config["p_max"] = c.p_max;
        config["levels"] = K;
        csv << csv_header_comment(config) << "underfit,correct,overfit,failures\n"
            << qdar::io::format_double(s.rate(s.under)) << ',' << qdar::io::format_double(s.rate(s.correct)) << ','
            << qdar::io::format_double(s.rate(s.over)) << ',' << s.failures << '\n';
        result["chosen"] = s.chosen;
    } else if (study == "qacf" || study == "portmanteau") {
        const bool tests = study == "portmanteau";
        config["lags"] = K;
        config["B"] = tests ? B : 0;
        const auto q = qdar::studies::qacf_study(sc, K, tests ? B : 0);
        if (tests) {
            csv << csv_header_comment(config) << "q1,q2,q\n"
                << qdar::io::format_double(q.reject_q1) << ',' << qdar::io::format_double(q.reject_q2) << ','
                << qdar::io::format_double(q.reject_q) << '\n';
        } else {
            csv << csv_header_comment(config) << "statistic,lag,bias,esd,asd\n";
            for (const auto& l : q.lags)
                csv << (l.is_abs ? "r" : "rho") << ',' << l.lag << ',' << qdar::io::format_double(l.bias) << ','
                    << qdar::io::format_double(l.esd) << ',' << qdar::io::format_double(l.asd) << '\n';
        }
        result["failures"] = q.failures;
    } else if (study == "region") {
        const auto grid_phi = qdar::linspace(-3.0, 3.0, 61);
        const auto grid_beta = qdar::linspace(0.0, 8.0, 41);
        config["kappa"] = kappa;
        const auto reg = qdar::stationarity_region(qdar::parse_innovation(c.innovation), kappa, grid_phi,
                                                   grid_beta, 20000, c.seed, c.workers);
        csv << csv_header_comment(config) << "phi,beta,stationary,bound,stderr\n";
        for (const auto& cell : reg.cells)
            csv << qdar::io::format_double(cell.phi) << ',' << qdar::io::format_double(cell.beta) << ','
                << (cell.stationary ? 1 : 0) << ',' << qdar::io::format_double(cell.bound) << ','
                << qdar::io::format_double(cell.std_err) << '\n';
    } else {
        qdar::fail(qdar::ErrorKind::InvalidArgument,
                   "unknown study '" + study + "' (estimation|selection|qacf|portmanteau|region)");
    }
    write_text(out_path(c, study + ".csv"), csv.str());
    qdar::io::write_json(out_path(c, study + ".json").string(), qdar::io::envelope("replicate", config, result));
    std::cout << csv.str();
    return false;
}

void add_shared(CLI::App* app, Common& c, bool input = true) {
    if (input) {
        app->add_option("--input", c.input, "input CSV (header row, one numeric column, optional date column)");
        app->add_option("--column", c.column, "value column name when the CSV has several");
    }
    app->add_option("--output-dir", c.output_dir, "directory for output artifacts");
    app->add_option("--seed", c.seed, "random seed");
    app->add_option("--workers", c.workers, "worker threads");
    app->add_option("--weights", c.weights, "weight scheme")->check(CLI::IsMember({"cubic", "unit"}));
    app->add_option("--bandwidth", c.bandwidth, "density bandwidth rule")
        ->check(CLI::IsMember({"bofinger", "hall-sheather"}));
    app->add_option("--starts", c.starts, "optimizer starting points");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Quantile double autoregression toolkit"};
    app.require_subcommand(1);
    Common c;

    auto* sim = app.add_subcommand("simulate", "simulate a built-in design or a coefficient table");
    std::string coef_table;
    std::size_t burn_in = qdar::kDefaultBurnIn;
    add_shared(sim, c, false);
    sim->add_option("--design", c.design, "eq8-set1|eq8-set2|eq13-i|eq13-ii|eq13-iii|eq14");
    sim->add_option("--coef-table", coef_table, "CSV with tau,b,phi1..,beta1.. columns");
    sim->add_option("--innovation", c.innovation, "normal, tN or student-t:df");
    sim->add_option("--c1", c.c1, "eq14 location departure");
    sim->add_option("--c2", c.c2, "eq14 scale departure");
    sim->add_option("-n,--n", c.n, "series length");
    sim->add_option("--burn-in", burn_in, "discarded initial values");

    auto* fit = app.add_subcommand("fit", "conditional quantile estimation");
    bool qar = false, fitted = false;
    add_shared(fit, c);
    fit->add_option("--tau", c.tau, "quantile level");
    fit->add_option("--tau-grid", c.tau_grid, "comma-separated levels, or K for k/(K+1)");
    fit->add_option("--order", c.order, "model order p");
    fit->add_flag("--qar", qar, "constrain beta to zero (quantile AR)");
    fit->add_flag("--fitted", fitted, "also write fitted quantiles");

    auto* sel = app.add_subcommand("select", "BIC order selection");
    add_shared(sel, c);
    sel->add_option("--p-max", c.p_max, "largest order scanned");
    sel->add_option("--tau-grid", c.tau_grid, "levels, or K for k/(K+1) (default 9)");

    auto* diag = app.add_subcommand("diagnose", "residual QACFs and portmanteau tests");
    int K = 6, B = qdar::kDefaultNullDraws;
    add_shared(diag, c);
    diag->add_option("--tau", c.tau, "quantile level");
    diag->add_option("--order", c.order, "model order p");
    diag->add_option("--lags", K, "number of lags K");
    diag->add_option("--B", B, "null draws");

    auto* fc = app.add_subcommand("forecast", "one-step conditional quantile forecasts");
    add_shared(fc, c);
    fc->add_option("--tau", c.tau, "quantile level");
    fc->add_option("--tau-grid", c.tau_grid, "levels (forecasts are rearranged)");
    fc->add_option("--order", c.order, "model order p");

    auto* bt = app.add_subcommand("backtest", "rolling VaR forecasts with CC and DQ tests");
    int origin = 501, window = 0;
    bool bt_qar = false;
    add_shared(bt, c);
    bt->add_option("--tau-grid", c.tau_grid, "levels (default 0.05,0.1,0.9,0.95)");
    bt->add_option("--order", c.order, "model order p");
    bt->add_option("--origin", origin, "1-based index of the first forecast target");
    bt->add_option("--window", window, "fixed window length (0: expanding)");
    bt->add_flag("--qar", bt_qar, "use the beta = 0 quantile AR forecaster");

    auto* rep = app.add_subcommand("replicate", "Monte-Carlo study tables");
    std::string study = "estimation";
    double kappa = 0.5;
    add_shared(rep, c, false);
    rep->add_option("--study", study, "estimation|selection|qacf|portmanteau|region");
    rep->add_option("--design", c.design, "built-in design");
    rep->add_option("--innovation", c.innovation, "normal, tN or student-t:df");
    rep->add_option("--c1", c.c1, "eq14 location departure");
    rep->add_option("--c2", c.c2, "eq14 scale departure");
    rep->add_option("-n,--n", c.n, "series length");
    rep->add_option("--tau", c.tau, "quantile level");
    rep->add_option("--reps", c.reps, "replications");
    rep->add_option("--p-max", c.p_max, "largest order (selection)");
    rep->add_option("--lags", K, "QACF lags, or BIC levels K for selection");
    rep->add_option("--B", B, "null draws (portmanteau)");
    rep->add_option("--kappa", kappa, "moment exponent (region; 0 for the log condition)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        bool warned = false;
        if (*sim) warned = cmd_simulate(c, coef_table, burn_in);
        else if (*fit) warned = cmd_fit(c, qar, fitted);
        else if (*sel) {
            if (sel->count("--p-max") == 0) c.p_max = 10;
            warned = cmd_select(c);
        } else if (*diag) warned = cmd_diagnose(c, K, B);
        else if (*fc) warned = cmd_forecast(c);
        else if (*bt) warned = cmd_backtest(c, origin, window, bt_qar);
        else if (*rep) {
            if (rep->count("--p-max") == 0) c.p_max = 5;
            if (rep->count("--tau") == 0) c.tau = 0.25;
            if (rep->count("--lags") == 0 && study == "selection") K = 9;
            warned = cmd_replicate(c, study, K, B, kappa);
        }
        return warned ? 1 : 0;
    } catch (const qdar::Error& e) {
        std::cerr << "error (" << qdar::to_string(e.kind()) << "): " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}
