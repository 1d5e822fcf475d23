#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "nestmc/errors.hpp"
#include "nestmc/mlmc.hpp"
#include "nestmc/model_problem.hpp"
#include "nestmc/risk.hpp"
#include "nestmc/version.hpp"

using json = nlohmann::ordered_json;
using namespace nestmc;

namespace {

struct Options {
    double tau = 0.02;
    std::optional<double> l_eta;
    double eta = 0.025;
    std::vector<std::string> modes{"adaptive"};
    double r = 1.5;
    std::int64_t n0 = 32;
    double confidence = 3.0;
    std::string coupling = "anti";
    std::string payoff = "heaviside";
    std::string levels = "0..7";
    std::int64_t m = 10000;
    double tol_rel = 0.02;
    std::vector<double> tolerances{0.08, 0.04, 0.02, 0.01, 0.005};
    std::uint64_t seed = 1;
    int threads = 0;
    int repeat = 1;
    int fit_from = 2;
    std::string out;

    // var / cvar
    double eps = 0.005;
    double lambda0 = 0.0;
    double l0 = 0.0;
    double h0 = 0.1;

    double resolved_l_eta() const {
        return l_eta ? *l_eta : l_eta_from_eta(eta, tau);
    }
};

std::pair<int, int> parse_levels(const std::string& text) {
    const auto dots = text.find("..");
    if (dots == std::string::npos)
        fail(ErrorCode::InvalidConfig, "levels must look like A..B");
    const int first = std::stoi(text.substr(0, dots));
    const int last = std::stoi(text.substr(dots + 2));
    if (first < 0 || last < first)
        fail(ErrorCode::InvalidConfig, "levels must satisfy 0 <= A <= B");
    return {first, last};
}

MlmcConfig make_mlmc_config(const Options& opt, const std::string& mode) {
    MlmcConfig cfg;
    cfg.n0 = opt.n0;
    if (mode == "det2") {
        cfg.sampling_mode = Det2Mode{};
    } else if (mode == "det4") {
        cfg.sampling_mode = Det4Mode{};
    } else if (mode == "adaptive") {
        cfg.sampling_mode = AdaptiveConfig{opt.n0, opt.confidence, opt.r};
    } else {
        fail(ErrorCode::InvalidConfig, "mode must be det2, det4 or adaptive");
    }
    if (opt.coupling == "anti") {
        cfg.coupling = Coupling::antithetic;
    } else if (opt.coupling == "indep") {
        cfg.coupling = Coupling::independent;
    } else {
        fail(ErrorCode::InvalidConfig, "coupling must be indep or anti");
    }
    if (opt.payoff == "heaviside") {
        cfg.payoff = Payoff::heaviside_step;
    } else if (opt.payoff == "max") {
        cfg.payoff = Payoff::positive_part;
    } else {
        fail(ErrorCode::InvalidConfig, "payoff must be heaviside or max");
    }
    cfg.threads = opt.threads;
    return cfg;
}

std::string config_echo(const Options& opt, const std::string& command,
                        const std::string& mode) {
    std::ostringstream s;
    s.precision(17);
    s << "nestmc v" << NESTMC_VERSION << " | " << command << " --mode=" << mode
      << " --tau=" << opt.tau << " --l-eta=" << opt.resolved_l_eta()
      << " --eta=" << opt.eta << " --n0=" << opt.n0 << " --r=" << opt.r
      << " --confidence=" << opt.confidence << " --coupling=" << opt.coupling
      << " --payoff=" << opt.payoff << " --levels=" << opt.levels
      << " --m=" << opt.m << " --tol-rel=" << opt.tol_rel
      << " --seed=" << opt.seed << " --repeat=" << opt.repeat;
    return s.str();
}

std::string output_path(const std::string& base, const std::string& mode,
                        bool multi) {
    if (base.empty() || !multi)
        return base;
    const auto dot = base.rfind('.');
    if (dot == std::string::npos)
        return base + "_" + mode;
    return base.substr(0, dot) + "_" + mode + base.substr(dot);
}

void write_text(const std::string& path, const std::string& text) {
    if (path.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream file(path);
    if (!file)
        fail(ErrorCode::InvalidConfig, "cannot open output file " + path);
    file << text;
}

int cmd_converge(const Options& opt) {
    const auto [first, last] = parse_levels(opt.levels);
    const ModelProblem problem({opt.tau, opt.resolved_l_eta()});
    json rates = json::array();
    const bool multi = opt.modes.size() > 1;
    for (std::size_t i = 0; i < opt.modes.size(); ++i) {
        const std::string& mode = opt.modes[i];
        const MlmcConfig cfg = make_mlmc_config(opt, mode);
        RngStream rng = RngStream(opt.seed).derive(0x636f6e76ULL, i);
        const auto table = convergence_study(first, last, opt.m, cfg, problem, rng);

        std::ostringstream csv;
        write_level_csv(csv, table, {config_echo(opt, "converge", mode)});
        write_text(output_path(opt.out, mode, multi), csv.str());

        const int skip = std::max(0, opt.fit_from - first);
        json entry{{"mode", mode}};
        if (table.size() >= 3 &&
            table.size() - static_cast<std::size_t>(skip) >= 2) {
            const RateFit fit = fit_rates(table, skip);
            entry["alpha_hat"] = fit.alpha;
            entry["alpha_se"] = fit.alpha_se;
            entry["beta_hat"] = fit.beta;
            entry["beta_se"] = fit.beta_se;
            entry["gamma_hat"] = fit.gamma;
            entry["gamma_se"] = fit.gamma_se;
            entry["fit_from_level"] = opt.fit_from;
        }
        rates.push_back(entry);
    }
    std::cout << json{{"rates", rates}}.dump(2) << "\n";
    return 0;
}

int cmd_estimate(const Options& opt) {
    const ModelProblem problem({opt.tau, opt.resolved_l_eta()});
    const double eta_exact = analytic_eta(problem.params());
    json runs = json::array();
    for (const std::string& mode : opt.modes) {
        MlmcConfig cfg = make_mlmc_config(opt, mode);
        cfg.tol = opt.tol_rel * eta_exact;
        for (int rep = 0; rep < opt.repeat; ++rep) {
            RngStream rng = RngStream(opt.seed).derive(0x657374ULL, rep);
            const MlmcResult res = estimate(cfg, problem, rng);
            json levels = json::array();
            for (const LevelRecord& rec : res.levels) {
                const LevelStats row = summarize(rec);
                levels.push_back({{"level", row.level},
                                  {"M", row.m},
                                  {"E", row.e},
                                  {"V", row.v},
                                  {"W", row.w}});
            }
            runs.push_back({{"mode", mode},
                            {"rep", rep},
                            {"estimate", res.estimate},
                            {"exact", eta_exact},
                            {"error", res.estimate - eta_exact},
                            {"tol", cfg.tol},
                            {"stat_error", res.stat_error},
                            {"bias_estimate", res.bias_estimate},
                            {"first_level", res.first_level},
                            {"total_inner_work", res.total_inner_work},
                            {"levels", levels}});
        }
    }
    write_text(opt.out, json{{"runs", runs}}.dump(2) + "\n");
    return 0;
}

int cmd_complexity(const Options& opt) {
    const ModelProblem problem({opt.tau, opt.resolved_l_eta()});
    const double eta_exact = analytic_eta(problem.params());
    const bool multi = opt.modes.size() > 1;
    for (std::size_t i = 0; i < opt.modes.size(); ++i) {
        const std::string& mode = opt.modes[i];
        std::ostringstream csv;
        csv << "# " << config_echo(opt, "complexity", mode) << "\n";
        csv << "tol,total_work,wall_time,estimate,error\n";
        char line[256];
        for (std::size_t t = 0; t < opt.tolerances.size(); ++t) {
            MlmcConfig cfg = make_mlmc_config(opt, mode);
            cfg.tol = opt.tolerances[t] * eta_exact;
            // sweeps measure the scaling of the full hierarchy from level 0;
            // the starting-level rule would floor the depth at cheap tolerances
            cfg.search_start_level = false;
            cfg.first_level = 0;
            for (int rep = 0; rep < opt.repeat; ++rep) {
                RngStream rng =
                    RngStream(opt.seed).derive(0x636d706cULL + i, t * 1000 + rep);
                const auto t0 = std::chrono::steady_clock::now();
                const MlmcResult res = estimate(cfg, problem, rng);
                const double wall = std::chrono::duration<double>(
                                        std::chrono::steady_clock::now() - t0)
                                        .count();
                std::snprintf(line, sizeof(line),
                              "%.17g,%llu,%.6f,%.17g,%.17g\n", cfg.tol,
                              static_cast<unsigned long long>(res.total_inner_work),
                              wall, res.estimate, res.estimate - eta_exact);
                csv << line;
            }
        }
        write_text(output_path(opt.out, mode, multi), csv.str());
    }
    return 0;
}

int cmd_var(const Options& opt) {
    const ModelProblem loss({opt.tau, 0.0}); // threshold-free loss problem
    MlmcConfig cfg = make_mlmc_config(opt, opt.modes.front());
    RootFindConfig root;
    root.eta_target = opt.eta;
    root.eps = opt.eps;
    root.lambda0 = opt.lambda0;
    root.l0 = opt.l0;
    root.h0 = opt.h0;

    RngStream rng(opt.seed);
    const VarResult res =
        var_root_find(root, make_mlmc_prob_estimator(cfg, loss, rng));

    json trace = json::array();
    for (const VarTracePoint& p : res.trace)
        trace.push_back({{"l_hat", p.l_hat},
                         {"eta_hat", p.eta_hat},
                         {"lambda", p.lambda},
                         {"h", p.h}});
    const json out{{"command", "var"},
                   {"eta", opt.eta},
                   {"eps", opt.eps},
                   {"seed", opt.seed},
                   {"l_eta_hat", res.l_eta_hat},
                   {"exact_l_eta", l_eta_from_eta(opt.eta, opt.tau)},
                   {"iterations", res.iterations},
                   {"total_work", res.total_work},
                   {"trace_length", trace.size()},
                   {"trace", trace}};
    write_text(opt.out, out.dump(2) + "\n");
    return 0;
}

int cmd_cvar(const Options& opt) {
    const ModelProblem loss({opt.tau, 0.0});
    MlmcConfig cfg = make_mlmc_config(opt, opt.modes.front());
    const ModelParams var_params{opt.tau, l_eta_from_eta(opt.eta, opt.tau)};
    const double cvar_exact = analytic_cvar(var_params);
    const double tol = opt.tol_rel * cvar_exact;

    // an O(sqrt(tol)) loss-level error keeps the quadratic threshold
    // insensitivity below the budget
    RootFindConfig root;
    root.eta_target = opt.eta;
    root.eps = std::min(0.1 * std::sqrt(tol), opt.h0);
    root.lambda0 = opt.lambda0;
    root.l0 = opt.l0;
    root.h0 = opt.h0;

    RngStream rng(opt.seed);
    const VarResult var_res =
        var_root_find(root, make_mlmc_prob_estimator(cfg, loss, rng));

    RngStream cvar_rng = RngStream(opt.seed).derive(0x63766172ULL);
    const CvarResult res =
        cvar_estimate(var_res.l_eta_hat, opt.eta, tol, cfg, loss, cvar_rng);

    const json out{{"command", "cvar"},
                   {"eta", opt.eta},
                   {"tol_rel", opt.tol_rel},
                   {"tol", tol},
                   {"seed", opt.seed},
                   {"cvar", res.value},
                   {"exact_cvar", cvar_exact},
                   {"error", res.value - cvar_exact},
                   {"l_eta_hat", var_res.l_eta_hat},
                   {"var_eps", root.eps},
                   {"var_work", var_res.total_work},
                   {"cvar_work", res.total_work},
                   {"total_work", var_res.total_work + res.total_work}};
    write_text(opt.out, out.dump(2) + "\n");
    return 0;
}

void add_common(CLI::App* cmd, Options& opt) {
    cmd->add_option("--tau", opt.tau, "risk horizon of the model problem");
    cmd->add_option("--l-eta", opt.l_eta, "loss threshold (overrides --eta)");
    cmd->add_option("--eta", opt.eta, "target probability, sets the threshold");
    cmd->add_option("--mode", opt.modes, "sampling modes: det2, det4, adaptive")
        ->delimiter(',');
    cmd->add_option("--r", opt.r, "adaptivity exponent, 1 < r < 2");
    cmd->add_option("--n0", opt.n0, "base inner-sample count N0");
    cmd->add_option("--confidence", opt.confidence, "adaptive confidence constant");
    cmd->add_option("--coupling", opt.coupling, "level coupling: indep or anti");
    cmd->add_option("--payoff", opt.payoff, "payoff: heaviside or max");
    cmd->add_option("--seed", opt.seed, "root seed; fixes every stream");
    cmd->add_option("--threads", opt.threads,
                    "worker count (0: NESTMC_THREADS env or hardware)");
    cmd->add_option("--out", opt.out, "output path (default stdout)");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"multilevel estimation of nested expectations and risk measures"};
    app.set_version_flag("--version", NESTMC_VERSION);
    app.set_config("--config");
    app.require_subcommand(1);

    Options opt;
    int (*runner)(const Options&) = nullptr;

    CLI::App* converge =
        app.add_subcommand("converge", "per-level convergence tables and rates");
    add_common(converge, opt);
    converge->add_option("--levels", opt.levels, "level range A..B");
    converge->add_option("--m", opt.m, "outer samples per level");
    converge->add_option("--fit-from", opt.fit_from, "first level used in rate fits");
    converge->callback([&] { runner = cmd_converge; });

    CLI::App* est = app.add_subcommand("estimate", "full multilevel estimate");
    add_common(est, opt);
    est->add_option("--tol-rel", opt.tol_rel, "RMS tolerance relative to eta");
    est->add_option("--repeat", opt.repeat, "independent repetitions");
    est->callback([&] { runner = cmd_estimate; });

    CLI::App* cplx =
        app.add_subcommand("complexity", "work-versus-tolerance sweep");
    add_common(cplx, opt);
    cplx->add_option("--tolerances", opt.tolerances,
                     "relative tolerances to sweep")
        ->delimiter(',');
    cplx->add_option("--repeat", opt.repeat, "runs per tolerance");
    cplx->callback([&] { runner = cmd_complexity; });

    CLI::App* var = app.add_subcommand("var", "value-at-risk by root finding");
    add_common(var, opt);
    var->add_option("--eps", opt.eps, "loss-level tolerance");
    var->add_option("--lambda0", opt.lambda0, "initial probe RMS (0: eta/4)");
    var->add_option("--l0", opt.l0, "initial loss-level guess");
    var->add_option("--h0", opt.h0, "initial step");
    var->callback([&] { runner = cmd_var; });

    CLI::App* cvar = app.add_subcommand("cvar", "conditional value-at-risk");
    add_common(cvar, opt);
    cvar->add_option("--tol-rel", opt.tol_rel, "RMS tolerance relative to CVaR");
    cvar->add_option("--lambda0", opt.lambda0, "initial probe RMS (0: eta/4)");
    cvar->add_option("--l0", opt.l0, "initial loss-level guess");
    cvar->add_option("--h0", opt.h0, "initial step");
    cvar->callback([&] { runner = cmd_cvar; });

    try {
        app.parse(argc, argv);
        return runner(opt);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        if (e.code() == ErrorCode::MaxLevelExceeded ||
            e.code() == ErrorCode::BudgetExceeded)
            return 3;
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
