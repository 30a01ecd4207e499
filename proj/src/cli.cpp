#include "winodds/cli_io.hpp"
#include "winodds/parallel.hpp"

#include "CLI11.hpp"

#include <fstream>
#include <iostream>
#include <sstream>

namespace winodds {

namespace {

std::vector<std::string> split_names(const std::string& list) {
    std::vector<std::string> out;
    if (list == "none" || list == "-") return out;
    std::stringstream ss(list);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto b = item.find_first_not_of(' ');
        const auto e = item.find_last_not_of(' ');
        if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
    }
    return out;
}

void emit(const std::string& text, const std::string& path, std::ostream& out) {
    if (path.empty() || path == "-") {
        out << text;
        return;
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write '" + path + "'");
    f << text;
}

struct AnalyzeArgs {
    std::string input;
    std::string adjust;
    double alpha = 0.05;
    std::string sided = "two";
    std::size_t bootstrap = 0;
    std::uint64_t seed = 1;
    unsigned workers = 0;
    std::string out;
    std::string format = "table";
};

struct SimulateArgs {
    std::size_t n = 500;
    std::string scenario = "A";
    double effect = 0.3;
    std::uint64_t seed = 1;
    bool null_flip = false;
    std::string flip_mode = "redraw";
    double event_fraction = 0.35;
    double scale = 7500.0;
    std::string out;
};

struct PowerArgs {
    std::size_t n = 1000;
    std::string scenario = "A";
    std::size_t reps = 1000;
    double alpha = 0.025;
    double effect = 0.3;
    std::string prefixes = "0..10";
    bool null_flip = false;
    std::string flip_mode = "redraw";
    std::uint64_t seed = 1;
    unsigned workers = 0;
    std::string out;
};

struct IncidenceArgs {
    std::string input;
    std::size_t points = 101;
    std::string out;
};

FlipMode parse_flip_mode(const std::string& s) {
    if (s == "redraw") return FlipMode::Redraw;
    if (s == "permute") return FlipMode::Permute;
    throw CLI::ValidationError("--flip-mode", "expected redraw or permute");
}

int do_analyze(const AnalyzeArgs& a, std::ostream& out, std::ostream& err) {
    CsvSchema schema;
    schema.covariates = split_names(a.adjust);
    schema.core_only = schema.covariates.empty() && !a.adjust.empty();
    const Dataset ds = load_csv(a.input, schema);
    AnalysisOptions opt;
    opt.alpha = a.alpha;
    opt.sided = a.sided == "one" ? Sided::One : Sided::Two;
    opt.bootstrap = a.bootstrap;
    opt.seed = a.seed;
    opt.workers = a.workers;
    const AnalysisReport rep = analyze(ds, ds.covariate_names(), opt);
    if (rep.unadjusted_inference.clamped || rep.adjusted_inference.clamped)
        err << "warning: confidence interval endpoint clamped to (0, 1) on the nu scale\n";
    const std::string text = a.format == "json" ? report_to_json(rep).dump(2) + "\n" : report_table(rep);
    emit(text, a.out, out);
    return kExitOk;
}

int do_simulate(const SimulateArgs& a, std::ostream& out) {
    TrialOptions opt;
    opt.event_fraction = a.event_fraction;
    opt.scale = a.scale;
    opt.flip_mode = parse_flip_mode(a.flip_mode);
    const Dataset ds =
        simulate_trial(a.n, scenario_weights(parse_scenario(a.scenario)), a.effect, a.null_flip, a.seed, opt);
    emit(dataset_csv(ds), a.out, out);
    return kExitOk;
}

int do_power(const PowerArgs& a, std::ostream& out, std::ostream& err) {
    StudyConfig cfg;
    cfg.n = a.n;
    cfg.reps = a.reps;
    cfg.scenario = parse_scenario(a.scenario);
    cfg.alpha = a.alpha;
    cfg.treatment_effect = a.effect;
    cfg.adjustment_sets = parse_prefix_list(a.prefixes);
    cfg.null_flip = a.null_flip;
    cfg.flip_mode = parse_flip_mode(a.flip_mode);
    cfg.seed = a.seed;
    validate(cfg);

    std::size_t last_step = 0;
    auto progress = [&](std::size_t done, std::size_t total) {
        const std::size_t step = done * 20 / total;  // 5% increments
        if (step > last_step) {
            last_step = step;
            err << "progress: " << done << "/" << total << " replicates (" << step * 5 << "%)\n";
        }
    };
    const StudyResult result = run_study(cfg, a.workers, progress);
    for (const auto& row : result.rows)
        if (row.failures > 0)
            err << "warning: " << row.failures << " replicate(s) failed for "
                << (row.method == Method::Direct ? std::string("unadjusted")
                                                 : "prefix " + std::to_string(row.adjustment_size))
                << " and were excluded\n";
    emit(study_csv(result), a.out, out);
    return kExitOk;
}

int do_incidence(const IncidenceArgs& a, std::ostream& out) {
    const Dataset ds = load_csv(a.input);
    const auto grid = default_incidence_grid(ds, a.points);
    emit(incidence_csv(emit_incidence_curve(ds, grid)), a.out, out);
    return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Covariate-adjusted win odds for hierarchical composite endpoints", "winodds"};
    app.require_subcommand(1);

    AnalyzeArgs an;
    auto* analyze_cmd = app.add_subcommand("analyze", "Unadjusted and covariate-adjusted win odds for a CSV dataset");
    analyze_cmd->add_option("--input", an.input, "Dataset CSV (id,arm,u1,d1,u2,d2,covariates...)")->required();
    analyze_cmd->add_option("--adjust", an.adjust, "Comma-separated covariate columns or 'none' (default: all non-core columns)");
    analyze_cmd->add_option("--alpha", an.alpha, "Confidence level is 1 - alpha")->check(CLI::Range(1e-12, 1.0 - 1e-12));
    analyze_cmd->add_option("--sided", an.sided, "Reported p-value: one or two")->check(CLI::IsMember({"one", "two"}));
    analyze_cmd->add_option("--bootstrap", an.bootstrap, "Stratified bootstrap replicates (0 = off, else >= 100)");
    analyze_cmd->add_option("--seed", an.seed, "Bootstrap seed");
    analyze_cmd->add_option("--workers", an.workers, "Worker threads (0 = WINODDS_WORKERS or all cores)");
    analyze_cmd->add_option("--out", an.out, "Output file (default stdout)");
    analyze_cmd->add_option("--format", an.format, "json or table")->check(CLI::IsMember({"json", "table"}));

    SimulateArgs sim;
    auto* simulate_cmd = app.add_subcommand("simulate", "Draw one synthetic trial and write it as CSV");
    simulate_cmd->add_option("--n", sim.n, "Number of subjects")->check(CLI::Range(std::size_t{4}, std::size_t{100000000}));
    simulate_cmd->add_option("--scenario", sim.scenario, "Covariate weight scenario A, B or C");
    simulate_cmd->add_option("--effect", sim.effect, "Treatment coefficient on the log time scale");
    simulate_cmd->add_option("--seed", sim.seed, "Master seed");
    simulate_cmd->add_flag("--null-flip", sim.null_flip, "Re-randomise treatment after outcome generation");
    simulate_cmd->add_option("--flip-mode", sim.flip_mode, "redraw or permute");
    simulate_cmd->add_option("--event-fraction", sim.event_fraction, "Fraction of subjects with an observed event");
    simulate_cmd->add_option("--scale", sim.scale, "Time scale");
    simulate_cmd->add_option("--out", sim.out, "Output file (default stdout)");

    PowerArgs pw;
    auto* power_cmd = app.add_subcommand("power", "Monte-Carlo rejection rates over adjustment prefixes");
    power_cmd->add_option("--n", pw.n, "Subjects per trial")->check(CLI::Range(std::size_t{4}, std::size_t{100000000}));
    power_cmd->add_option("--scenario", pw.scenario, "Covariate weight scenario A, B or C");
    power_cmd->add_option("--reps", pw.reps, "Replicates")->check(CLI::PositiveNumber);
    power_cmd->add_option("--alpha", pw.alpha, "One-sided significance level");
    power_cmd->add_option("--effect", pw.effect, "Treatment coefficient on the log time scale");
    power_cmd->add_option("--adjust-prefixes", pw.prefixes, "Prefix sizes, e.g. 0..10 or 1,5");
    power_cmd->add_flag("--null-flip", pw.null_flip, "Simulate under the null by re-randomising treatment");
    power_cmd->add_option("--flip-mode", pw.flip_mode, "redraw or permute");
    power_cmd->add_option("--seed", pw.seed, "Master seed");
    power_cmd->add_option("--workers", pw.workers, "Worker threads (0 = WINODDS_WORKERS or all cores)");
    power_cmd->add_option("--out", pw.out, "Output file (default stdout)");

    IncidenceArgs inc;
    auto* incidence_cmd = app.add_subcommand("incidence", "Observed cumulative incidence curves as CSV");
    incidence_cmd->add_option("--input", inc.input, "Dataset CSV")->required();
    incidence_cmd->add_option("--points", inc.points, "Number of grid points")->check(CLI::Range(std::size_t{2}, std::size_t{1000000}));
    incidence_cmd->add_option("--out", inc.out, "Output file (default stdout)");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n" << app.help();
        return kExitUsage;
    }

    try {
        if (analyze_cmd->parsed()) return do_analyze(an, out, err);
        if (simulate_cmd->parsed()) return do_simulate(sim, out);
        if (power_cmd->parsed()) return do_power(pw, out, err);
        if (incidence_cmd->parsed()) return do_incidence(inc, out);
    } catch (const CLI::ValidationError& e) {
        err << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const FitError& e) {
        err << "fit error: " << e.what() << "\n";
        return kExitFit;
    } catch (const InferenceError& e) {
        err << "inference error: " << e.what() << "\n";
        return kExitFit;
    } catch (const StudyAbort& e) {
        err << "study aborted: " << e.what() << "\n";
        return kExitStudyAbort;
    } catch (const std::invalid_argument& e) {
        err << "usage error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitUsage;
}

}  // namespace winodds
