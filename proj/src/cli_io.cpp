#include "winodds/cli_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace winodds {

namespace {

using nlohmann::json;

const std::vector<std::string> kCoreColumns{"id", "arm", "u1", "d1", "u2", "d2"};

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

// RFC-4180 style splitting of one line (quotes may wrap separators).
std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t k = 0; k < line.size(); ++k) {
        const char c = line[k];
        if (quoted) {
            if (c == '"' && k + 1 < line.size() && line[k + 1] == '"') {
                cur += '"';
                ++k;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    fields.push_back(trim(cur));
    return fields;
}

bool is_missing(const std::string& cell) { return cell.empty() || cell == "NA" || cell == "NaN" || cell == "nan"; }

bool parse_number(const std::string& cell, double& value) {
    if (cell.empty()) return false;
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    if (*first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, value);
    return ec == std::errc() && ptr == last && std::isfinite(value);
}

std::string at(const std::string& source, std::size_t line, const std::string& column) {
    return source + ": line " + std::to_string(line) + ", column '" + column + "'";
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fmt15(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.15g", v);
    return buf;
}

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }
std::optional<double> opt_from(const json& j) {
    if (j.is_null()) return std::nullopt;
    return j.get<double>();
}

json mpi_json(const MpiResult& m) {
    return {{"nu_hat", m.nu_hat}, {"variance", m.variance}, {"method", to_string(m.method)},
            {"n", m.n},           {"n0", m.n0},             {"n1", m.n1},
            {"degenerate", m.degenerate}, {"delta_hat", opt(m.delta_hat)}, {"odds", opt(m.odds)}};
}

MpiResult mpi_from(const json& j) {
    MpiResult m;
    m.nu_hat = j.at("nu_hat").get<double>();
    m.variance = j.at("variance").get<double>();
    m.method = j.at("method").get<std::string>() == "direct" ? Method::Direct : Method::Adjusted;
    m.n = j.at("n").get<std::size_t>();
    m.n0 = j.at("n0").get<std::size_t>();
    m.n1 = j.at("n1").get<std::size_t>();
    m.degenerate = j.at("degenerate").get<bool>();
    m.delta_hat = opt_from(j.at("delta_hat"));
    m.odds = opt_from(j.at("odds"));
    return m;
}

json odds_json(const WinOddsResult& r) {
    return {{"theta_hat", r.theta_hat},
            {"ci_low", r.ci_low},
            {"ci_high", r.ci_high},
            {"nu_ci_low", r.nu_ci_low},
            {"nu_ci_high", r.nu_ci_high},
            {"z", r.z},
            {"p_two_sided", r.p_two_sided},
            {"p_one_sided", r.p_one_sided},
            {"log_theta_variance", r.log_theta_variance},
            {"alpha", r.alpha},
            {"delta_hat", opt(r.delta_hat)},
            {"clamped", r.clamped}};
}

WinOddsResult odds_from(const json& j) {
    WinOddsResult r;
    r.theta_hat = j.at("theta_hat").get<double>();
    r.ci_low = j.at("ci_low").get<double>();
    r.ci_high = j.at("ci_high").get<double>();
    r.nu_ci_low = j.at("nu_ci_low").get<double>();
    r.nu_ci_high = j.at("nu_ci_high").get<double>();
    r.z = j.at("z").get<double>();
    r.p_two_sided = j.at("p_two_sided").get<double>();
    r.p_one_sided = j.at("p_one_sided").get<double>();
    r.log_theta_variance = j.at("log_theta_variance").get<double>();
    r.alpha = j.at("alpha").get<double>();
    r.delta_hat = opt_from(j.at("delta_hat"));
    r.clamped = j.at("clamped").get<bool>();
    return r;
}

}  // namespace

Dataset parse_csv(std::istream& in, const CsvSchema& schema, const std::string& source) {
    std::string line;
    std::size_t lineno = 0;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++lineno;
        if (!trim(line).empty()) {
            header = split_csv_line(line);
            break;
        }
    }
    if (header.empty()) throw DataError(source + ": missing header row");
    if (!header.front().empty() && header.front().rfind("\xEF\xBB\xBF", 0) == 0) header.front().erase(0, 3);

    auto column_index = [&](const std::string& name) -> std::size_t {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw DataError(source + ": missing column '" + name + "'");
        return static_cast<std::size_t>(it - header.begin());
    };
    std::vector<std::size_t> core;
    for (const auto& c : kCoreColumns) core.push_back(column_index(c));

    std::vector<std::string> cov_names = schema.covariates;
    if (cov_names.empty() && !schema.core_only)
        for (const auto& h : header)
            if (std::find(kCoreColumns.begin(), kCoreColumns.end(), h) == kCoreColumns.end()) cov_names.push_back(h);
    std::vector<std::size_t> cov_index;
    for (const auto& c : cov_names) cov_index.push_back(column_index(c));

    struct Row {
        std::size_t line;
        std::vector<std::string> cells;
    };
    std::vector<Row> rows;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        auto cells = split_csv_line(line);
        if (cells.size() != header.size())
            throw DataError(source + ": line " + std::to_string(lineno) + " has " + std::to_string(cells.size()) +
                            " fields, header has " + std::to_string(header.size()));
        rows.push_back({lineno, std::move(cells)});
    }

    // covariate column types: numeric, or categorical when no cell is a number
    struct CovColumn {
        std::string name;
        std::size_t index;
        bool categorical = false;
        std::vector<std::string> levels;  // sorted; levels[0] is the reference
    };
    std::vector<CovColumn> covs;
    std::vector<std::string> expanded_names;
    for (std::size_t c = 0; c < cov_names.size(); ++c) {
        CovColumn col{cov_names[c], cov_index[c], false, {}};
        const auto declared = schema.categorical_levels.find(col.name);
        bool any_numeric = false;
        std::set<std::string> seen;
        for (const auto& r : rows) {
            const auto& cell = r.cells[col.index];
            if (is_missing(cell)) throw DataError(at(source, r.line, col.name) + ": missing covariate value");
            double v;
            if (parse_number(cell, v)) any_numeric = true;
            seen.insert(cell);
        }
        col.categorical = declared != schema.categorical_levels.end() || (!rows.empty() && !any_numeric);
        if (col.categorical) {
            if (declared != schema.categorical_levels.end()) {
                col.levels = declared->second;
                std::sort(col.levels.begin(), col.levels.end());
                for (const auto& r : rows) {
                    const auto& cell = r.cells[col.index];
                    if (!std::binary_search(col.levels.begin(), col.levels.end(), cell))
                        throw DataError(at(source, r.line, col.name) + ": unknown category '" + cell + "'");
                }
            } else {
                col.levels.assign(seen.begin(), seen.end());
            }
            for (std::size_t l = 1; l < col.levels.size(); ++l) expanded_names.push_back(col.name + "=" + col.levels[l]);
        } else {
            expanded_names.push_back(col.name);
        }
        covs.push_back(std::move(col));
    }

    std::vector<SubjectRecord> records;
    records.reserve(rows.size());
    for (const auto& r : rows) {
        SubjectRecord rec;
        rec.id = r.cells[core[0]];
        if (rec.id.empty()) throw DataError(at(source, r.line, "id") + ": empty id");
        auto number = [&](std::size_t k) {
            const auto& cell = r.cells[core[k]];
            double v;
            if (is_missing(cell)) throw DataError(at(source, r.line, kCoreColumns[k]) + ": missing value");
            if (!parse_number(cell, v))
                throw DataError(at(source, r.line, kCoreColumns[k]) + ": non-numeric value '" + cell + "'");
            return v;
        };
        auto binary = [&](std::size_t k) {
            const double v = number(k);
            if (v != 0.0 && v != 1.0)
                throw DataError(at(source, r.line, kCoreColumns[k]) + ": expected 0 or 1, got '" + r.cells[core[k]] +
                                "'");
            return static_cast<int>(v);
        };
        rec.arm = binary(1);
        rec.u1 = number(2);
        rec.d1 = binary(3);
        rec.u2 = number(4);
        rec.d2 = binary(5);
        for (const auto& col : covs) {
            const auto& cell = r.cells[col.index];
            if (col.categorical) {
                for (std::size_t l = 1; l < col.levels.size(); ++l) rec.covariates.push_back(cell == col.levels[l] ? 1.0 : 0.0);
            } else {
                double v;
                if (!parse_number(cell, v))
                    throw DataError(at(source, r.line, col.name) + ": non-numeric value '" + cell + "'");
                rec.covariates.push_back(v);
            }
        }
        records.push_back(std::move(rec));
    }
    try {
        return validate_dataset(std::move(records), std::move(expanded_names));
    } catch (const DataError& e) {
        throw DataError(source + ": " + e.what());
    }
}

Dataset load_csv(const std::string& path, const CsvSchema& schema) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "'");
    return parse_csv(in, schema, path);
}

std::string dataset_csv(const Dataset& ds) {
    std::ostringstream out;
    out << "id,arm,u1,d1,u2,d2";
    for (const auto& name : ds.covariate_names()) out << ',' << name;
    out << '\n';
    for (const auto& r : ds.records()) {
        out << r.id << ',' << r.arm << ',' << fmt_double(r.u1) << ',' << r.d1 << ',' << fmt_double(r.u2) << ','
            << r.d2;
        for (double x : r.covariates) out << ',' << fmt_double(x);
        out << '\n';
    }
    return out.str();
}

json report_to_json(const AnalysisReport& rep) {
    const auto& s = rep.summary;
    json j;
    j["summary"] = {{"n", s.n},
                    {"n0", s.n0},
                    {"n1", s.n1},
                    {"fatal0", s.fatal0},
                    {"fatal1", s.fatal1},
                    {"nonfatal0", s.nonfatal0},
                    {"nonfatal1", s.nonfatal1},
                    {"composite0", s.composite0},
                    {"composite1", s.composite1}};
    j["adjusted_for"] = rep.adjusted_for;
    j["tally"] = {{"wins", rep.wins}, {"losses", rep.losses}, {"ties", rep.ties}};
    j["pim"] = {{"tau_a", rep.fit.tau_a},
                {"tau_x", rep.fit.tau_x},
                {"iterations", rep.fit.iterations},
                {"score_norm", rep.fit.score_norm},
                {"converged", rep.fit.converged}};
    j["unadjusted"] = {{"mpi", mpi_json(rep.unadjusted)}, {"win_odds", odds_json(rep.unadjusted_inference)}};
    j["adjusted"] = {{"mpi", mpi_json(rep.adjusted)}, {"win_odds", odds_json(rep.adjusted_inference)}};
    j["identity"] = {{"nu_standardized", rep.nu_standardized},
                     {"nu_augmented", rep.nu_augmented},
                     {"residual", rep.identity_residual}};
    j["alpha"] = rep.alpha;
    j["sided"] = to_string(rep.sided);
    j["bootstrap"] = {{"replicates", rep.bootstrap_replicates},
                      {"unadjusted_variance", opt(rep.bootstrap_unadjusted_variance)},
                      {"adjusted_variance", opt(rep.bootstrap_adjusted_variance)}};
    const auto& t = rep.timings;
    j["timings_s"] = {{"tally", t.tally_s},
                      {"fit", t.fit_s},
                      {"estimate", t.estimate_s},
                      {"variance", t.variance_s},
                      {"bootstrap", t.bootstrap_s}};
    return j;
}

AnalysisReport report_from_json(const json& j) {
    AnalysisReport rep;
    const auto& s = j.at("summary");
    rep.summary.n = s.at("n").get<std::size_t>();
    rep.summary.n0 = s.at("n0").get<std::size_t>();
    rep.summary.n1 = s.at("n1").get<std::size_t>();
    rep.summary.fatal0 = s.at("fatal0").get<std::size_t>();
    rep.summary.fatal1 = s.at("fatal1").get<std::size_t>();
    rep.summary.nonfatal0 = s.at("nonfatal0").get<std::size_t>();
    rep.summary.nonfatal1 = s.at("nonfatal1").get<std::size_t>();
    rep.summary.composite0 = s.at("composite0").get<std::size_t>();
    rep.summary.composite1 = s.at("composite1").get<std::size_t>();
    rep.adjusted_for = j.at("adjusted_for").get<std::vector<std::string>>();
    rep.wins = j.at("tally").at("wins").get<std::uint64_t>();
    rep.losses = j.at("tally").at("losses").get<std::uint64_t>();
    rep.ties = j.at("tally").at("ties").get<std::uint64_t>();
    const auto& pim = j.at("pim");
    rep.fit.tau_a = pim.at("tau_a").get<double>();
    rep.fit.tau_x = pim.at("tau_x").get<std::vector<double>>();
    rep.fit.iterations = pim.at("iterations").get<int>();
    rep.fit.score_norm = pim.at("score_norm").get<double>();
    rep.fit.converged = pim.at("converged").get<bool>();
    rep.unadjusted = mpi_from(j.at("unadjusted").at("mpi"));
    rep.unadjusted_inference = odds_from(j.at("unadjusted").at("win_odds"));
    rep.adjusted = mpi_from(j.at("adjusted").at("mpi"));
    rep.adjusted_inference = odds_from(j.at("adjusted").at("win_odds"));
    rep.nu_standardized = j.at("identity").at("nu_standardized").get<double>();
    rep.nu_augmented = j.at("identity").at("nu_augmented").get<double>();
    rep.identity_residual = j.at("identity").at("residual").get<double>();
    rep.alpha = j.at("alpha").get<double>();
    rep.sided = j.at("sided").get<std::string>() == "one" ? Sided::One : Sided::Two;
    const auto& boot = j.at("bootstrap");
    rep.bootstrap_replicates = boot.at("replicates").get<std::size_t>();
    rep.bootstrap_unadjusted_variance = opt_from(boot.at("unadjusted_variance"));
    rep.bootstrap_adjusted_variance = opt_from(boot.at("adjusted_variance"));
    const auto& t = j.at("timings_s");
    rep.timings.tally_s = t.at("tally").get<double>();
    rep.timings.fit_s = t.at("fit").get<double>();
    rep.timings.estimate_s = t.at("estimate").get<double>();
    rep.timings.variance_s = t.at("variance").get<double>();
    rep.timings.bootstrap_s = t.at("bootstrap").get<double>();
    return rep;
}

std::string report_table(const AnalysisReport& rep) {
    std::ostringstream out;
    const auto& s = rep.summary;
    out << "Subjects: n=" << s.n << " (control " << s.n0 << ", treated " << s.n1 << ")\n";
    out << "Events (control / treated): fatal " << s.fatal0 << " / " << s.fatal1 << ", nonfatal " << s.nonfatal0
        << " / " << s.nonfatal1 << ", composite " << s.composite0 << " / " << s.composite1 << "\n";
    out << "Comparisons: wins " << rep.wins << ", losses " << rep.losses << ", ties " << rep.ties << "\n";
    out << "Adjusted for: ";
    if (rep.adjusted_for.empty()) out << "(none)";
    for (std::size_t k = 0; k < rep.adjusted_for.size(); ++k) out << (k ? ", " : "") << rep.adjusted_for[k];
    out << "\n";
    out << "PIM: tau_a=" << fmt15(rep.fit.tau_a);
    if (!rep.fit.tau_x.empty()) {
        out << " tau_x=(";
        for (std::size_t k = 0; k < rep.fit.tau_x.size(); ++k) out << (k ? ", " : "") << fmt15(rep.fit.tau_x[k]);
        out << ")";
    }
    out << " iterations=" << rep.fit.iterations << " score_norm=" << fmt15(rep.fit.score_norm) << "\n";
    out << "Identity |nu_stand - nu_aug| = " << fmt15(rep.identity_residual) << "\n\n";

    const int pct = static_cast<int>(std::lround(100.0 * (1.0 - rep.alpha)));
    auto ci = [](const WinOddsResult& r) { return "(" + fmt15(r.ci_low) + ", " + fmt15(r.ci_high) + ")"; };
    auto pval = [&](const WinOddsResult& r) { return rep.sided == Sided::One ? r.p_one_sided : r.p_two_sided; };
    out << std::left << std::setw(22) << "Statistic" << std::setw(44) << "unadjusted" << "adjusted\n";
    out << std::setw(22) << "nu" << std::setw(44) << fmt15(rep.unadjusted.nu_hat) << fmt15(rep.adjusted.nu_hat) << "\n";
    out << std::setw(22) << "SE(nu)" << std::setw(44) << fmt15(std::sqrt(rep.unadjusted.variance))
        << fmt15(std::sqrt(rep.adjusted.variance)) << "\n";
    out << std::setw(22) << "WO" << std::setw(44) << fmt15(rep.unadjusted_inference.theta_hat)
        << fmt15(rep.adjusted_inference.theta_hat) << "\n";
    out << std::setw(22) << (std::to_string(pct) + "% CI") << std::setw(44) << ci(rep.unadjusted_inference)
        << ci(rep.adjusted_inference) << "\n";
    out << std::setw(22) << (rep.sided == Sided::One ? "p-value (one-sided)" : "p-value (two-sided)")
        << std::setw(44) << fmt15(pval(rep.unadjusted_inference)) << fmt15(pval(rep.adjusted_inference)) << "\n";
    if (rep.bootstrap_replicates > 0) {
        out << std::setw(22) << "bootstrap var(nu)" << std::setw(44) << fmt15(rep.bootstrap_unadjusted_variance.value_or(0))
            << fmt15(rep.bootstrap_adjusted_variance.value_or(0)) << "\n";
    }
    return out.str();
}

std::string incidence_csv(const std::vector<IncidencePoint>& curve) {
    std::ostringstream out;
    out << "time,composite,fatal,nonfatal\n";
    for (const auto& p : curve)
        out << fmt_double(p.time) << ',' << fmt_double(p.composite) << ',' << fmt_double(p.fatal) << ','
            << fmt_double(p.nonfatal) << '\n';
    return out.str();
}

std::vector<std::size_t> parse_prefix_list(const std::string& spec) {
    std::vector<std::size_t> out;
    std::stringstream ss(spec);
    std::string item;
    auto to_size = [&](const std::string& s) {
        std::size_t v = 0;
        const auto t = trim(s);
        const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
        if (ec != std::errc() || ptr != t.data() + t.size() || t.empty())
            throw std::invalid_argument("bad prefix list '" + spec + "'");
        return v;
    };
    while (std::getline(ss, item, ',')) {
        const auto dots = item.find("..");
        if (dots == std::string::npos) {
            out.push_back(to_size(item));
        } else {
            const std::size_t lo = to_size(item.substr(0, dots)), hi = to_size(item.substr(dots + 2));
            if (hi < lo) throw std::invalid_argument("bad prefix range '" + item + "'");
            for (std::size_t k = lo; k <= hi; ++k) out.push_back(k);
        }
    }
    if (out.empty()) throw std::invalid_argument("empty prefix list");
    return out;
}

}  // namespace winodds
