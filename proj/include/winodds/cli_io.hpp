#pragma once

#include "winodds/data_model.hpp"
#include "winodds/estimators.hpp"
#include "winodds/sim_engine.hpp"

#include "json.hpp"

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace winodds {

/// Stable process exit codes of the command-line tool.
enum ExitCode : int {
    kExitOk = 0,
    kExitData = 2,
    kExitFit = 3,
    kExitStudyAbort = 4,
    kExitUsage = 64,
};

/// Which CSV columns become covariates.
///
/// A covariate column whose cells are all non-numeric is categorical: it
/// is expanded into reference-coded 0/1 indicators named "col=level", one
/// per non-reference level, the reference being the lexicographically
/// first level. Declared levels restrict the allowed values.
struct CsvSchema {
    /// Covariate columns to load; empty means every non-core column
    /// unless `core_only` is set.
    std::vector<std::string> covariates;
    bool core_only = false;
    std::map<std::string, std::vector<std::string>> categorical_levels;
};

/// Parses a header-driven CSV with columns id, arm, u1, d1, u2, d2 plus
/// covariates and validates it. Throws DataError naming line and column.
Dataset parse_csv(std::istream& in, const CsvSchema& schema = {}, const std::string& source = "<input>");
Dataset load_csv(const std::string& path, const CsvSchema& schema = {});

/// Writes id,arm,u1,d1,u2,d2,<covariates> with round-trip precision.
std::string dataset_csv(const Dataset& ds);

nlohmann::json report_to_json(const AnalysisReport& report);
AnalysisReport report_from_json(const nlohmann::json& j);
/// Aligned text rendering of the unadjusted / adjusted comparison.
std::string report_table(const AnalysisReport& report);

std::string incidence_csv(const std::vector<IncidencePoint>& curve);

/// Parses prefix lists such as "0..10", "1,5" or "0..3,7".
std::vector<std::size_t> parse_prefix_list(const std::string& spec);

/// Entry point of the `winodds` tool. `args` excludes the program name.
/// The report or table goes to `out`; diagnostics and progress to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace winodds
