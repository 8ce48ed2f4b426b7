#pragma once

// Pipeline orchestration (extract -> graph -> units -> audit) with
// deterministic text/JSON rendering and CI-friendly exit codes.

#include "tagaudit/audit.hpp"
#include "tagaudit/extract.hpp"
#include "tagaudit/units.hpp"
#include "tagaudit/upg.hpp"

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace tagaudit::report {

enum class OutputFormat { Text, Json, Dot };

struct RunConfig {
    std::optional<std::string> src_dir;
    std::optional<std::string> facts_file;
    std::vector<std::string> tagdb_paths;  // merged over the builtin, later wins
    std::optional<std::string> registry_path;
    OutputFormat format = OutputFormat::Text;
    std::set<std::string> disabled_rules;  // stable rule ids
    audit::Severity fail_on = audit::Severity::Low;
};

struct Report {
    std::string library;
    std::map<std::string, int> counts;  // finding kind -> count
    std::vector<audit::Finding> findings;
    int basic_units = 0;
    int audit_units = 0;
    std::map<std::string, int> pattern_histogram;  // every refined pattern, zeros kept
    std::vector<units::AuditUnit> units;
    upg::Upg graph;
    std::vector<extract::ExtractionDiagnostic> diagnostics;
};

/// Exit codes: 0 no findings at/above the threshold, 1 findings, 2 input or
/// parse error (diagnostics on the report).
struct RunResult {
    Report report;
    int exit_code = 0;
    std::string error;  // set when exit_code == 2
};

RunResult run(const RunConfig& config);

/// Canonical rendering: JSON with sorted keys, stable text line order, or the
/// propagation graph in DOT form.
std::string render(const Report& report, OutputFormat format);

/// Audit-unit listing for the `units` subcommand (text or JSON).
std::string render_units(const Report& report, OutputFormat format);

}  // namespace tagaudit::report
