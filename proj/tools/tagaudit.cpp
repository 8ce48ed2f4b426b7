// tagaudit: extract facts from a source subset, build the unsafety
// propagation graph, partition it into audit units, and audit safety-tag
// annotations.

#include "tagaudit/report.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

namespace {

using namespace tagaudit;

int write_output(const std::string& text, const std::string& out_path) {
    if (out_path.empty()) {
        std::cout << text;
        return 0;
    }
    std::ofstream out(out_path, std::ios::binary);
    if (!out.good()) {
        std::cerr << "error: cannot write '" << out_path << "'\n";
        return 2;
    }
    out << text;
    return 0;
}

report::OutputFormat parse_format(const std::string& name) {
    if (name == "json") return report::OutputFormat::Json;
    if (name == "dot") return report::OutputFormat::Dot;
    return report::OutputFormat::Text;
}

void print_diagnostics(const report::Report& r) {
    for (const auto& d : r.diagnostics) {
        const char* sev =
            d.severity == extract::ExtractionDiagnostic::Severity::Error ? "error" : "warning";
        std::cerr << sev << " " << d.line << ":" << d.col << ": " << d.message << "\n";
    }
}

struct CommonArgs {
    std::string src;
    std::string facts;
    std::vector<std::string> tagdbs;
    std::string registry;
    std::string format = "text";
    std::vector<std::string> disabled;
    std::string fail_on = "low";
    std::string out;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool with_rules) {
    cmd->add_option("--src", args.src, "Directory of .rs sources to extract");
    cmd->add_option("--facts", args.facts, "Facts JSON file");
    cmd->add_option("--tagdb", args.tagdbs, "Extra tag database file (repeatable, later wins)");
    cmd->add_option("--registry", args.registry, "Tag registry file extending the builtin");
    cmd->add_option("--format", args.format, "Output format: text|json|dot")
        ->check(CLI::IsMember({"text", "json", "dot"}));
    cmd->add_option("-o,--out", args.out, "Write output to a file instead of stdout");
    if (with_rules) {
        cmd->add_option("--disable", args.disabled, "Disable a rule id (repeatable)");
        cmd->add_option("--fail-on", args.fail_on, "Severity threshold for exit code 1")
            ->check(CLI::IsMember({"low", "medium", "high"}));
    }
}

report::RunConfig to_config(const CommonArgs& args) {
    report::RunConfig config;
    if (!args.src.empty()) config.src_dir = args.src;
    if (!args.facts.empty()) config.facts_file = args.facts;
    config.tagdb_paths = args.tagdbs;
    if (!args.registry.empty()) config.registry_path = args.registry;
    config.format = parse_format(args.format);
    config.disabled_rules.insert(args.disabled.begin(), args.disabled.end());
    if (args.fail_on == "medium")
        config.fail_on = audit::Severity::Medium;
    else if (args.fail_on == "high")
        config.fail_on = audit::Severity::High;
    return config;
}

int cmd_check(const CommonArgs& args) {
    auto result = report::run(to_config(args));
    print_diagnostics(result.report);
    if (result.exit_code == 2) {
        std::cerr << "error: " << result.error << "\n";
        return 2;
    }
    int rc = write_output(report::render(result.report, parse_format(args.format)), args.out);
    return rc != 0 ? rc : result.exit_code;
}

int cmd_units(const CommonArgs& args, bool emit_graph) {
    auto result = report::run(to_config(args));
    print_diagnostics(result.report);
    if (result.exit_code == 2) {
        std::cerr << "error: " << result.error << "\n";
        return 2;
    }
    report::OutputFormat fmt =
        emit_graph ? report::OutputFormat::Dot : parse_format(args.format);
    return write_output(report::render_units(result.report, fmt), args.out);
}

int cmd_extract(const CommonArgs& args) {
    if (args.src.empty()) {
        std::cerr << "error: extract requires --src\n";
        return 2;
    }
    report::RunConfig config = to_config(args);
    auto result = report::run(config);
    print_diagnostics(result.report);
    if (result.exit_code == 2) {
        std::cerr << "error: " << result.error << "\n";
        return 2;
    }
    // Re-extract to serialize: the pipeline report does not keep raw facts.
    namespace fs = std::filesystem;
    std::vector<extract::SourceUnit> sources;
    for (const auto& entry : fs::recursive_directory_iterator(args.src)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".rs") continue;
        std::ifstream in(entry.path(), std::ios::binary);
        std::ostringstream text;
        text << in.rdbuf();
        sources.push_back({fs::relative(entry.path(), args.src).string(), text.str()});
    }
    auto extraction = extract::extract(sources, fs::path(args.src).filename().string());
    return write_output(facts::to_json(extraction.facts), args.out);
}

int cmd_lint(const std::vector<std::string>& exprs, const std::string& file,
             const std::string& format) {
    std::vector<std::string> inputs = exprs;
    if (!file.empty()) {
        std::ifstream in(file);
        if (!in.good()) {
            std::cerr << "error: cannot read '" << file << "'\n";
            return 2;
        }
        std::string line;
        while (std::getline(in, line))
            if (!line.empty()) inputs.push_back(line);
    }
    if (inputs.empty()) {
        std::string line;
        while (std::getline(std::cin, line))
            if (!line.empty()) inputs.push_back(line);
    }

    const auto& reg = sp::TagRegistry::builtin();
    bool any_error = false;
    nlohmann::json doc = nlohmann::json::array();
    for (const auto& input : inputs) {
        try {
            for (const auto& e : sp::parse_sp_list(input)) {
                auto diags = sp::lint_sp(e, reg);
                for (const auto& d : diags) {
                    bool is_error = d.severity == sp::SpDiagnostic::Severity::Error;
                    any_error = any_error || is_error;
                    if (format == "json") {
                        doc.push_back({{"input", sp::print(e)},
                                       {"severity", is_error ? "error" : "warning"},
                                       {"message", d.message}});
                    } else {
                        std::cout << (is_error ? "error" : "warning") << ": " << sp::print(e)
                                  << ": " << d.message << "\n";
                    }
                }
            }
        } catch (const SyntaxError& e) {
            any_error = true;
            if (format == "json") {
                doc.push_back(
                    {{"input", input}, {"severity", "error"}, {"message", e.what()}});
            } else {
                std::cout << "error: " << input << ": " << e.what() << "\n";
            }
        }
    }
    if (format == "json") std::cout << doc.dump(2) << "\n";
    return any_error ? 1 : 0;
}

int cmd_explain(const std::string& rule_id) {
    if (auto rule = audit::rule_from_name(rule_id)) {
        std::cout << audit::rule_doc(*rule);
        return 0;
    }
    std::cerr << "error: unknown rule '" << rule_id << "'. Known rules:\n";
    for (audit::Rule r : audit::all_rules()) std::cerr << "  " << audit::rule_name(r) << "\n";
    return 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Safety-tag auditor for unsafe APIs"};
    app.require_subcommand(1);

    CommonArgs check_args;
    CLI::App* check = app.add_subcommand("check", "Run the full audit pipeline");
    add_common(check, check_args, /*with_rules=*/true);

    CommonArgs units_args;
    bool emit_graph = false;
    CLI::App* units = app.add_subcommand("units", "Emit audit units (or the graph)");
    add_common(units, units_args, /*with_rules=*/false);
    units->add_flag("--emit-graph", emit_graph, "Emit the propagation graph as DOT");

    CommonArgs extract_args;
    CLI::App* extract_cmd = app.add_subcommand("extract", "Extract facts JSON from sources");
    add_common(extract_cmd, extract_args, /*with_rules=*/false);

    std::vector<std::string> lint_exprs;
    std::string lint_file;
    std::string lint_format = "text";
    CLI::App* lint = app.add_subcommand("lint", "Lint safety-property strings");
    lint->add_option("expr", lint_exprs, "Safety-property strings");
    lint->add_option("--file", lint_file, "Read one safety-property list per line");
    lint->add_option("--format", lint_format, "Output format: text|json")
        ->check(CLI::IsMember({"text", "json"}));

    std::string rule_id;
    CLI::App* explain = app.add_subcommand("explain", "Describe an audit or inference rule");
    explain->add_option("rule", rule_id, "Rule id, e.g. infer.raw2own")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (check->parsed()) return cmd_check(check_args);
        if (units->parsed()) return cmd_units(units_args, emit_graph);
        if (extract_cmd->parsed()) return cmd_extract(extract_args);
        if (lint->parsed()) return cmd_lint(lint_exprs, lint_file, lint_format);
        if (explain->parsed()) return cmd_explain(rule_id);
    } catch (const tagaudit::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
