#include "tagaudit/report.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace tagaudit::report {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in.good()) throw Error("cannot read '" + path.string() + "'");
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

std::vector<extract::SourceUnit> collect_sources(const fs::path& dir) {
    if (!fs::exists(dir)) throw Error("source directory '" + dir.string() + "' does not exist");
    std::vector<extract::SourceUnit> units;
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".rs") continue;
        units.push_back({fs::relative(entry.path(), dir).string(), read_file(entry.path())});
    }
    std::sort(units.begin(), units.end(),
              [](const extract::SourceUnit& a, const extract::SourceUnit& b) {
                  return a.path < b.path;
              });
    if (units.empty()) throw Error("no .rs files under '" + dir.string() + "'");
    return units;
}

json finding_to_json(const audit::Finding& f) {
    json j;
    j["kind"] = audit::to_string(f.kind);
    j["subject"] = f.subject;
    j["tags"] = f.tags.names();
    j["rule"] = audit::rule_name(f.rule);
    j["evidence"] = f.evidence;
    if (!f.unit_id.empty()) j["unit"] = f.unit_id;
    j["severity"] = audit::to_string(f.severity);
    return j;
}

json unit_to_json(const units::AuditUnit& u) {
    json j;
    j["id"] = u.id;
    j["handling"] = std::string(units::to_string(u.handling));
    j["patterns"] = u.pattern_names;
    json callees = json::array();
    for (const auto& c : u.callees) callees.push_back(c.func);
    j["callees"] = callees;
    if (u.caller) j["caller"] = u.caller->func;
    json ctors = json::array();
    for (const auto& c : u.ctors) ctors.push_back(c.func);
    j["ctors"] = ctors;
    j["kill_context"] = std::vector<std::string>(u.kill_context.begin(), u.kill_context.end());
    j["formula"] = u.formula.render();
    return j;
}

}  // namespace

RunResult run(const RunConfig& config) {
    RunResult result;
    Report& report = result.report;
    try {
        // Registry and database.
        sp::TagRegistry registry = config.registry_path
                                       ? sp::TagRegistry::from_json(read_file(*config.registry_path))
                                       : sp::TagRegistry::builtin();
        tagdb::TagDatabase db = tagdb::TagDatabase::builtin();
        for (const auto& path : config.tagdb_paths) db.merge_json(read_file(path), registry);

        // Input facts.
        facts::LibraryFacts facts;
        if (config.src_dir) {
            auto extraction = extract::extract(collect_sources(*config.src_dir),
                                               fs::path(*config.src_dir).filename().string());
            report.diagnostics = extraction.diagnostics;
            if (!extraction.ok()) {
                result.exit_code = 2;
                result.error = "extraction failed";
                for (const auto& d : extraction.diagnostics)
                    if (d.severity == extract::ExtractionDiagnostic::Severity::Error)
                        result.error += "\n  " + std::to_string(d.line) + ":" +
                                        std::to_string(d.col) + ": " + d.message;
                return result;
            }
            facts = std::move(extraction.facts);
        } else if (config.facts_file) {
            facts = facts::load_facts(read_file(*config.facts_file));
        } else {
            throw Error("no input: provide a source directory or a facts file");
        }
        report.library = facts.name;

        // Pipeline.
        report.graph = upg::build_upg(facts, db);
        std::vector<units::BasicUnit> basic;
        for (const auto& component : upg::components(report.graph)) {
            auto split = units::split_basic_units(component, facts);
            auto merged = units::merge_units(split);
            std::move(split.begin(), split.end(), std::back_inserter(basic));
            std::move(merged.begin(), merged.end(), std::back_inserter(report.units));
        }
        report.basic_units = static_cast<int>(basic.size());
        report.audit_units = static_cast<int>(report.units.size());
        for (const auto& name : units::all_pattern_names()) report.pattern_histogram[name] = 0;
        for (const auto& u : basic) report.pattern_histogram[u.pattern.name()] += 1;

        report.findings = audit::audit(facts, report.graph, report.units, db, registry);
        if (!config.disabled_rules.empty()) {
            std::erase_if(report.findings, [&](const audit::Finding& f) {
                return config.disabled_rules.count(std::string(audit::rule_name(f.rule))) != 0;
            });
        }
        for (const auto& kindname :
             {"empty_annotation", "missing_tag", "superfluous_tag", "constructor_inconsistency",
              "literal_constructor_soundness", "unresolved_external"})
            report.counts[kindname] = 0;
        for (const auto& f : report.findings)
            report.counts[std::string(audit::to_string(f.kind))] += 1;

        bool over_threshold = std::any_of(report.findings.begin(), report.findings.end(),
                                          [&](const audit::Finding& f) {
                                              return static_cast<int>(f.severity) >=
                                                     static_cast<int>(config.fail_on);
                                          });
        result.exit_code = over_threshold ? 1 : 0;
        return result;
    } catch (const Error& e) {
        result.exit_code = 2;
        result.error = e.what();
        return result;
    }
}

std::string render(const Report& report, OutputFormat format) {
    if (format == OutputFormat::Dot) return upg::to_dot(report.graph);
    if (format == OutputFormat::Json) {
        json doc;
        doc["library"] = report.library;
        doc["counts"] = report.counts;
        doc["basic_units"] = report.basic_units;
        doc["audit_units"] = report.audit_units;
        doc["pattern_histogram"] = report.pattern_histogram;
        doc["findings"] = json::array();
        for (const auto& f : report.findings) doc["findings"].push_back(finding_to_json(f));
        doc["units"] = json::array();
        for (const auto& u : report.units) doc["units"].push_back(unit_to_json(u));
        return doc.dump(2) + "\n";
    }

    std::ostringstream out;
    out << "library: " << report.library << "\n";
    out << "basic units: " << report.basic_units << ", audit units: " << report.audit_units
        << "\n";
    out << "pattern histogram:\n";
    for (const auto& [name, count] : report.pattern_histogram)
        out << "  " << name << ": " << count << "\n";
    if (report.findings.empty()) {
        out << "no findings\n";
        return out.str();
    }
    out << "findings (" << report.findings.size() << "):\n";
    for (const auto& f : report.findings) {
        out << "  " << audit::rule_name(f.rule) << " " << f.subject << ": "
            << audit::to_string(f.kind);
        if (!f.tags.empty()) out << " " << f.tags.str();
        out << " [" << audit::to_string(f.severity) << "]";
        if (!f.evidence.empty()) out << " (" << f.evidence << ")";
        out << "\n";
    }
    return out.str();
}

std::string render_units(const Report& report, OutputFormat format) {
    if (format == OutputFormat::Dot) return upg::to_dot(report.graph);
    if (format == OutputFormat::Json) {
        json doc = json::array();
        for (const auto& u : report.units) doc.push_back(unit_to_json(u));
        return doc.dump(2) + "\n";
    }
    std::ostringstream out;
    out << "basic units: " << report.basic_units << ", audit units: " << report.audit_units
        << "\n";
    for (const auto& u : report.units) {
        out << u.id << " [" << units::to_string(u.handling) << "]";
        if (u.caller) out << " caller=" << u.caller->func;
        out << "\n    formula: " << u.formula.render() << "\n";
    }
    return out.str();
}

}  // namespace tagaudit::report
