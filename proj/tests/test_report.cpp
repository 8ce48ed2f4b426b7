#include "tagaudit/report.hpp"

#include "doctest.h"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

using namespace tagaudit;
using namespace tagaudit::report;

namespace {

RunConfig fixture_config(const std::string& rel) {
    RunConfig config;
    config.src_dir = std::string(TAGAUDIT_FIXTURE_DIR) + "/" + rel;
    return config;
}

}  // namespace

TEST_CASE("full pipeline over the sample library") {
    auto result = run(fixture_config("two_structs"));
    REQUIRE(result.exit_code != 2);
    const Report& r = result.report;
    CHECK(r.library == "two_structs");
    CHECK(r.basic_units == 8);
    CHECK(r.audit_units == 6);
    CHECK(result.exit_code == 1);  // the soundness finding is at/above "low"
    REQUIRE(r.findings.size() == 1);
    CHECK(r.findings[0].subject == "St2");

    SUBCASE("histogram covers every refined pattern, zeros included") {
        CHECK(r.pattern_histogram.size() == units::all_pattern_names().size());
        int total = 0;
        for (const auto& [name, count] : r.pattern_histogram) total += count;
        CHECK(total == r.basic_units);
        CHECK(r.pattern_histogram.at("f'_u->m_u") == 0);
        CHECK(r.pattern_histogram.at("f_u") == 1);
        CHECK(r.pattern_histogram.at("m_u") == 2);
    }

    SUBCASE("counts match finding kinds") {
        CHECK(r.counts.at("literal_constructor_soundness") == 1);
        CHECK(r.counts.at("missing_tag") == 0);
    }
}

TEST_CASE("rendering is deterministic byte for byte") {
    auto a = run(fixture_config("two_structs"));
    auto b = run(fixture_config("two_structs"));
    for (OutputFormat fmt : {OutputFormat::Text, OutputFormat::Json, OutputFormat::Dot}) {
        CHECK(render(a.report, fmt) == render(b.report, fmt));
        CHECK_FALSE(render(a.report, fmt).empty());
    }
    CHECK(render_units(a.report, OutputFormat::Json) == render_units(b.report, OutputFormat::Json));
}

TEST_CASE("json report carries the stable finding schema") {
    auto result = run(fixture_config("std/box_from_raw"));
    nlohmann::json doc = nlohmann::json::parse(render(result.report, OutputFormat::Json));
    REQUIRE(doc.contains("findings"));
    REQUIRE(!doc["findings"].empty());
    for (const auto& f : doc["findings"]) {
        CHECK(f.contains("kind"));
        CHECK(f.contains("subject"));
        CHECK(f.contains("tags"));
        CHECK(f.contains("rule"));
        CHECK(f.contains("evidence"));
        CHECK(f.contains("severity"));
    }
    CHECK(doc["basic_units"].is_number());
    CHECK(doc["pattern_histogram"].size() == units::all_pattern_names().size());

    bool has_raw2own = false;
    for (const auto& f : doc["findings"])
        if (f["rule"] == "infer.raw2own") has_raw2own = true;
    CHECK(has_raw2own);

    // The text renderer prints the stable rule ids too.
    CHECK(render(result.report, OutputFormat::Text).find("infer.raw2own") != std::string::npos);
}

TEST_CASE("disabling a rule removes exactly that rule's findings") {
    RunConfig base = fixture_config("std/box_from_raw");
    auto all = run(base);

    RunConfig without = base;
    without.disabled_rules.insert("infer.raw2own");
    auto filtered = run(without);

    std::set<std::string> all_rules_seen;
    for (const auto& f : all.report.findings)
        all_rules_seen.insert(std::string(audit::rule_name(f.rule)));
    REQUIRE(all_rules_seen.count("infer.raw2own") == 1);

    for (const auto& f : filtered.report.findings)
        CHECK(audit::rule_name(f.rule) != std::string("infer.raw2own"));
    std::size_t removed = 0;
    for (const auto& f : all.report.findings)
        if (audit::rule_name(f.rule) == std::string("infer.raw2own")) ++removed;
    CHECK(filtered.report.findings.size() + removed == all.report.findings.size());
}

TEST_CASE("exit codes") {
    SUBCASE("clean library exits zero") {
        auto result = run(fixture_config("empty_lib"));
        CHECK(result.exit_code == 0);
        CHECK(result.report.findings.empty());
    }
    SUBCASE("findings below the threshold exit zero") {
        RunConfig config = fixture_config("std/ptrmod");  // only low-severity findings
        config.fail_on = audit::Severity::Medium;
        auto result = run(config);
        CHECK_FALSE(result.report.findings.empty());
        CHECK(result.exit_code == 0);
        config.fail_on = audit::Severity::Low;
        CHECK(run(config).exit_code == 1);
    }
    SUBCASE("missing input exits two") {
        RunConfig config;
        auto result = run(config);
        CHECK(result.exit_code == 2);
        CHECK_FALSE(result.error.empty());
    }
    SUBCASE("parse errors exit two") {
        RunConfig config;
        config.src_dir = std::string(TAGAUDIT_FIXTURE_DIR) + "/broken";
        auto result = run(config);
        CHECK(result.exit_code == 2);
    }
}

TEST_CASE("facts-file input matches source input") {
    auto from_src = run(fixture_config("two_structs"));

    // Serialize the extracted facts, then run from the facts file.
    std::string facts_path = std::string(TAGAUDIT_FIXTURE_DIR) + "/two_structs_facts.json";
    {
        auto extraction = extract::extract(
            {{std::string(TAGAUDIT_FIXTURE_DIR) + "/two_structs/lib.rs",
              [] {
                  std::ifstream in(std::string(TAGAUDIT_FIXTURE_DIR) + "/two_structs/lib.rs");
                  std::ostringstream s;
                  s << in.rdbuf();
                  return s.str();
              }()}},
            "two_structs");
        REQUIRE(extraction.ok());
        std::ofstream out(facts_path);
        out << facts::to_json(extraction.facts);
    }
    RunConfig config;
    config.facts_file = facts_path;
    auto from_facts = run(config);
    CHECK(from_facts.exit_code == from_src.exit_code);
    CHECK(render(from_facts.report, OutputFormat::Json) ==
          render(from_src.report, OutputFormat::Json));
    std::remove(facts_path.c_str());
}
