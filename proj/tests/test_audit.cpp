#include "tagaudit/audit.hpp"

#include "tagaudit/extract.hpp"
#include "tagaudit/report.hpp"

#include "oracles.hpp"

#include "doctest.h"

using namespace test_support;

#include <array>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>

using namespace tagaudit;
using namespace tagaudit::audit;
using namespace tagaudit::facts;
using sp::TagKey;
using sp::TagSet;

namespace {

const sp::TagRegistry& reg() { return sp::TagRegistry::builtin(); }
const tagdb::TagDatabase& db() { return tagdb::TagDatabase::builtin(); }

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

LibraryFacts fixture_facts(const std::string& rel) {
    std::string path = std::string(TAGAUDIT_FIXTURE_DIR) + "/" + rel + "/lib.rs";
    auto r = extract::extract({{path, read_file(path)}}, rel);
    REQUIRE(r.ok());
    return r.facts;
}

struct Pipeline {
    upg::Upg graph;
    std::vector<units::AuditUnit> units;
    std::vector<Finding> findings;
};

Pipeline run_pipeline(const LibraryFacts& f) {
    Pipeline p;
    p.graph = upg::build_upg(f, db());
    for (const auto& comp : upg::components(p.graph)) {
        auto merged = units::merge_units(units::split_basic_units(comp, f));
        std::move(merged.begin(), merged.end(), std::back_inserter(p.units));
    }
    p.findings = audit::audit(f, p.graph, p.units, db(), reg());
    return p;
}

std::vector<Finding> findings_for(const Pipeline& p, const std::string& subject) {
    std::vector<Finding> out;
    for (const auto& f : p.findings)
        if (f.subject == subject) out.push_back(f);
    return out;
}

LibraryFacts extract_inline(const char* src) {
    auto r = extract::extract({{"lib.rs", src}}, "inline");
    REQUIRE(r.ok());
    return r.facts;
}

TagSet tags(std::initializer_list<const char*> names) {
    TagSet out;
    for (const char* n : names) out.insert(sp::tag_key(n));
    return out;
}

}  // namespace

TEST_CASE("bottom rule") {
    FunctionFact f;
    f.id = "danger";
    f.name = "danger";
    f.safety = Safety::Unsafe;
    f.visibility = Visibility::Public;

    SUBCASE("public unsafe with no tags") {
        auto finding = check_bottom(f, {}, {});
        REQUIRE(finding.has_value());
        CHECK(finding->kind == FindingKind::EmptyAnnotation);
        CHECK(finding->rule == Rule::Infer1);
    }
    SUBCASE("private unsafe is exempt") {
        f.visibility = Visibility::Private;
        CHECK_FALSE(check_bottom(f, {}, {}).has_value());
    }
    SUBCASE("declared tags satisfy the rule") {
        CHECK_FALSE(check_bottom(f, tags({"Init"}), {}).has_value());
    }
    SUBCASE("safe functions are exempt") {
        f.safety = Safety::Safe;
        CHECK_FALSE(check_bottom(f, {}, {}).has_value());
    }
}

TEST_CASE("signature inference rules") {
    SUBCASE("raw pointer to ownership") {
        FunctionFact f;
        f.id = "Box::from_raw";
        f.name = "from_raw";
        f.safety = Safety::Unsafe;
        f.params = {{"raw", ParamClass::RawPointer}};
        f.ret = RetClass{RetKind::OwnedObject, std::nullopt};
        Suggestion s = infer_signature_tags(f);
        CHECK(s.tags == tags({"Align", "Allocated", "InBound", "Alias", "Owning"}));
        CHECK(s.provenance.at(sp::tag_key("Owning")) == Rule::Infer2);
    }
    SUBCASE("str-module unchecked") {
        FunctionFact f;
        f.id = "str::from_utf8_unchecked_mut";
        f.name = "from_utf8_unchecked_mut";
        f.safety = Safety::Unsafe;
        f.module_class = ModuleClass::Str;
        Suggestion s = infer_signature_tags(f);
        CHECK(s.tags == tags({"ValidString"}));
        CHECK(s.provenance.at(sp::tag_key("ValidString")) == Rule::Infer5);
    }
    SUBCASE("safe functions yield nothing") {
        FunctionFact f;
        f.id = "fine";
        f.name = "fine";
        f.params = {{"p", ParamClass::RawPointer}};
        f.ret = RetClass{RetKind::OwnedObject, std::nullopt};
        CHECK(infer_signature_tags(f).tags.empty());
    }
    SUBCASE("allocator rule") {
        FunctionFact f;
        f.id = "Box::from_raw_in";
        f.name = "from_raw_in";
        f.safety = Safety::Unsafe;
        f.params = {{"raw", ParamClass::RawPointer}, {"alloc", ParamClass::Allocator}};
        f.ret = RetClass{RetKind::Unit, std::nullopt};
        CHECK(infer_signature_tags(f).tags == tags({"Allocator"}));
    }
    SUBCASE("assume_init rule") {
        FunctionFact f;
        f.id = "MaybeUninit::assume_init";
        f.name = "assume_init";
        f.safety = Safety::Unsafe;
        CHECK(infer_signature_tags(f).tags == tags({"Init"}));
    }
}

TEST_CASE("delegation over an audit unit") {
    const char* src =
        "/// SAFETY: Align(p, T)\n"
        "pub unsafe fn a(p: *mut u8) {}\n"
        "/// SAFETY: Owning(p)\n"
        "pub unsafe fn b(p: *mut u8) {}\n"
        "/// SAFETY: Init(p, T, 1)\n"
        "pub unsafe fn caller(p: *mut u8) { unsafe { a(p); b(p); } }\n";
    LibraryFacts f = extract_inline(src);
    Pipeline p = run_pipeline(f);

    SUBCASE("union of two callee sets") {
        const units::AuditUnit* unit = nullptr;
        for (const auto& u : p.units)
            if (u.caller && u.caller->func == "caller") unit = &u;
        REQUIRE(unit != nullptr);
        TagLookup lookup(f, db(), reg());
        CHECK(infer_delegated_tags(*unit, lookup) == tags({"Align", "Owning"}));
    }
    SUBCASE("missing tags cite the delegation rule") {
        auto fs = findings_for(p, "caller");
        REQUIRE(fs.size() == 1);
        CHECK(fs[0].kind == FindingKind::MissingTag);
        CHECK(fs[0].rule == Rule::Infer7);
        CHECK(fs[0].tags == tags({"Align", "Owning"}));
        CHECK_FALSE(fs[0].unit_id.empty());
    }
}

TEST_CASE("tag-less callee yields an unresolved finding") {
    const char* src = "pub fn caller(p: *mut u8) { unsafe { mystery::op(p); } }\n";
    Pipeline p = run_pipeline(extract_inline(src));
    auto fs = findings_for(p, "mystery::op");
    REQUIRE(fs.size() == 1);
    CHECK(fs[0].kind == FindingKind::UnresolvedExternal);
    CHECK(fs[0].rule == Rule::Infer7);
}

TEST_CASE("unchecked-option elimination") {
    const char* base =
        "mod slice {\n"
        "    pub unsafe fn get_unchecked(i: usize) -> u8 { 0 }\n"
        "}\n";
    SUBCASE("option-returning caller waives the unchecked tags") {
        std::string src = std::string(base) +
                          "pub unsafe fn lookup(i: usize) -> Option<u8> { unsafe { "
                          "slice::get_unchecked(i) } }\n";
        Pipeline p = run_pipeline(extract_inline(src.c_str()));
        for (const auto& f : findings_for(p, "lookup")) {
            CHECK(f.kind != FindingKind::MissingTag);
        }
    }
    SUBCASE("without the Option return the tag is demanded") {
        std::string src = std::string(base) +
                          "pub unsafe fn lookup(i: usize) -> u8 { unsafe { "
                          "slice::get_unchecked(i) } }\n";
        Pipeline p = run_pipeline(extract_inline(src.c_str()));
        auto fs = findings_for(p, "lookup");
        bool missing_inbound = false;
        for (const auto& f : fs)
            if (f.kind == FindingKind::MissingTag && f.tags == tags({"InBound"})) {
                missing_inbound = true;
                CHECK(f.rule == Rule::Infer7);
            }
        CHECK(missing_inbound);
    }
    SUBCASE("declared waived tags are superfluous") {
        std::string src = std::string(base) +
                          "/// SAFETY: InBound(self, T, i)\n"
                          "pub unsafe fn lookup(i: usize) -> Option<u8> { unsafe { "
                          "slice::get_unchecked(i) } }\n";
        Pipeline p = run_pipeline(extract_inline(src.c_str()));
        auto fs = findings_for(p, "lookup");
        REQUIRE(fs.size() == 1);
        CHECK(fs[0].kind == FindingKind::SuperfluousTag);
        CHECK(fs[0].rule == Rule::Infer8);
        CHECK(fs[0].tags == tags({"InBound"}));
    }
}

TEST_CASE("nonnull elimination") {
    SUBCASE("nonnull parameter discharges a callee's !Null") {
        const char* src =
            "/// SAFETY: Owning(p)\n"
            "pub unsafe fn wrap(p: NonNull<u8>) { unsafe { NonNull::new_unchecked(x) } }\n";
        Pipeline p = run_pipeline(extract_inline(src));
        CHECK(findings_for(p, "wrap").empty());
    }
    SUBCASE("raw-pointer caller still owes !Null") {
        const char* src =
            "/// SAFETY: Owning(p)\n"
            "pub unsafe fn wrap(p: *mut u8) { unsafe { NonNull::new_unchecked(x) } }\n";
        Pipeline p = run_pipeline(extract_inline(src));
        auto fs = findings_for(p, "wrap");
        REQUIRE(fs.size() == 1);
        CHECK(fs[0].kind == FindingKind::MissingTag);
        CHECK(fs[0].tags == tags({"!Null"}));
    }
    SUBCASE("declared !Null against a NonNull parameter is superfluous") {
        const char* src =
            "/// SAFETY: !Null(p)\n"
            "pub unsafe fn wrap(p: NonNull<u8>) { unsafe { NonNull::new_unchecked(x) } }\n";
        Pipeline p = run_pipeline(extract_inline(src));
        auto fs = findings_for(p, "wrap");
        REQUIRE(fs.size() == 1);
        CHECK(fs[0].kind == FindingKind::SuperfluousTag);
        CHECK(fs[0].rule == Rule::Infer9);
        CHECK(fs[0].tags == tags({"!Null"}));
    }
}

TEST_CASE("constructor consistency") {
    SUBCASE("public-field struct with an unsafe constructor is unsound") {
        Pipeline p = run_pipeline(fixture_facts("pin_like"));
        auto fs = findings_for(p, "PinLike");
        REQUIRE(fs.size() == 1);
        CHECK(fs[0].kind == FindingKind::LiteralConstructorSoundness);
        CHECK(fs[0].rule == Rule::Infer10);
        CHECK(fs[0].tags == tags({"Pinned", "Trait"}));
        CHECK(fs[0].severity == Severity::High);
    }
    SUBCASE("literal enum constructor is credited for unchecked requirements") {
        Pipeline p = run_pipeline(fixture_facts("ascii_char"));
        CHECK(p.findings.empty());
    }
    SUBCASE("single constructor never fires") {
        const char* src =
            "pub struct One { ptr: *mut u8 }\n"
            "impl One {\n"
            "    /// SAFETY: Owning(p)\n"
            "    pub unsafe fn from_ptr(p: *mut u8) -> One { One { ptr: p } }\n"
            "}\n";
        Pipeline p = run_pipeline(extract_inline(src));
        CHECK(findings_for(p, "One").empty());
    }
    SUBCASE("raw-pointer requirements are waived for non-raw siblings") {
        const char* src =
            "pub struct BoxLike { ptr: *mut u8 }\n"
            "impl BoxLike {\n"
            "    /// SAFETY: Align(raw, T), Allocated(raw, T, 1, any), InBound(raw, T, 1), "
            "Alias(raw, 0), Owning(raw), Allocator(raw, Global)\n"
            "    pub unsafe fn from_raw(raw: *mut u8) -> BoxLike { BoxLike { ptr: raw } }\n"
            "    pub fn new(x: u8) -> BoxLike { BoxLike { ptr: q } }\n"
            "}\n";
        Pipeline p = run_pipeline(extract_inline(src));
        CHECK(findings_for(p, "BoxLike").empty());
    }
    SUBCASE("non-raw requirements still bind non-raw siblings") {
        const char* src =
            "pub struct Sock { fd: u8 }\n"
            "impl Sock {\n"
            "    /// SAFETY: Opened(fd)\n"
            "    pub unsafe fn from_fd(fd: u8) -> Sock { Sock { fd: fd } }\n"
            "    pub fn new(x: u8) -> Sock { Sock { fd: x } }\n"
            "}\n";
        Pipeline p = run_pipeline(extract_inline(src));
        auto fs = findings_for(p, "Sock");
        REQUIRE(fs.size() == 1);
        CHECK(fs[0].kind == FindingKind::ConstructorInconsistency);
        CHECK(fs[0].tags == tags({"Opened"}));
    }
    SUBCASE("explicit verifies entries cover requirements") {
        const char* src =
            "pub struct Sock { fd: u8 }\n"
            "impl Sock {\n"
            "    /// SAFETY: Opened(fd)\n"
            "    pub unsafe fn from_fd(fd: u8) -> Sock { Sock { fd: fd } }\n"
            "    /// VERIFIES: Opened(fd)\n"
            "    pub fn new(x: u8) -> Sock { Sock { fd: x } }\n"
            "}\n";
        Pipeline p = run_pipeline(extract_inline(src));
        CHECK(findings_for(p, "Sock").empty());
    }
}

TEST_CASE("fully consistent sample library leaves only the soundness finding") {
    Pipeline p = run_pipeline(fixture_facts("two_structs"));
    REQUIRE(p.findings.size() == 1);
    CHECK(p.findings[0].kind == FindingKind::LiteralConstructorSoundness);
    CHECK(p.findings[0].subject == "St2");
}

TEST_CASE("adding a declared tag never creates a new missing-tag finding") {
    const char* src =
        "pub struct CString { ptr: *mut u8 }\n"
        "impl CString {\n"
        "    /// SAFETY: ValidCStr(ptr, any)\n"
        "    pub unsafe fn from_raw(ptr: *mut u8) -> CString { CString { ptr: ptr } }\n"
        "}\n";
    LibraryFacts base = extract_inline(src);
    Pipeline before = run_pipeline(base);

    auto missing_sets = [](const Pipeline& p, const std::string& subject) {
        std::set<std::string> out;
        for (const auto& f : p.findings)
            if (f.kind == FindingKind::MissingTag && f.subject == subject)
                for (const auto& k : f.tags) out.insert(k.str());
        return out;
    };
    std::set<std::string> before_missing = missing_sets(before, "CString::from_raw");
    CHECK(before_missing ==
          std::set<std::string>{"Alias", "Align", "Allocated", "InBound", "Owning"});

    for (const char* added : {"Align(ptr, T)", "Owning(ptr)", "Alias(ptr, 0)"}) {
        LibraryFacts richer = base;
        richer.tag_annotations["CString::from_raw"].push_back(added);
        Pipeline after = run_pipeline(richer);
        std::set<std::string> after_missing = missing_sets(after, "CString::from_raw");
        for (const auto& tag : after_missing) CHECK(before_missing.count(tag) == 1);
        CHECK(after_missing.size() < before_missing.size());
        before_missing = after_missing;
        base = richer;
    }
}

TEST_CASE("audit output is deterministic") {
    LibraryFacts f = fixture_facts("std/box_from_raw");
    Pipeline a = run_pipeline(f);
    Pipeline b = run_pipeline(f);
    CHECK(a.findings == b.findings);
}

TEST_CASE("missing-tag findings always carry re-firable evidence and tags") {
    for (const char* rel : {"std/box_from_raw", "std/box_from_raw_in", "std/cstring",
                            "std/strmod", "std/arc"}) {
        Pipeline p = run_pipeline(fixture_facts(rel));
        for (const auto& f : p.findings) {
            if (f.kind != FindingKind::MissingTag && f.kind != FindingKind::SuperfluousTag)
                continue;
            CAPTURE(rel);
            CAPTURE(f.subject);
            CHECK_FALSE(f.tags.empty());
            CHECK_FALSE(f.evidence.empty());
        }
    }
}

// ---------------------------------------------------------------------------
// Brute-force rule-premise oracle over generated libraries
// ---------------------------------------------------------------------------

TEST_CASE("auditor oracle: pipeline findings equal direct rule-premise enumeration") {
    std::mt19937 rng(0x0D17);
    int checked = 0;
    for (int round = 0; round < 300; ++round) {
        LibraryFacts f;
        try {
            f = random_audit_library(rng);
        } catch (const Error&) {
            continue;  // rare duplicate-id collisions in generated input
        }
        ++checked;
        Pipeline p = run_pipeline(f);
        std::set<Sig> expected = oracle_findings(f, db(), reg());
        std::set<Sig> actual;
        for (const auto& finding : p.findings) actual.insert(sig_of(finding));
        CAPTURE(round);
        if (actual != expected) {
            for (const auto& s : actual)
                if (!expected.count(s))
                    MESSAGE("pipeline-only: " << s[0] << " " << s[1] << " " << s[2] << " "
                                              << s[3]);
            for (const auto& s : expected)
                if (!actual.count(s))
                    MESSAGE("oracle-only:   " << s[0] << " " << s[1] << " " << s[2] << " "
                                              << s[3]);
        }
        REQUIRE(actual == expected);
    }
    CHECK(checked >= 250);
}
