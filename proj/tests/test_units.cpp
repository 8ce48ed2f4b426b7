#include "tagaudit/units.hpp"

#include "tagaudit/extract.hpp"

#include "oracles.hpp"

#include "doctest.h"

using namespace test_support;

#include <fstream>
#include <random>
#include <sstream>

using namespace tagaudit;
using namespace tagaudit::facts;
using namespace tagaudit::units;
using upg::EdgeKind;
using upg::NodeKind;
using upg::Upg;
using upg::UpgNode;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

LibraryFacts sample_facts() {
    std::string path = std::string(TAGAUDIT_FIXTURE_DIR) + "/two_structs/lib.rs";
    auto r = extract::extract({{path, read_file(path)}}, "two_structs");
    REQUIRE(r.ok());
    return r.facts;
}

struct Split {
    std::vector<BasicUnit> basic;
    std::vector<AuditUnit> merged;
};

Split split_all(const LibraryFacts& f) {
    Split out;
    Upg g = upg::build_upg(f, tagdb::TagDatabase::builtin());
    for (const Upg& comp : upg::components(g)) {
        auto basic = split_basic_units(comp, f);
        auto merged = merge_units(basic);
        std::move(basic.begin(), basic.end(), std::back_inserter(out.basic));
        std::move(merged.begin(), merged.end(), std::back_inserter(out.merged));
    }
    return out;
}

int count_nodes(const BasicUnit& u) {
    if (!u.caller) return 1;
    if (!u.ctor) return 2;
    return 3;
}

const AuditUnit* unit_with_caller(const std::vector<AuditUnit>& units, const FunctionId& caller) {
    for (const auto& u : units)
        if (u.caller && u.caller->func == caller) return &u;
    return nullptr;
}

}  // namespace

TEST_CASE("two-struct sample: split and merge counts") {
    LibraryFacts f = sample_facts();
    Split s = split_all(f);

    int one = 0, two = 0, three = 0;
    for (const auto& u : s.basic) {
        int n = count_nodes(u);
        one += n == 1;
        two += n == 2;
        three += n == 3;
    }
    CHECK(one == 3);
    CHECK(two == 2);
    CHECK(three == 3);
    CHECK(s.merged.size() == 6);

    SUBCASE("origin singletons") {
        int origins = 0;
        for (const auto& u : s.merged) origins += u.handling == Handling::Origin;
        CHECK(origins == 3);
    }

    SUBCASE("the function caller merges its two callees") {
        const AuditUnit* f2 = unit_with_caller(s.merged, "f2");
        REQUIRE(f2 != nullptr);
        REQUIRE(f2->callees.size() == 2);
        CHECK(f2->callees[0].func == "St2::from");
        CHECK(f2->callees[1].func == "St2::set_len");
        CHECK(f2->ctors.empty());
        CHECK(f2->handling == Handling::Encapsulation);
        CHECK(f2->formula.render() == "RS(St2::from) + RS(St2::set_len) <= VS(f2)");
    }

    SUBCASE("the dyn-method caller merges across its constructors") {
        const AuditUnit* get2 = unit_with_caller(s.merged, "St2::get");
        REQUIRE(get2 != nullptr);
        REQUIRE(get2->callees.size() == 1);
        CHECK(get2->callees[0].func == "ptr::offset");
        REQUIRE(get2->ctors.size() == 2);
        CHECK(get2->ctors[0].func == "St2::from");  // unsafe ctor first
        CHECK(get2->ctors[1].func == "St2::literal");
        CHECK(get2->handling == Handling::Delegation);
        CHECK(get2->formula.render() ==
              "RS(ptr::offset) <= ((RS(St2::from) + VS(St2::from)) & VS(St2::literal)) + "
              "VS(St2::get) - KS(M)");
        CHECK(get2->kill_context == std::set<FunctionId>{"St2::set_len"});
    }

    SUBCASE("single-constructor triple keeps the flat form") {
        const AuditUnit* get1 = unit_with_caller(s.merged, "St1::get");
        REQUIRE(get1 != nullptr);
        CHECK(get1->formula.render() ==
              "RS(slice::from_raw_parts) <= VS(St1::from) + RS(St1::get) + VS(St1::get) - KS(M)");
        CHECK(get1->handling == Handling::Delegation);
    }

    SUBCASE("origin formulas are presence requirements") {
        bool found = false;
        for (const auto& u : s.merged)
            if (u.handling == Handling::Origin && u.callees[0].func == "St2::from") {
                CHECK(u.formula.render() == "RS(St2::from) != {}");
                found = true;
            }
        CHECK(found);
    }
}

TEST_CASE("empty graph splits to nothing") {
    CHECK(split_basic_units(Upg{}, LibraryFacts{}).empty());
    CHECK(merge_units({}).empty());
}

TEST_CASE("pattern classification is total and ignores the callee's constructors") {
    UpgNode callee_fn{"x::f", NodeKind::F, true, false};
    UpgNode callee_m{"X::m", NodeKind::M, true, false};

    SUBCASE("origins") {
        BasicUnit fn_origin{{}, callee_fn, std::nullopt, std::nullopt, {}};
        CHECK(classify_pattern(fn_origin).name() == "f_u");
        CHECK(classify_pattern(fn_origin).handling == Handling::Origin);
        UpgNode ctor{"X::new", NodeKind::C, true, false};
        BasicUnit ctor_origin{{}, ctor, std::nullopt, std::nullopt, {}};
        CHECK(classify_pattern(ctor_origin).name() == "f_u");  // constructors count as functions
        BasicUnit m_origin{{}, callee_m, std::nullopt, std::nullopt, {}};
        CHECK(classify_pattern(m_origin).name() == "m_u");
    }

    SUBCASE("two-node refinements") {
        for (bool caller_unsafe : {false, true}) {
            for (bool method_callee : {false, true}) {
                UpgNode caller{"c", NodeKind::F, caller_unsafe, false};
                BasicUnit u{{}, method_callee ? callee_m : callee_fn, caller, std::nullopt, {}};
                PatternKind p = classify_pattern(u);
                std::string expected = std::string("f'_") + (caller_unsafe ? "u" : "s") + "->" +
                                       (method_callee ? "m_u" : "f_u");
                CHECK(p.name() == expected);
                CHECK(p.handling ==
                      (caller_unsafe ? Handling::Delegation : Handling::Encapsulation));
            }
        }
    }

    SUBCASE("sixteen method-caller scenarios refine to eight patterns") {
        std::set<std::string> seen;
        for (bool ctor_unsafe : {false, true})
            for (bool caller_unsafe : {false, true})
                for (bool method_callee : {false, true})
                    for (bool callee_ctor_unsafe : {false, true}) {
                        // The callee-side constructor safety must be invisible.
                        UpgNode callee = method_callee ? callee_m : callee_fn;
                        callee.func = callee_ctor_unsafe ? callee.func + "_uctor" : callee.func;
                        UpgNode caller{"X::m2", NodeKind::M, caller_unsafe, false};
                        UpgNode ctor{"X::new", NodeKind::C, ctor_unsafe, false};
                        BasicUnit u{{}, callee, caller, ctor, {}};
                        PatternKind p = classify_pattern(u);
                        CHECK(p.shape == PatternKind::Shape::MethodCaller);
                        std::string expected = std::string("(c'_") + (ctor_unsafe ? "u" : "s") +
                                               "=>M')m'_" + (caller_unsafe ? "u" : "s") + "->" +
                                               (method_callee ? "m_u" : "f_u");
                        CHECK(p.name() == expected);
                        CHECK(p.handling == ((!ctor_unsafe && !caller_unsafe)
                                                 ? Handling::Encapsulation
                                                 : Handling::Delegation));
                        seen.insert(p.name());
                    }
        CHECK(seen.size() == 8);
    }

    SUBCASE("all refined pattern names are enumerable") {
        CHECK(all_pattern_names().size() == 14);
    }
}

TEST_CASE("merge is the identity when nothing is shared") {
    LibraryFacts f = load_facts(R"({
      "facts_version": 1,
      "functions": [
        {"id": "a", "kind": "function", "safety": "safe", "ret": {"class": "unit"},
         "unsafe_callsites": [{"callee": "ext::one"}]},
        {"id": "b", "kind": "function", "safety": "safe", "ret": {"class": "unit"},
         "unsafe_callsites": [{"callee": "ext::two"}]}
      ],
      "types": []
    })");
    Split s = split_all(f);
    CHECK(s.basic.size() == 2);
    CHECK(s.merged.size() == 2);
}

TEST_CASE("one caller with three unsafe callees becomes one audit unit") {
    LibraryFacts f = load_facts(R"({
      "facts_version": 1,
      "functions": [
        {"id": "hub", "kind": "function", "safety": "safe", "ret": {"class": "unit"},
         "unsafe_callsites": [{"callee": "ext::one"}, {"callee": "ext::two"},
                               {"callee": "ext::three"}]}
      ],
      "types": []
    })");
    Split s = split_all(f);
    CHECK(s.basic.size() == 3);
    REQUIRE(s.merged.size() == 1);
    CHECK(s.merged[0].callees.size() == 3);
    CHECK(s.merged[0].formula.render() ==
          "RS(ext::one) + RS(ext::three) + RS(ext::two) <= VS(hub)");
}

// ---------------------------------------------------------------------------
// Brute-force partition oracle over generated libraries
// ---------------------------------------------------------------------------

TEST_CASE("partition oracle: split/merge counts match brute-force enumeration") {
    std::mt19937 rng(0xACCE55);
    std::set<std::string> pool = {"ext::a", "ext::b", "ext::c"};
    for (int round = 0; round < 250; ++round) {
        LibraryFacts f = random_partition_library(rng);
        Expected expected = enumerate_units(f, pool);
        Split s = split_all(f);

        int one = 0, two = 0, three = 0;
        for (const auto& u : s.basic) {
            int n = count_nodes(u);
            one += n == 1;
            two += n == 2;
            three += n == 3;
        }
        CAPTURE(round);
        CHECK(one == expected.one);
        CHECK(two == expected.two);
        CHECK(three == expected.three);
        CHECK(static_cast<int>(s.merged.size()) == expected.audit);

        // Every basic unit lands in exactly one audit unit.
        for (const auto& b : s.basic) {
            int homes = 0;
            for (const auto& a : s.merged) {
                if (b.caller) {
                    if (a.caller && a.caller->func == b.caller->func) {
                        bool has_callee = std::any_of(
                            a.callees.begin(), a.callees.end(),
                            [&](const UpgNode& n) { return n.func == b.callee.func; });
                        bool has_ctor =
                            !b.ctor || std::any_of(a.ctors.begin(), a.ctors.end(),
                                                   [&](const UpgNode& n) {
                                                       return n.func == b.ctor->func;
                                                   });
                        if (has_callee && has_ctor) ++homes;
                    }
                } else if (a.handling == Handling::Origin &&
                           a.callees[0].func == b.callee.func) {
                    ++homes;
                }
            }
            CHECK(homes == 1);
        }

        // Merging preserves the set of covered (caller, callee) pairs.
        std::set<std::pair<FunctionId, FunctionId>> before, after;
        for (const auto& b : s.basic)
            if (b.caller) before.insert({b.caller->func, b.callee.func});
        for (const auto& a : s.merged)
            if (a.caller)
                for (const auto& c : a.callees) after.insert({a.caller->func, c.func});
        CHECK(before == after);
    }
}

TEST_CASE("k constructors and j single-callee methods give k*j triples and j audit units") {
    for (int k = 1; k <= 4; ++k) {
        for (int j = 1; j <= 4; ++j) {
            LibraryFacts f;
            f.name = "kxj";
            TypeFact t;
            t.id = "T";
            t.name = "T";
            t.fields.push_back({"x", Visibility::Private});
            f.types.push_back(t);
            for (int c = 0; c < k; ++c) {
                FunctionFact fn;
                fn.id = "T::new" + std::to_string(c);
                fn.name = "new" + std::to_string(c);
                fn.kind = FnKind::Constructor;
                fn.owner_type = "T";
                fn.safety = Safety::Safe;
                fn.ret = RetClass{RetKind::OwnedObject, fn.owner_type};
                f.functions.push_back(fn);
            }
            for (int m = 0; m < j; ++m) {
                FunctionFact fn;
                fn.id = "T::m" + std::to_string(m);
                fn.name = "m" + std::to_string(m);
                fn.kind = FnKind::DynMethod;
                fn.owner_type = "T";
                fn.safety = Safety::Safe;
                fn.ret = RetClass{RetKind::Unit, std::nullopt};
                fn.unsafe_callsites.push_back(CallSiteFact::direct("ext::one"));
                f.functions.push_back(fn);
            }
            finalize(f);
            Split s = split_all(f);
            int three = 0;
            for (const auto& u : s.basic) three += count_nodes(u) == 3;
            CHECK(three == k * j);
            CHECK(static_cast<int>(s.merged.size()) == j);  // no unsafe locals, no origins
        }
    }
}
