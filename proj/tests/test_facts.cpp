#include "tagaudit/facts.hpp"

#include "doctest.h"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <random>

using namespace tagaudit;
using namespace tagaudit::facts;

namespace {

// A facts document equivalent to the two-struct sample library: St1 with
// private fields and a safe constructor, St2 fully public with an unsafe
// constructor, plus the two free functions.
const char* kSampleLibrary = R"json({
  "facts_version": 1,
  "name": "two_structs",
  "types": [
    {"id": "St1", "name": "St1", "adt_kind": "struct",
     "fields": [{"name": "ptr", "visibility": "private"},
                 {"name": "len", "visibility": "private"}]},
    {"id": "St2", "name": "St2", "adt_kind": "struct",
     "fields": [{"name": "ptr", "visibility": "public"},
                 {"name": "len", "visibility": "public"}]}
  ],
  "functions": [
    {"id": "St1::from", "path": "St1", "kind": "constructor", "safety": "safe",
     "owner_type": "St1",
     "params": [{"name": "p", "class": "raw_pointer"}, {"name": "l", "class": "integer"}],
     "ret": {"class": "owned_object", "of_type": "St1"}},
    {"id": "St1::set_len", "path": "St1", "kind": "dyn_method", "safety": "safe",
     "owner_type": "St1", "takes_mut_self": true,
     "params": [{"name": "l", "class": "integer"}], "ret": {"class": "unit"}},
    {"id": "St1::get", "path": "St1", "kind": "dyn_method", "safety": "unsafe",
     "owner_type": "St1", "ret": {"class": "reference"},
     "unsafe_callsites": [{"callee": "slice::from_raw_parts"}]},
    {"id": "St2::from", "path": "St2", "kind": "constructor", "safety": "unsafe",
     "owner_type": "St2",
     "params": [{"name": "p", "class": "raw_pointer"}, {"name": "l", "class": "integer"}],
     "ret": {"class": "owned_object", "of_type": "St2"}},
    {"id": "St2::set_len", "path": "St2", "kind": "dyn_method", "safety": "unsafe",
     "owner_type": "St2", "takes_mut_self": true,
     "params": [{"name": "l", "class": "integer"}], "ret": {"class": "unit"}},
    {"id": "St2::get", "path": "St2", "kind": "dyn_method", "safety": "safe",
     "owner_type": "St2", "params": [{"name": "x", "class": "integer"}],
     "ret": {"class": "other"},
     "unsafe_callsites": [{"callee": "ptr::offset"}, {"callee": "builtin::deref"}]},
    {"id": "f1", "kind": "function", "safety": "safe", "visibility": "private",
     "params": [{"name": "v", "class": "owned_object"}], "ret": {"class": "unit"}},
    {"id": "f2", "kind": "function", "safety": "safe", "visibility": "private",
     "ret": {"class": "unit"},
     "unsafe_callsites": [{"callee": "St2::from"}, {"callee": "St2::set_len"}]}
  ],
  "annotations": {
    "St1::get": ["Align(self.ptr, u8), Init(self.ptr, u8, self.len)"],
    "St2::from": ["Allocated(p, u8, l, any)"]
  }
})json";

LibraryFacts sample() { return load_facts(kSampleLibrary); }

}  // namespace

TEST_CASE("loading the sample library") {
    LibraryFacts f = sample();
    CHECK(f.name == "two_structs");
    CHECK(f.types.size() == 2);
    // 8 declared functions plus the synthesized literal constructor of St2.
    CHECK(f.functions.size() == 9);

    const FunctionFact* lit = f.find_function("St2::literal");
    REQUIRE(lit != nullptr);
    CHECK(lit->kind == FnKind::LiteralConstructor);
    CHECK(lit->safety == Safety::Safe);
    CHECK(lit->unsafe_callsites.empty());
    CHECK(f.find_function("St1::literal") == nullptr);

    const TypeFact* st2 = f.find_type("St2");
    REQUIRE(st2 != nullptr);
    CHECK(st2->constructors == std::vector<FunctionId>{"St2::from", "St2::literal"});
    const TypeFact* st1 = f.find_type("St1");
    REQUIRE(st1 != nullptr);
    CHECK(st1->constructors == std::vector<FunctionId>{"St1::from"});
}

TEST_CASE("empty library loads to empty collections") {
    LibraryFacts f = load_facts(R"({"facts_version": 1, "functions": [], "types": []})");
    CHECK(f.functions.empty());
    CHECK(f.types.empty());
    CHECK(f.tag_annotations.empty());
}

TEST_CASE("load errors") {
    SUBCASE("unknown callee id is a dangling reference under strict resolution") {
        std::string doc = R"({
          "facts_version": 1,
          "functions": [
            {"id": "f", "kind": "function", "safety": "safe", "ret": {"class": "unit"},
             "unsafe_callsites": [{"callee": "nobody::home"}]}
          ],
          "types": []
        })";
        LoadOptions strict;
        strict.known_externals = std::set<FunctionId>{};
        CHECK_THROWS_AS(load_facts(doc, strict), DanglingReference);
        // Lenient mode accepts the callee as an external node.
        CHECK_NOTHROW(load_facts(doc));
        // And the id resolves once the external set names it.
        strict.known_externals = std::set<FunctionId>{"nobody::home"};
        CHECK_NOTHROW(load_facts(doc, strict));
    }
    SUBCASE("duplicate function ids") {
        std::string doc = R"({
          "facts_version": 1,
          "functions": [
            {"id": "f", "kind": "function", "ret": {"class": "unit"}},
            {"id": "f", "kind": "function", "ret": {"class": "unit"}}
          ],
          "types": []
        })";
        CHECK_THROWS_AS(load_facts(doc), DuplicateId);
    }
    SUBCASE("wrong version") {
        CHECK_THROWS_AS(load_facts(R"({"facts_version": 2, "functions": [], "types": []})"),
                        SchemaError);
    }
    SUBCASE("not json") {
        CHECK_THROWS_AS(load_facts("wat"), SchemaError);
    }
    SUBCASE("method without owner") {
        std::string doc = R"({
          "facts_version": 1,
          "functions": [{"id": "m", "kind": "dyn_method", "ret": {"class": "unit"}}],
          "types": []
        })";
        CHECK_THROWS_AS(load_facts(doc), SchemaError);
    }
    SUBCASE("owner type must exist") {
        std::string doc = R"({
          "facts_version": 1,
          "functions": [{"id": "T::m", "kind": "dyn_method", "owner_type": "T",
                          "ret": {"class": "unit"}}],
          "types": []
        })";
        CHECK_THROWS_AS(load_facts(doc), DanglingReference);
    }
    SUBCASE("annotation keys must resolve") {
        std::string doc = R"json({
          "facts_version": 1, "functions": [], "types": [],
          "annotations": {"ghost": ["Align(p, T)"]}
        })json";
        CHECK_THROWS_AS(load_facts(doc), DanglingReference);
    }
    SUBCASE("constructor must return its owner") {
        std::string doc = R"({
          "facts_version": 1,
          "types": [{"id": "T", "name": "T", "fields": []}],
          "functions": [{"id": "T::new", "kind": "constructor", "owner_type": "T",
                          "ret": {"class": "unit"}}]
        })";
        CHECK_THROWS_AS(load_facts(doc), SchemaError);
    }
}

TEST_CASE("literal constructibility") {
    TypeFact all_public{"S", "S", AdtKind::Struct,
                        {{"a", Visibility::Public}, {"b", Visibility::Public}}, {}};
    TypeFact mixed{"S", "S", AdtKind::Struct,
                   {{"a", Visibility::Public}, {"b", Visibility::Private}}, {}};
    TypeFact none{"S", "S", AdtKind::Struct, {}, {}};
    CHECK(literal_constructible(all_public));
    CHECK_FALSE(literal_constructible(mixed));
    // Zero fields: vacuously constructible.
    CHECK(literal_constructible(none));
}

TEST_CASE("static method returning its owner is normalized to a constructor") {
    std::string doc = R"({
      "facts_version": 1,
      "types": [{"id": "T", "name": "T", "fields": [{"name": "x", "visibility": "private"}]}],
      "functions": [{"id": "T::make", "kind": "static_method", "owner_type": "T",
                      "ret": {"class": "owned_object", "of_type": "T"}}]
    })";
    LibraryFacts f = load_facts(doc);
    CHECK(f.find_function("T::make")->kind == FnKind::Constructor);
    CHECK(f.find_type("T")->constructors == std::vector<FunctionId>{"T::make"});
}

TEST_CASE("api set") {
    LibraryFacts f = sample();
    SUBCASE("unsafe-or-mutable methods of each struct") {
        CHECK(api_set_of("St1", f) == std::set<FunctionId>{"St1::set_len", "St1::get"});
        CHECK(api_set_of("St2", f) == std::set<FunctionId>{"St2::set_len", "St2::get"});
    }
    SUBCASE("unknown type") {
        CHECK_THROWS_AS(api_set_of("St9", f), UnknownType);
    }
    SUBCASE("type with only safe, non-mut, call-free methods") {
        std::string doc = R"({
          "facts_version": 1,
          "types": [{"id": "Quiet", "name": "Quiet",
                      "fields": [{"name": "x", "visibility": "private"}]}],
          "functions": [{"id": "Quiet::peek", "kind": "dyn_method", "owner_type": "Quiet",
                          "safety": "safe", "ret": {"class": "other"}}]
        })";
        CHECK(api_set_of("Quiet", load_facts(doc)).empty());
    }
    SUBCASE("stable under permutation of the function list") {
        nlohmann::json doc = nlohmann::json::parse(kSampleLibrary);
        auto fns = doc["functions"];
        std::mt19937 rng(7);
        for (int round = 0; round < 10; ++round) {
            std::shuffle(fns.begin(), fns.end(), rng);
            doc["functions"] = fns;
            LibraryFacts shuffled = load_facts(doc.dump());
            CHECK(api_set_of("St1", shuffled) == api_set_of("St1", f));
            CHECK(api_set_of("St2", shuffled) == api_set_of("St2", f));
        }
    }
}

TEST_CASE("loading is deterministic and serialization round-trips") {
    LibraryFacts a = sample();
    LibraryFacts b = sample();
    CHECK(a == b);

    std::string serialized = to_json(a);
    LibraryFacts c = load_facts(serialized);
    CHECK(c == a);
    CHECK(to_json(c) == serialized);
}

TEST_CASE("synthesized literal constructors appear exactly once") {
    LibraryFacts f = sample();
    std::string serialized = to_json(f);
    LibraryFacts again = load_facts(serialized);
    int count = 0;
    for (const auto& fn : again.functions)
        if (fn.kind == FnKind::LiteralConstructor) ++count;
    CHECK(count == 1);
}

TEST_CASE("module class derivation") {
    CHECK(module_class_for("str", "") == ModuleClass::Str);
    CHECK(module_class_for("core::slice", "") == ModuleClass::Slice);
    CHECK(module_class_for("num::u32", "") == ModuleClass::Integer);
    CHECK(module_class_for("", "u8") == ModuleClass::Integer);
    CHECK(module_class_for("collections::vec", "") == ModuleClass::Other);
}
