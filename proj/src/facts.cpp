#include "tagaudit/facts.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <sstream>

namespace tagaudit::facts {

namespace {

constexpr int kFactsVersion = 1;

template <typename Enum>
struct NamePair {
    Enum value;
    std::string_view name;
};

constexpr NamePair<FnKind> kFnKinds[] = {
    {FnKind::Function, "function"},
    {FnKind::StaticMethod, "static_method"},
    {FnKind::DynMethod, "dyn_method"},
    {FnKind::Constructor, "constructor"},
    {FnKind::LiteralConstructor, "literal_constructor"},
};
constexpr NamePair<Safety> kSafeties[] = {
    {Safety::Safe, "safe"},
    {Safety::Unsafe, "unsafe"},
};
constexpr NamePair<Visibility> kVisibilities[] = {
    {Visibility::Public, "public"},
    {Visibility::Private, "private"},
};
constexpr NamePair<ParamClass> kParamClasses[] = {
    {ParamClass::RawPointer, "raw_pointer"},
    {ParamClass::NonNullPointer, "non_null_pointer"},
    {ParamClass::Reference, "reference"},
    {ParamClass::MutableReference, "mutable_reference"},
    {ParamClass::OwnedObject, "owned_object"},
    {ParamClass::Allocator, "allocator"},
    {ParamClass::Integer, "integer"},
    {ParamClass::Other, "other"},
};
constexpr NamePair<RetKind> kRetKinds[] = {
    {RetKind::OwnedObject, "owned_object"},
    {RetKind::Reference, "reference"},
    {RetKind::OptionWrapped, "option_wrapped"},
    {RetKind::Unit, "unit"},
    {RetKind::Other, "other"},
};
constexpr NamePair<ModuleClass> kModuleClasses[] = {
    {ModuleClass::Integer, "integer"},
    {ModuleClass::Str, "str"},
    {ModuleClass::Slice, "slice"},
    {ModuleClass::Other, "other"},
};
constexpr NamePair<AdtKind> kAdtKinds[] = {
    {AdtKind::Struct, "struct"},
    {AdtKind::Enum, "enum"},
    {AdtKind::Union, "union"},
};

template <typename Enum, std::size_t N>
std::string_view enum_name(const NamePair<Enum> (&table)[N], Enum v) {
    for (const auto& p : table)
        if (p.value == v) return p.name;
    return "?";
}

template <typename Enum, std::size_t N>
Enum enum_value(const NamePair<Enum> (&table)[N], std::string_view name, const char* what) {
    for (const auto& p : table)
        if (p.name == name) return p.value;
    throw SchemaError("unknown " + std::string(what) + " '" + std::string(name) + "'");
}

}  // namespace

std::string_view to_string(FnKind k) { return enum_name(kFnKinds, k); }
std::string_view to_string(Safety s) { return enum_name(kSafeties, s); }
std::string_view to_string(Visibility v) { return enum_name(kVisibilities, v); }
std::string_view to_string(ParamClass c) { return enum_name(kParamClasses, c); }
std::string_view to_string(RetKind r) { return enum_name(kRetKinds, r); }
std::string_view to_string(ModuleClass m) { return enum_name(kModuleClasses, m); }
std::string_view to_string(AdtKind a) { return enum_name(kAdtKinds, a); }

CallSiteFact CallSiteFact::direct(FunctionId id) {
    CallSiteFact c;
    c.kind = Kind::Direct;
    c.callee = std::move(id);
    return c;
}

CallSiteFact CallSiteFact::generic(std::string trait_name, std::string method_name) {
    CallSiteFact c;
    c.kind = Kind::GenericTraitMethod;
    c.trait_name = std::move(trait_name);
    c.method_name = std::move(method_name);
    return c;
}

CallSiteFact CallSiteFact::fn_param(std::string signature) {
    CallSiteFact c;
    c.kind = Kind::FnParam;
    c.signature = std::move(signature);
    return c;
}

bool FunctionFact::has_param_class(ParamClass c) const {
    return std::any_of(params.begin(), params.end(),
                       [&](const ParamFact& p) { return p.cls == c; });
}

const FunctionFact* LibraryFacts::find_function(const FunctionId& id) const {
    auto it = std::lower_bound(functions.begin(), functions.end(), id,
                               [](const FunctionFact& f, const FunctionId& v) { return f.id < v; });
    if (it != functions.end() && it->id == id) return &*it;
    return nullptr;
}

const TypeFact* LibraryFacts::find_type(const TypeId& id) const {
    auto it = std::lower_bound(types.begin(), types.end(), id,
                               [](const TypeFact& t, const TypeId& v) { return t.id < v; });
    if (it != types.end() && it->id == id) return &*it;
    return nullptr;
}

bool literal_constructible(const TypeFact& t) {
    return std::all_of(t.fields.begin(), t.fields.end(),
                       [](const FieldFact& f) { return f.visibility == Visibility::Public; });
}

ModuleClass module_class_for(std::string_view path, std::string_view owner_name) {
    static const std::set<std::string_view> integer_names = {
        "int", "num",  "i8",  "i16", "i32",  "i64",  "i128",
        "u8",  "u16", "u32", "u64", "u128", "isize", "usize"};
    auto classify = [&](std::string_view seg) -> std::optional<ModuleClass> {
        if (seg == "str") return ModuleClass::Str;
        if (seg == "slice") return ModuleClass::Slice;
        if (integer_names.count(seg) != 0) return ModuleClass::Integer;
        return std::nullopt;
    };
    std::size_t start = 0;
    while (start <= path.size()) {
        std::size_t end = path.find("::", start);
        std::string_view seg = path.substr(start, end == std::string_view::npos ? end : end - start);
        if (auto m = classify(seg)) return *m;
        if (end == std::string_view::npos) break;
        start = end + 2;
    }
    if (auto m = classify(owner_name)) return *m;
    return ModuleClass::Other;
}

std::set<FunctionId> api_set_of(const TypeId& t, const LibraryFacts& facts) {
    if (facts.find_type(t) == nullptr) throw UnknownType("unknown type '" + t + "'");
    std::set<FunctionId> out;
    for (const auto& f : facts.functions) {
        if (f.kind != FnKind::DynMethod || !f.owner_type || *f.owner_type != t) continue;
        if (f.is_unsafe() || f.takes_mut_self || !f.unsafe_callsites.empty()) out.insert(f.id);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Validation / finalization
// ---------------------------------------------------------------------------

namespace {

bool callee_is_local_or_known(const FunctionId& callee, const LibraryFacts& f,
                              const LoadOptions& options) {
    if (callee == kDerefBuiltin) return true;
    if (f.find_function(callee) != nullptr) return true;
    if (!options.known_externals) return true;  // lenient mode
    return options.known_externals->count(callee) != 0;
}

void validate_function(const FunctionFact& fn, const LibraryFacts& f) {
    bool needs_owner = fn.kind == FnKind::DynMethod || fn.kind == FnKind::Constructor ||
                       fn.kind == FnKind::LiteralConstructor;
    if (needs_owner && !fn.owner_type)
        throw SchemaError("function '" + fn.id + "' of kind " + std::string(to_string(fn.kind)) +
                          " must name an owner type");
    if (fn.kind == FnKind::Function && fn.owner_type)
        throw SchemaError("free function '" + fn.id + "' must not name an owner type");
    if (fn.owner_type && f.find_type(*fn.owner_type) == nullptr)
        throw DanglingReference("function '" + fn.id + "' names unknown owner type '" +
                                *fn.owner_type + "'");
    if (fn.kind == FnKind::LiteralConstructor) {
        if (fn.safety != Safety::Safe)
            throw SchemaError("literal constructor '" + fn.id + "' must be safe");
        if (!fn.unsafe_callsites.empty())
            throw SchemaError("literal constructor '" + fn.id + "' must not contain call sites");
    }
    if (fn.kind == FnKind::Constructor) {
        bool returns_owner = fn.ret.kind == RetKind::OwnedObject &&
                             (!fn.ret.of_type || fn.ret.of_type == fn.owner_type);
        if (!returns_owner)
            throw SchemaError("constructor '" + fn.id +
                              "' must return an owned object of its owner type");
    }
}

FunctionFact synthesize_literal_constructor(const TypeFact& t) {
    FunctionFact fn;
    fn.id = t.id + "::literal";
    fn.name = "literal";
    fn.path = t.id;
    fn.kind = FnKind::LiteralConstructor;
    fn.safety = Safety::Safe;
    fn.visibility = Visibility::Public;
    fn.owner_type = t.id;
    fn.ret = RetClass{RetKind::OwnedObject, t.id};
    for (const auto& field : t.fields) fn.params.push_back({field.name, ParamClass::Other});
    fn.module_class = module_class_for(t.id, t.name);
    return fn;
}

}  // namespace

void finalize(LibraryFacts& f, const LoadOptions& options) {
    std::sort(f.functions.begin(), f.functions.end(),
              [](const FunctionFact& a, const FunctionFact& b) { return a.id < b.id; });
    std::sort(f.types.begin(), f.types.end(),
              [](const TypeFact& a, const TypeFact& b) { return a.id < b.id; });

    for (std::size_t i = 1; i < f.functions.size(); ++i)
        if (f.functions[i].id == f.functions[i - 1].id)
            throw DuplicateId("duplicate function id '" + f.functions[i].id + "'");
    for (std::size_t i = 1; i < f.types.size(); ++i)
        if (f.types[i].id == f.types[i - 1].id)
            throw DuplicateId("duplicate type id '" + f.types[i].id + "'");

    // A static method that returns an owned object of its owner is a
    // constructor; classification goes by return class.
    for (auto& fn : f.functions) {
        if (fn.kind == FnKind::StaticMethod && fn.owner_type &&
            fn.ret.kind == RetKind::OwnedObject && fn.ret.of_type == fn.owner_type)
            fn.kind = FnKind::Constructor;
    }

    // Synthesize literal constructors for fully public types (at most once).
    bool added = false;
    for (const auto& t : f.types) {
        if (!literal_constructible(t)) continue;
        FunctionFact lit = synthesize_literal_constructor(t);
        if (f.find_function(lit.id) != nullptr) {
            const FunctionFact* existing = f.find_function(lit.id);
            if (existing->kind != FnKind::LiteralConstructor)
                throw DuplicateId("id '" + lit.id + "' collides with the synthesized literal "
                                  "constructor of type '" + t.id + "'");
            continue;
        }
        f.functions.push_back(std::move(lit));
        added = true;
    }
    if (added)
        std::sort(f.functions.begin(), f.functions.end(),
                  [](const FunctionFact& a, const FunctionFact& b) { return a.id < b.id; });

    for (const auto& fn : f.functions) validate_function(fn, f);

    // Recompute and cross-check per-type constructor lists.
    std::map<TypeId, std::vector<FunctionId>> ctors;
    for (const auto& fn : f.functions)
        if (fn.is_constructor()) ctors[*fn.owner_type].push_back(fn.id);
    for (auto& t : f.types) {
        std::vector<FunctionId> computed = ctors.count(t.id) ? ctors[t.id] : std::vector<FunctionId>{};
        std::sort(computed.begin(), computed.end());
        if (!t.constructors.empty()) {
            std::vector<FunctionId> declared = t.constructors;
            std::sort(declared.begin(), declared.end());
            for (const auto& id : declared)
                if (f.find_function(id) == nullptr)
                    throw DanglingReference("type '" + t.id + "' lists unknown constructor '" +
                                            id + "'");
            if (declared != computed)
                throw SchemaError("constructor list of type '" + t.id +
                                  "' does not match the constructor functions");
        }
        t.constructors = std::move(computed);
    }

    for (const auto& fn : f.functions) {
        for (const auto& site : fn.unsafe_callsites) {
            if (site.kind != CallSiteFact::Kind::Direct) continue;
            if (!callee_is_local_or_known(site.callee, f, options))
                throw DanglingReference("call site in '" + fn.id + "' references unknown id '" +
                                        site.callee + "'");
        }
    }

    auto check_keys = [&](const std::map<FunctionId, std::vector<std::string>>& m,
                          const char* what) {
        for (const auto& [id, _] : m)
            if (f.find_function(id) == nullptr)
                throw DanglingReference(std::string(what) + " entry references unknown id '" + id +
                                        "'");
    };
    check_keys(f.tag_annotations, "annotations");
    check_keys(f.verifies, "verifies");
    check_keys(f.kills, "kills");
    for (const auto& [key, impls] : f.trait_impls)
        for (const auto& id : impls)
            if (f.find_function(id) == nullptr)
                throw DanglingReference("trait_impls entry '" + key +
                                        "' references unknown id '" + id + "'");
}

// ---------------------------------------------------------------------------
// JSON (de)serialization
// ---------------------------------------------------------------------------

namespace {

using nlohmann::json;

json param_to_json(const ParamFact& p) {
    return json{{"name", p.name}, {"class", to_string(p.cls)}};
}

json ret_to_json(const RetClass& r) {
    json j{{"class", to_string(r.kind)}};
    if (r.of_type) j["of_type"] = *r.of_type;
    return j;
}

json callsite_to_json(const CallSiteFact& c) {
    switch (c.kind) {
        case CallSiteFact::Kind::Direct:
            return json{{"callee", c.callee}};
        case CallSiteFact::Kind::GenericTraitMethod:
            return json{{"generic_trait_method", json{{"trait", c.trait_name},
                                                      {"method", c.method_name}}}};
        case CallSiteFact::Kind::FnParam:
            return json{{"fn_param", c.signature}};
    }
    return json::object();
}

CallSiteFact callsite_from_json(const json& j) {
    if (j.contains("callee")) return CallSiteFact::direct(j.at("callee").get<std::string>());
    if (j.contains("generic_trait_method")) {
        const auto& g = j.at("generic_trait_method");
        return CallSiteFact::generic(g.at("trait").get<std::string>(),
                                     g.at("method").get<std::string>());
    }
    if (j.contains("fn_param")) return CallSiteFact::fn_param(j.at("fn_param").get<std::string>());
    throw SchemaError("call site must carry one of callee/generic_trait_method/fn_param");
}

json function_to_json(const FunctionFact& f) {
    json j;
    j["id"] = f.id;
    j["name"] = f.name;
    j["path"] = f.path;
    j["kind"] = to_string(f.kind);
    j["safety"] = to_string(f.safety);
    j["visibility"] = to_string(f.visibility);
    if (f.owner_type) j["owner_type"] = *f.owner_type;
    j["takes_mut_self"] = f.takes_mut_self;
    j["params"] = json::array();
    for (const auto& p : f.params) j["params"].push_back(param_to_json(p));
    j["ret"] = ret_to_json(f.ret);
    j["module_class"] = to_string(f.module_class);
    j["unsafe_callsites"] = json::array();
    for (const auto& c : f.unsafe_callsites) j["unsafe_callsites"].push_back(callsite_to_json(c));
    if (!f.signature.empty()) j["sig"] = f.signature;
    return j;
}

FunctionFact function_from_json(const json& j) {
    FunctionFact f;
    f.id = j.at("id").get<std::string>();
    f.name = j.value("name", std::string{});
    if (f.name.empty()) {
        auto pos = f.id.rfind("::");
        f.name = pos == std::string::npos ? f.id : f.id.substr(pos + 2);
    }
    f.path = j.value("path", std::string{});
    f.kind = enum_value(kFnKinds, j.value("kind", "function"), "function kind");
    f.safety = enum_value(kSafeties, j.value("safety", "safe"), "safety");
    f.visibility = enum_value(kVisibilities, j.value("visibility", "public"), "visibility");
    if (j.contains("owner_type")) f.owner_type = j.at("owner_type").get<std::string>();
    f.takes_mut_self = j.value("takes_mut_self", false);
    for (const auto& p : j.value("params", json::array())) {
        ParamFact pf;
        pf.name = p.value("name", std::string{});
        pf.cls = enum_value(kParamClasses, p.value("class", "other"), "param class");
        f.params.push_back(std::move(pf));
    }
    if (j.contains("ret")) {
        const auto& r = j.at("ret");
        f.ret.kind = enum_value(kRetKinds, r.value("class", "unit"), "return class");
        if (r.contains("of_type")) f.ret.of_type = r.at("of_type").get<std::string>();
    }
    f.module_class =
        enum_value(kModuleClasses, j.value("module_class", "other"), "module class");
    for (const auto& c : j.value("unsafe_callsites", json::array()))
        f.unsafe_callsites.push_back(callsite_from_json(c));
    f.signature = j.value("sig", std::string{});
    return f;
}

json type_to_json(const TypeFact& t) {
    json j;
    j["id"] = t.id;
    j["name"] = t.name;
    j["adt_kind"] = to_string(t.adt_kind);
    j["fields"] = json::array();
    for (const auto& field : t.fields)
        j["fields"].push_back(json{{"name", field.name},
                                   {"visibility", to_string(field.visibility)}});
    j["constructors"] = t.constructors;
    return j;
}

TypeFact type_from_json(const json& j) {
    TypeFact t;
    t.id = j.at("id").get<std::string>();
    t.name = j.value("name", t.id);
    t.adt_kind = enum_value(kAdtKinds, j.value("adt_kind", "struct"), "adt kind");
    for (const auto& field : j.value("fields", json::array())) {
        FieldFact ff;
        ff.name = field.value("name", std::string{});
        ff.visibility =
            enum_value(kVisibilities, field.value("visibility", "private"), "visibility");
        t.fields.push_back(std::move(ff));
    }
    for (const auto& c : j.value("constructors", json::array()))
        t.constructors.push_back(c.get<std::string>());
    return t;
}

std::map<FunctionId, std::vector<std::string>> string_list_map_from_json(const json& j) {
    std::map<FunctionId, std::vector<std::string>> out;
    for (const auto& [key, value] : j.items()) {
        if (!value.is_array()) throw SchemaError("expected array of strings for '" + key + "'");
        std::vector<std::string> items;
        for (const auto& s : value) items.push_back(s.get<std::string>());
        out[key] = std::move(items);
    }
    return out;
}

}  // namespace

LibraryFacts load_facts(std::string_view text, const LoadOptions& options) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw SchemaError(std::string("facts file is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw SchemaError("facts document must be a JSON object");

    int version = doc.value("facts_version", kFactsVersion);
    if (version != kFactsVersion)
        throw SchemaError("unsupported facts_version " + std::to_string(version) + ", expected " +
                          std::to_string(kFactsVersion));

    LibraryFacts f;
    try {
        f.name = doc.value("name", std::string{});
        for (const auto& j : doc.value("functions", json::array()))
            f.functions.push_back(function_from_json(j));
        for (const auto& j : doc.value("types", json::array()))
            f.types.push_back(type_from_json(j));
        if (doc.contains("annotations"))
            f.tag_annotations = string_list_map_from_json(doc.at("annotations"));
        if (doc.contains("verifies")) f.verifies = string_list_map_from_json(doc.at("verifies"));
        if (doc.contains("kills")) f.kills = string_list_map_from_json(doc.at("kills"));
        for (const auto& [key, value] : doc.value("trait_impls", json::object()).items()) {
            std::vector<FunctionId> impls;
            for (const auto& s : value) impls.push_back(s.get<std::string>());
            f.trait_impls[key] = std::move(impls);
        }
    } catch (const json::exception& e) {
        throw SchemaError(std::string("malformed facts document: ") + e.what());
    }

    finalize(f, options);
    return f;
}

std::string to_json(const LibraryFacts& f) {
    json doc;
    doc["facts_version"] = kFactsVersion;
    doc["name"] = f.name;
    doc["functions"] = json::array();
    for (const auto& fn : f.functions) doc["functions"].push_back(function_to_json(fn));
    doc["types"] = json::array();
    for (const auto& t : f.types) doc["types"].push_back(type_to_json(t));
    doc["annotations"] = json::object();
    for (const auto& [id, list] : f.tag_annotations) doc["annotations"][id] = list;
    if (!f.verifies.empty()) {
        doc["verifies"] = json::object();
        for (const auto& [id, list] : f.verifies) doc["verifies"][id] = list;
    }
    if (!f.kills.empty()) {
        doc["kills"] = json::object();
        for (const auto& [id, list] : f.kills) doc["kills"][id] = list;
    }
    if (!f.trait_impls.empty()) {
        doc["trait_impls"] = json::object();
        for (const auto& [key, impls] : f.trait_impls) doc["trait_impls"][key] = impls;
    }
    return doc.dump(2) + "\n";
}

}  // namespace tagaudit::facts
