#pragma once

// Canonical data model of a library under audit. Every downstream stage
// (graph construction, partitioning, auditing) consumes only this model.

#include "tagaudit/errors.hpp"

#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace tagaudit::facts {

using FunctionId = std::string;
using TypeId = std::string;

/// Raw pointer dereference is modeled as a call to this compiler intrinsic.
inline constexpr std::string_view kDerefBuiltin = "builtin::deref";

enum class FnKind { Function, StaticMethod, DynMethod, Constructor, LiteralConstructor };
enum class Safety { Safe, Unsafe };
enum class Visibility { Public, Private };
enum class ParamClass {
    RawPointer,
    NonNullPointer,
    Reference,
    MutableReference,
    OwnedObject,
    Allocator,
    Integer,
    Other
};
enum class RetKind { OwnedObject, Reference, OptionWrapped, Unit, Other };
enum class ModuleClass { Integer, Str, Slice, Other };
enum class AdtKind { Struct, Enum, Union };

std::string_view to_string(FnKind k);
std::string_view to_string(Safety s);
std::string_view to_string(Visibility v);
std::string_view to_string(ParamClass c);
std::string_view to_string(RetKind r);
std::string_view to_string(ModuleClass m);
std::string_view to_string(AdtKind a);

struct ParamFact {
    std::string name;
    ParamClass cls = ParamClass::Other;

    bool operator==(const ParamFact&) const = default;
};

struct RetClass {
    RetKind kind = RetKind::Unit;
    std::optional<TypeId> of_type;

    bool operator==(const RetClass&) const = default;
};

struct CallSiteFact {
    enum class Kind { Direct, GenericTraitMethod, FnParam };

    Kind kind = Kind::Direct;
    FunctionId callee;         // Direct
    std::string trait_name;    // GenericTraitMethod
    std::string method_name;   // GenericTraitMethod
    std::string signature;     // FnParam, normalized signature text

    bool operator==(const CallSiteFact&) const = default;

    static CallSiteFact direct(FunctionId id);
    static CallSiteFact generic(std::string trait_name, std::string method_name);
    static CallSiteFact fn_param(std::string signature);
};

struct FunctionFact {
    FunctionId id;
    std::string name;
    std::string path;  // module path, without the function name
    FnKind kind = FnKind::Function;
    Safety safety = Safety::Safe;
    Visibility visibility = Visibility::Public;
    std::optional<TypeId> owner_type;
    bool takes_mut_self = false;
    std::vector<ParamFact> params;
    RetClass ret;
    ModuleClass module_class = ModuleClass::Other;
    std::vector<CallSiteFact> unsafe_callsites;
    std::string signature;  // normalized signature text, used for fn-param callee matching

    bool is_unsafe() const { return safety == Safety::Unsafe; }
    bool is_constructor() const {
        return kind == FnKind::Constructor || kind == FnKind::LiteralConstructor;
    }
    bool has_param_class(ParamClass c) const;

    bool operator==(const FunctionFact&) const = default;
};

struct FieldFact {
    std::string name;
    Visibility visibility = Visibility::Private;

    bool operator==(const FieldFact&) const = default;
};

struct TypeFact {
    TypeId id;
    std::string name;
    AdtKind adt_kind = AdtKind::Struct;
    std::vector<FieldFact> fields;
    std::vector<FunctionId> constructors;  // recomputed/validated at load

    bool operator==(const TypeFact&) const = default;
};

struct LibraryFacts {
    std::string name;
    std::vector<FunctionFact> functions;  // sorted by id
    std::vector<TypeFact> types;          // sorted by id
    std::map<FunctionId, std::vector<std::string>> tag_annotations;
    std::map<FunctionId, std::vector<std::string>> verifies;  // explicit VS entries
    std::map<FunctionId, std::vector<std::string>> kills;     // explicit KS entries
    /// "Trait::method" -> local functions implementing it, for generic callees.
    std::map<std::string, std::vector<FunctionId>> trait_impls;

    const FunctionFact* find_function(const FunctionId& id) const;
    const TypeFact* find_type(const TypeId& id) const;
    bool operator==(const LibraryFacts&) const = default;
};

struct LoadOptions {
    /// When set, direct call-site callees must resolve locally, to
    /// builtin::deref, or to this set; anything else is a DanglingReference.
    /// When unset, unknown callees are accepted as external nodes and the
    /// auditor reports the ones that stay tag-less.
    std::optional<std::set<FunctionId>> known_externals;
};

/// Parses and validates a facts JSON document (facts_version 1).
/// Synthesizes one literal constructor per literal-constructible type.
LibraryFacts load_facts(std::string_view text, const LoadOptions& options = {});

/// Canonical serialization; load_facts(to_json(f)) reproduces f exactly.
std::string to_json(const LibraryFacts& f);

/// True iff every field of t is externally visible (zero fields count).
bool literal_constructible(const TypeFact& t);

/// Dynamic methods of t that contain unsafe call sites, are declared unsafe,
/// or take a mutable self. Throws UnknownType.
std::set<FunctionId> api_set_of(const TypeId& t, const LibraryFacts& facts);

/// Module class from the path segments and owner name (str/slice/integer).
ModuleClass module_class_for(std::string_view path, std::string_view owner_name);

/// Runs the model invariants over already-built facts (used by the extractor
/// to share the loader's validation); throws on violation, synthesizes
/// literal constructors, normalizes static methods that return their owner
/// into constructors, and sorts everything.
void finalize(LibraryFacts& f, const LoadOptions& options = {});

}  // namespace tagaudit::facts
