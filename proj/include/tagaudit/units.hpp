#pragma once

// Splits a propagation-graph component into basic units, classifies their
// structural patterns, merges them into audit units, and renders each audit
// unit's soundness formula.

#include "tagaudit/facts.hpp"
#include "tagaudit/upg.hpp"

#include <optional>
#include <set>
#include <string>
#include <vector>

namespace tagaudit::units {

enum class Handling { Origin, Encapsulation, Delegation };

std::string_view to_string(Handling h);

struct PatternKind {
    enum class Shape {
        OriginFn,
        OriginMethod,
        SafeCallerToFn,
        UnsafeCallerToFn,
        SafeCallerToMethod,
        UnsafeCallerToMethod,
        MethodCaller
    };

    Shape shape = Shape::OriginFn;
    // MethodCaller refinement; the callee's own constructor context is
    // deliberately ignored (it never changes the soundness requirement).
    bool ctor_unsafe = false;
    bool caller_unsafe = false;
    bool callee_is_method = false;
    Handling handling = Handling::Origin;

    std::string name() const;  // "f_u", "f'_s->m_u", "(c'_u=>M')m'_s->f_u", ...
    bool operator==(const PatternKind&) const = default;
};

/// Every refined pattern name, for histogram schemas.
std::vector<std::string> all_pattern_names();

struct BasicUnit {
    PatternKind pattern;
    upg::UpgNode callee;
    std::optional<upg::UpgNode> caller;
    std::optional<upg::UpgNode> ctor;
    /// Methods able to invalidate constructor guarantees before the call.
    std::set<facts::FunctionId> kill_context;

    bool operator==(const BasicUnit&) const = default;
};

struct AuditFormula {
    bool origin = false;
    std::vector<facts::FunctionId> lhs;  // RS(...) union, sorted

    struct CtorTerm {
        facts::FunctionId id;
        bool is_unsafe = false;
        bool operator==(const CtorTerm&) const = default;
    };
    std::vector<CtorTerm> ctors;  // unsafe first, then by id
    std::optional<facts::FunctionId> caller;
    bool caller_unsafe = false;
    bool subtract_ks = false;

    std::string render() const;
    bool operator==(const AuditFormula&) const = default;
};

struct AuditUnit {
    std::string id;
    std::vector<upg::UpgNode> callees;  // sorted by id
    std::optional<upg::UpgNode> caller;
    std::vector<upg::UpgNode> ctors;  // unsafe first, then by id
    std::set<facts::FunctionId> kill_context;
    Handling handling = Handling::Origin;
    std::vector<std::string> pattern_names;  // of the merged basic units
    AuditFormula formula;

    bool operator==(const AuditUnit&) const = default;
};

/// Enumerates the basic units of one component: an origin unit per local
/// unsafe node, a two-node unit per call edge with a function-shaped caller,
/// and a three-plus unit per (constructor, dyn-method caller, callee) triple.
/// Dereference-intrinsic edges stay in the graph but form no units.
std::vector<BasicUnit> split_basic_units(const upg::Upg& component,
                                         const facts::LibraryFacts& facts);

PatternKind classify_pattern(const BasicUnit& u);

/// Merges basic units that share a caller (and, through that, a dyn-method
/// caller's constructors); origin units stay singletons.
std::vector<AuditUnit> merge_units(const std::vector<BasicUnit>& units);

AuditFormula formula_of(const AuditUnit& u);

}  // namespace tagaudit::units
