#pragma once

// Safety-property annotation language: parser, printer, registry, and the
// coarse name-level set algebra used by the auditor.

#include "tagaudit/errors.hpp"

#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace tagaudit::sp {

// ---------------------------------------------------------------------------
// Expression tree
// ---------------------------------------------------------------------------

struct SpArg;

/// Function-parameter identifier, dotted paths allowed (`self.ptr`).
struct FnParId {
    std::string path;
    bool operator==(const FnParId&) const = default;
};

/// The return value of the annotated API, written as the token `0`.
struct RetVal {
    bool operator==(const RetVal&) const = default;
};

/// Type parameter (`T`, `u8`, `St2`).
struct TypePar {
    std::string name;
    bool operator==(const TypePar&) const = default;
};

/// Numeric literal, kept textual.
struct Num {
    std::string digits;
    bool operator==(const Num&) const = default;
};

/// `sizeof(T)`.
struct SizeOf {
    std::string type_par;
    bool operator==(const SizeOf&) const = default;
};

/// Arithmetic expression: `add(x, y)`, `mul(...)`, `neg(x)`, ...
struct AriExpr {
    std::string op;
    std::vector<SpArg> operands;
    bool operator==(const AriExpr&) const;
};

/// Bracketed value range: `(0, isize::MAX]`, `[0, 127]`. Bounds stay symbolic.
struct ValRange {
    std::string lo;
    std::string hi;
    bool lo_closed = false;
    bool hi_closed = false;
    bool operator==(const ValRange&) const = default;
};

/// Parenthesized tuple treated as an address range: `(p, T, len)`.
struct AddrRange {
    std::vector<std::string> elems;
    bool operator==(const AddrRange&) const = default;
};

/// Open-ended spec argument preserved opaquely (`any`, `heap`, `!0`, `Some(T)`).
struct SpecArg {
    std::string text;
    bool operator==(const SpecArg&) const = default;
};

struct SpArg {
    std::variant<FnParId, RetVal, TypePar, Num, SizeOf, AriExpr, ValRange, AddrRange, SpecArg> node;
    bool operator==(const SpArg&) const = default;
};

enum class Usage { Precondition, Hazard, Option };

std::string_view usage_name(Usage u);

struct SpTerm {
    bool negated = false;
    std::string tag;
    std::vector<SpArg> args;
    /// `@precond` / `@hazard` / `@option` suffix; registry default applies when absent.
    std::optional<Usage> usage_override;

    bool operator==(const SpTerm&) const = default;
};

struct SpExpr {
    enum class Kind { Term, And, Or };

    Kind kind = Kind::Term;
    SpTerm term;                    // Kind::Term
    std::vector<SpExpr> children;   // Kind::And / Kind::Or, always >= 2

    bool operator==(const SpExpr&) const = default;

    static SpExpr make_term(SpTerm t);
    static SpExpr make_and(std::vector<SpExpr> children);
    static SpExpr make_or(std::vector<SpExpr> children);
};

// ---------------------------------------------------------------------------
// Coarse tag sets (name-level projection, negation-sensitive)
// ---------------------------------------------------------------------------

struct TagKey {
    bool negated = false;
    std::string name;

    auto operator<=>(const TagKey&) const = default;
    std::string str() const;  // "!Null" or "Init"
};

TagKey tag_key(std::string_view text);  // parses optional leading '!'

/// Ordered set of (negated, name) pairs. A tag and its negation never coexist;
/// the first insertion wins.
class TagSet {
  public:
    TagSet() = default;
    TagSet(std::initializer_list<TagKey> keys);

    bool insert(const TagKey& k);
    bool contains(const TagKey& k) const;
    bool contains_name(std::string_view name) const;  // either polarity
    bool empty() const { return items_.empty(); }
    std::size_t size() const { return items_.size(); }

    void unite(const TagSet& other);
    void subtract(const TagSet& other);
    TagSet intersect(const TagSet& other) const;
    bool is_subset_of(const TagSet& other) const;

    auto begin() const { return items_.begin(); }
    auto end() const { return items_.end(); }

    std::string str() const;  // "{Align, !Null}"
    std::vector<std::string> names() const;

    bool operator==(const TagSet&) const = default;

  private:
    std::set<TagKey> items_;
};

// ---------------------------------------------------------------------------
// Registry
// ---------------------------------------------------------------------------

enum class TagCategory { Layout, Pointer, Content, Alias, Misc, Compound };

std::string_view category_name(TagCategory c);

struct TagDef {
    std::string name;
    TagCategory category = TagCategory::Misc;
    std::vector<Usage> usage;  // allowed usages; the first one is the default
    int min_arity = 0;
    int max_arity = 0;  // -1 = variadic
    std::optional<SpExpr> expansion;
    std::vector<std::string> expansion_params;  // formal names bound to args

    bool is_compound() const { return category == TagCategory::Compound; }
};

/// One implication edge: premise args bind variables positionally, conclusion
/// args are bound variables or literal texts.
struct ImplicationRule {
    SpTerm premise;
    SpTerm conclusion;
};

class TagRegistry {
  public:
    /// Table-driven default registry: every primitive tag, the shorthand
    /// variants (ZST, Allocator, Sized) and the four compounds.
    static const TagRegistry& builtin();

    /// Loads (or extends a copy of the builtin with) definitions from a JSON
    /// document: {"tags":[{name, category, usage, arity|min_arity/max_arity,
    /// expansion?}], "implications":[{"if": SP, "then": SP}]}.
    static TagRegistry from_json(const std::string& text, bool extend_builtin = true);

    const TagDef* find(std::string_view name) const;
    void add(TagDef def);
    void add_implication(const std::string& premise_sp, const std::string& conclusion_sp);

    const std::vector<ImplicationRule>& implications() const { return implications_; }
    std::vector<std::string> tag_names() const;

  private:
    std::map<std::string, TagDef, std::less<>> defs_;
    std::vector<ImplicationRule> implications_;
};

// ---------------------------------------------------------------------------
// Diagnostics
// ---------------------------------------------------------------------------

struct SpDiagnostic {
    enum class Kind { UnknownTag, ArityMismatch, UsageClassWarning, ArgOrderWarning };
    enum class Severity { Warning, Error };

    Kind kind;
    Severity severity;
    std::string message;
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// Parses one safety-property expression. Whitespace-insensitive; `!` binds to
/// the immediately following tag. Throws SyntaxError with offset + expected.
SpExpr parse_sp(std::string_view text);

/// Parses a comma-separated annotation line into one expression per property.
std::vector<SpExpr> parse_sp_list(std::string_view text);

std::string print(const SpArg& a);
std::string print(const SpTerm& t);
std::string print(const SpExpr& e);

/// Registry conformance checks; diagnostics, never failures.
std::vector<SpDiagnostic> lint_sp(const SpExpr& e, const TagRegistry& reg);

/// Replaces compound terms by their expansions (recursively, with positional
/// argument substitution). Negated compounds expand through De Morgan.
SpExpr expand_compound(const SpExpr& e, const TagRegistry& reg);

/// True iff a == b or (a.tag, b.tag) follows from the registry's implication
/// rules with positional argument unification.
bool implies(const SpTerm& a, const SpTerm& b, const TagRegistry& reg);

/// Drops every term implied by another term of the list; output sorted.
std::vector<SpTerm> normalize(std::vector<SpTerm> terms, const TagRegistry& reg);

/// Name-level projection: compound-expands, then collects every (negated, tag)
/// pair; Or-branches are unioned.
TagSet coarse(const SpExpr& e, const TagRegistry& reg);

/// Convenience: parse + coarse over a list of annotation strings. Parse
/// failures are reported through `errors` when given, otherwise rethrown.
TagSet coarse_annotations(const std::vector<std::string>& annotations, const TagRegistry& reg,
                          std::vector<std::string>* errors = nullptr);

}  // namespace tagaudit::sp
