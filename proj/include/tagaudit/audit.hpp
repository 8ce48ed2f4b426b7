#pragma once

// Applies the audit and inference rules over audit units and coarse tag sets:
// missing/superfluous tags, empty annotations, and constructor-consistency
// soundness findings.

#include "tagaudit/facts.hpp"
#include "tagaudit/sp.hpp"
#include "tagaudit/tagdb.hpp"
#include "tagaudit/units.hpp"
#include "tagaudit/upg.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace tagaudit::audit {

enum class Rule {
    Audit1,  // API annotation
    Audit2,  // API encapsulation
    Audit3,  // API delegation
    Audit4,  // weakest struct encapsulation
    Audit5,  // weakest struct delegation
    Audit6,  // constructor requirement
    Infer1,  // bottom annotation
    Infer2,  // raw pointer to ownership
    Infer3,  // raw pointer to reference
    Infer4,  // designated allocator
    Infer5,  // unchecked
    Infer6,  // assume init
    Infer7,  // delegation for function calls
    Infer8,  // unchecked-option elimination
    Infer9,  // nonnull-!null elimination
    Infer10, // constructor consistency
    Infer11, // literal enum constructor elimination
    Infer12, // raw pointer constructor elimination
};

std::string_view rule_name(Rule r);   // stable ids: "infer.raw2own", ...
std::string_view rule_title(Rule r);  // human names: "Raw Pointer to Ownership"
std::string rule_doc(Rule r);         // premise/conclusion text for `explain`
std::optional<Rule> rule_from_name(std::string_view name);
std::vector<Rule> all_rules();

enum class FindingKind {
    EmptyAnnotation,
    MissingTag,
    SuperfluousTag,
    ConstructorInconsistency,
    LiteralConstructorSoundness,
    UnresolvedExternal,
};

enum class Severity { Low, Medium, High };

std::string_view to_string(FindingKind k);
std::string_view to_string(Severity s);
Severity severity_of(FindingKind k);

struct Finding {
    FindingKind kind = FindingKind::MissingTag;
    std::string subject;  // function or type id
    sp::TagSet tags;
    Rule rule = Rule::Infer1;
    std::string evidence;
    std::string unit_id;  // empty when not tied to a unit
    Severity severity = Severity::Medium;

    bool operator==(const Finding&) const = default;
};

/// Sorted, stable key used to order findings deterministically.
std::string sort_key(const Finding& f);

/// Resolves the effective required-safety tag set of a callee: declared
/// annotations first, then the tag database, then signature inference.
class TagLookup {
  public:
    TagLookup(const facts::LibraryFacts& f, const tagdb::TagDatabase& db,
              const sp::TagRegistry& reg);

    sp::TagSet declared(const facts::FunctionId& id) const;
    sp::TagSet verified(const facts::FunctionId& id) const;
    sp::TagSet effective_rs(const facts::FunctionId& id) const;
    /// Parsed tag expressions of the callee (annotations or database).
    std::vector<sp::SpExpr> tag_expressions(const facts::FunctionId& id) const;
    const tagdb::TagDatabase& db() const { return *db_; }
    const sp::TagRegistry& registry() const { return *reg_; }
    const facts::LibraryFacts& facts() const { return *facts_; }

  private:
    const facts::LibraryFacts* facts_;
    const tagdb::TagDatabase* db_;
    const sp::TagRegistry* reg_;
};

/// Signature-derived suggestion with per-tag rule provenance.
struct Suggestion {
    sp::TagSet tags;
    std::map<sp::TagKey, Rule> provenance;
    std::map<Rule, std::string> evidence;

    void propose(const sp::TagKey& key, Rule rule);
};

/// Inference rule 1: public unsafe APIs must carry a non-empty tag set.
std::optional<Finding> check_bottom(const facts::FunctionFact& f, const sp::TagSet& declared,
                                    const Suggestion& starter);

/// Inference rules 2..6 over one signature.
Suggestion infer_signature_tags(const facts::FunctionFact& f);

/// Rule-5 tags an unchecked name would contribute for a module class.
sp::TagSet unchecked_tags_for(facts::ModuleClass m);

/// Inference rule 7: union of unit-callee tag sets. Tag-less callees are
/// reported through `unresolved`.
sp::TagSet infer_delegated_tags(const units::AuditUnit& u, const TagLookup& lookup,
                                std::vector<Finding>* unresolved = nullptr);

/// One elimination applied to a suggestion.
struct Elimination {
    Rule rule = Rule::Infer8;
    sp::TagSet removed;
    std::string evidence;
};

/// Inference rules 8 and 9 against the caller's signature and unit callees.
std::vector<Elimination> apply_eliminations(const facts::FunctionFact& f,
                                            const units::AuditUnit& unit, const TagLookup& lookup,
                                            Suggestion& suggestion);

/// Inference rules 10..12 over a type's constructors.
std::vector<Finding> check_constructor_consistency(const facts::TypeFact& t,
                                                   const TagLookup& lookup);

/// Full pipeline: bottom checks, signature inference, per-unit delegation with
/// eliminations, suggested-vs-declared diff, constructor consistency. Findings
/// come back sorted deterministically.
std::vector<Finding> audit(const facts::LibraryFacts& f, const upg::Upg& graph,
                           const std::vector<units::AuditUnit>& units,
                           const tagdb::TagDatabase& db,
                           const sp::TagRegistry& reg = sp::TagRegistry::builtin());

}  // namespace tagaudit::audit
