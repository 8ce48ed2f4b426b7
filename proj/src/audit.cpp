#include "tagaudit/audit.hpp"

#include <algorithm>
#include <functional>
#include <sstream>

namespace tagaudit::audit {

using facts::FnKind;
using facts::FunctionFact;
using facts::FunctionId;
using facts::LibraryFacts;
using facts::ModuleClass;
using facts::ParamClass;
using facts::RetKind;
using facts::Safety;
using facts::TypeFact;
using facts::Visibility;
using sp::TagKey;
using sp::TagSet;

// ---------------------------------------------------------------------------
// Rule table
// ---------------------------------------------------------------------------

namespace {

struct RuleInfo {
    Rule rule;
    const char* name;
    const char* title;
    const char* premise;
    const char* conclusion;
};

const RuleInfo kRules[] = {
    {Rule::Audit1, "audit.annotation", "API Annotation Rule",
     "the audited unit is a lone unsafe function or unsafe method",
     "its required safety set must be documented"},
    {Rule::Audit2, "audit.encapsulation", "API Encapsulation Rule",
     "a safe caller invokes one or more unsafe callees",
     "the union of callee required sets must be verified by the caller"},
    {Rule::Audit3, "audit.delegation", "API Delegation Rule",
     "an unsafe caller invokes one or more unsafe callees",
     "the union of callee required sets must be delegated or verified by the caller"},
    {Rule::Audit4, "audit.struct_encapsulation", "Weakest Struct Encapsulation Rule",
     "a safe method with unsafe callees belongs to a type with constructors",
     "callee requirements must be covered by the intersection of constructor guarantees "
     "plus the method's verified set"},
    {Rule::Audit5, "audit.struct_delegation", "Weakest Struct Delegation Rule",
     "an unsafe method with unsafe callees belongs to a type with constructors",
     "callee requirements must be covered by constructor guarantees plus the method's "
     "required and verified sets"},
    {Rule::Audit6, "audit.constructors", "Constructor Rule",
     "a type has multiple constructors",
     "every pair of constructors must agree on required-plus-verified safety"},
    {Rule::Infer1, "infer.bottom", "Bottom Annotation Rule",
     "a function is public and unsafe",
     "its required safety tag set must not be empty"},
    {Rule::Infer2, "infer.raw2own", "Raw Pointer to Ownership",
     "an unsafe function takes a raw pointer and returns an owned object",
     "required tags include Align, Allocated, InBound, Alias, Owning"},
    {Rule::Infer3, "infer.raw2ref", "Raw Pointer to Reference",
     "an unsafe function takes a raw pointer and returns a reference",
     "required tags include Align, Allocated, InBound, Alias"},
    {Rule::Infer4, "infer.allocator", "Designated Allocator",
     "an unsafe function takes both a raw pointer and an allocator",
     "required tags include Allocator"},
    {Rule::Infer5, "infer.unchecked", "Unchecked",
     "an unsafe function's name contains 'unchecked'",
     "integer modules require ValidNum, str modules ValidString, slice modules InBound"},
    {Rule::Infer6, "infer.assume_init", "Assume Init",
     "an unsafe function's name contains 'assume_init'",
     "required tags include Init"},
    {Rule::Infer7, "infer.delegation", "Delegation Rule for Function Calls",
     "a caller invokes unsafe callees with known required sets",
     "the caller's required set should include the union of the callee sets"},
    {Rule::Infer8, "infer.unchecked_option_elim", "Unchecked-Option Elimination",
     "a caller returning Option invokes an unchecked callee",
     "the callee's unchecked-derived tags can be waived for the caller"},
    {Rule::Infer9, "infer.nonnull_elim", "NonNull-!Null Elimination",
     "a caller takes a NonNull parameter and a callee requires !Null",
     "!Null can be waived for the caller"},
    {Rule::Infer10, "infer.constructor_consistency", "Constructor Consistency Rule",
     "a type has an unsafe constructor alongside other constructors",
     "every other constructor must cover the unsafe constructor's required set with its "
     "required-plus-verified set"},
    {Rule::Infer11, "infer.literal_enum_elim", "Literal Enum Constructor Elimination",
     "an enum has a literal constructor and an unchecked unsafe constructor",
     "the literal constructor is credited with verifying the unchecked requirements"},
    {Rule::Infer12, "infer.raw_ptr_ctor_elim", "Raw Pointer Constructor Elimination",
     "a sibling constructor takes no raw pointer while the unsafe constructor's "
     "requirements stem from raw-pointer input",
     "the raw-pointer-derived tags are not demanded from that sibling"},
};

const RuleInfo& info(Rule r) {
    for (const auto& row : kRules)
        if (row.rule == r) return row;
    return kRules[0];
}

}  // namespace

std::string_view rule_name(Rule r) { return info(r).name; }
std::string_view rule_title(Rule r) { return info(r).title; }

std::string rule_doc(Rule r) {
    const RuleInfo& i = info(r);
    std::ostringstream out;
    out << i.name << " (" << i.title << ")\n";
    out << "  premise:    " << i.premise << "\n";
    out << "  conclusion: " << i.conclusion << "\n";
    return out.str();
}

std::optional<Rule> rule_from_name(std::string_view name) {
    for (const auto& row : kRules)
        if (name == row.name) return row.rule;
    return std::nullopt;
}

std::vector<Rule> all_rules() {
    std::vector<Rule> out;
    for (const auto& row : kRules) out.push_back(row.rule);
    return out;
}

std::string_view to_string(FindingKind k) {
    switch (k) {
        case FindingKind::EmptyAnnotation: return "empty_annotation";
        case FindingKind::MissingTag: return "missing_tag";
        case FindingKind::SuperfluousTag: return "superfluous_tag";
        case FindingKind::ConstructorInconsistency: return "constructor_inconsistency";
        case FindingKind::LiteralConstructorSoundness: return "literal_constructor_soundness";
        case FindingKind::UnresolvedExternal: return "unresolved_external";
    }
    return "missing_tag";
}

std::string_view to_string(Severity s) {
    switch (s) {
        case Severity::Low: return "low";
        case Severity::Medium: return "medium";
        case Severity::High: return "high";
    }
    return "low";
}

Severity severity_of(FindingKind k) {
    switch (k) {
        case FindingKind::LiteralConstructorSoundness:
        case FindingKind::ConstructorInconsistency: return Severity::High;
        case FindingKind::MissingTag:
        case FindingKind::EmptyAnnotation: return Severity::Medium;
        case FindingKind::SuperfluousTag:
        case FindingKind::UnresolvedExternal: return Severity::Low;
    }
    return Severity::Low;
}

std::string sort_key(const Finding& f) {
    std::string out = f.subject;
    out += '|';
    out += rule_name(f.rule);
    out += '|';
    out += to_string(f.kind);
    out += '|';
    out += f.tags.str();
    out += '|';
    out += f.unit_id;
    out += '|';
    out += f.evidence;
    return out;
}

// ---------------------------------------------------------------------------
// TagLookup
// ---------------------------------------------------------------------------

TagLookup::TagLookup(const LibraryFacts& f, const tagdb::TagDatabase& db,
                     const sp::TagRegistry& reg)
    : facts_(&f), db_(&db), reg_(&reg) {}

sp::TagSet TagLookup::declared(const FunctionId& id) const {
    auto it = facts_->tag_annotations.find(id);
    if (it == facts_->tag_annotations.end()) return {};
    std::vector<std::string> errors;
    return sp::coarse_annotations(it->second, *reg_, &errors);
}

sp::TagSet TagLookup::verified(const FunctionId& id) const {
    auto it = facts_->verifies.find(id);
    if (it == facts_->verifies.end()) return {};
    std::vector<std::string> errors;
    return sp::coarse_annotations(it->second, *reg_, &errors);
}

namespace {

FunctionFact pseudo_fact(const tagdb::TagDbEntry& e) {
    FunctionFact f;
    f.id = e.id;
    f.name = e.name;
    f.safety = Safety::Unsafe;
    int i = 0;
    for (ParamClass c : e.params) f.params.push_back({"p" + std::to_string(i++), c});
    f.ret = e.ret;
    f.module_class = e.module_class;
    return f;
}

}  // namespace

sp::TagSet TagLookup::effective_rs(const FunctionId& id) const {
    const FunctionFact* local = facts_->find_function(id);
    if (local != nullptr) {
        TagSet d = declared(id);
        if (!d.empty()) return d;
        return infer_signature_tags(*local).tags;
    }
    const tagdb::TagDbEntry* entry = db_->find(id);
    if (entry != nullptr) {
        if (!entry->tags.empty()) return entry->tags;
        return infer_signature_tags(pseudo_fact(*entry)).tags;
    }
    return {};
}

std::vector<sp::SpExpr> TagLookup::tag_expressions(const FunctionId& id) const {
    std::vector<sp::SpExpr> out;
    const FunctionFact* local = facts_->find_function(id);
    if (local != nullptr) {
        auto it = facts_->tag_annotations.find(id);
        if (it != facts_->tag_annotations.end()) {
            for (const auto& text : it->second) {
                try {
                    for (auto& e : sp::parse_sp_list(text)) out.push_back(std::move(e));
                } catch (const SyntaxError&) {
                    // Unparsable annotations carry no structure to inspect.
                }
            }
        }
        return out;
    }
    const tagdb::TagDbEntry* entry = db_->find(id);
    if (entry != nullptr) out = entry->parsed;
    return out;
}

// ---------------------------------------------------------------------------
// Signature rules
// ---------------------------------------------------------------------------

void Suggestion::propose(const TagKey& key, Rule rule) {
    if (tags.contains(key)) return;
    if (!tags.insert(key)) return;
    provenance[key] = rule;
}

namespace {

bool name_contains(const FunctionFact& f, std::string_view needle) {
    return f.name.find(needle) != std::string::npos;
}

std::string first_param_named(const FunctionFact& f, ParamClass c) {
    for (const auto& p : f.params)
        if (p.cls == c) return p.name;
    return {};
}

}  // namespace

sp::TagSet unchecked_tags_for(ModuleClass m) {
    switch (m) {
        case ModuleClass::Integer: return TagSet{sp::tag_key("ValidNum")};
        case ModuleClass::Str: return TagSet{sp::tag_key("ValidString")};
        case ModuleClass::Slice: return TagSet{sp::tag_key("InBound")};
        case ModuleClass::Other: return {};
    }
    return {};
}

Suggestion infer_signature_tags(const FunctionFact& f) {
    Suggestion s;
    if (f.safety != Safety::Unsafe) return s;

    bool raw = f.has_param_class(ParamClass::RawPointer);
    if (raw && f.ret.kind == RetKind::OwnedObject) {
        for (const char* t : {"Align", "Allocated", "InBound", "Alias", "Owning"})
            s.propose(sp::tag_key(t), Rule::Infer2);
        std::ostringstream ev;
        ev << "unsafe fn with raw-pointer param '" << first_param_named(f, ParamClass::RawPointer)
           << "' returning an owned object";
        if (name_contains(f, "from_raw")) ev << "; name contains 'from_raw'";
        s.evidence[Rule::Infer2] = ev.str();
    }
    if (raw && f.ret.kind == RetKind::Reference) {
        for (const char* t : {"Align", "Allocated", "InBound", "Alias"})
            s.propose(sp::tag_key(t), Rule::Infer3);
        std::ostringstream ev;
        ev << "unsafe fn with raw-pointer param '" << first_param_named(f, ParamClass::RawPointer)
           << "' returning a reference";
        if (name_contains(f, "as_ref") || name_contains(f, "as_mut"))
            ev << "; name contains 'as_ref'/'as_mut'";
        s.evidence[Rule::Infer3] = ev.str();
    }
    if (raw && f.has_param_class(ParamClass::Allocator)) {
        s.propose(sp::tag_key("Allocator"), Rule::Infer4);
        std::ostringstream ev;
        ev << "unsafe fn with raw-pointer param '" << first_param_named(f, ParamClass::RawPointer)
           << "' and allocator param '" << first_param_named(f, ParamClass::Allocator) << "'";
        if (name_contains(f, "_in")) ev << "; name contains '_in'";
        s.evidence[Rule::Infer4] = ev.str();
    }
    if (name_contains(f, "unchecked")) {
        TagSet tags = unchecked_tags_for(f.module_class);
        for (const auto& k : tags) s.propose(k, Rule::Infer5);
        if (!tags.empty()) {
            std::ostringstream ev;
            ev << "unsafe fn '" << f.name << "' contains 'unchecked' in a "
               << facts::to_string(f.module_class) << "-class module";
            s.evidence[Rule::Infer5] = ev.str();
        }
    }
    if (name_contains(f, "assume_init")) {
        s.propose(sp::tag_key("Init"), Rule::Infer6);
        s.evidence[Rule::Infer6] = "unsafe fn '" + f.name + "' contains 'assume_init'";
    }
    return s;
}

std::optional<Finding> check_bottom(const FunctionFact& f, const TagSet& declared,
                                    const Suggestion& starter) {
    if (f.visibility != Visibility::Public || f.safety != Safety::Unsafe || !declared.empty())
        return std::nullopt;
    Finding finding;
    finding.kind = FindingKind::EmptyAnnotation;
    finding.subject = f.id;
    finding.rule = Rule::Infer1;
    finding.tags = starter.tags;
    finding.severity = severity_of(finding.kind);
    finding.evidence = "public unsafe function with no safety annotations";
    if (!starter.tags.empty())
        finding.evidence += "; starter tags from signature rules: " + starter.tags.str();
    return finding;
}

// ---------------------------------------------------------------------------
// Delegation and eliminations
// ---------------------------------------------------------------------------

sp::TagSet infer_delegated_tags(const units::AuditUnit& u, const TagLookup& lookup,
                                std::vector<Finding>* unresolved) {
    TagSet out;
    for (const auto& callee : u.callees) {
        TagSet rs = lookup.effective_rs(callee.func);
        if (rs.empty()) {
            if (unresolved != nullptr) {
                Finding f;
                f.kind = FindingKind::UnresolvedExternal;
                f.subject = callee.func;
                f.rule = Rule::Infer7;
                f.unit_id = u.id;
                f.severity = severity_of(f.kind);
                f.evidence =
                    "callee has no tags from annotations, the tag database, or signature rules";
                unresolved->push_back(std::move(f));
            }
            continue;
        }
        out.unite(rs);
    }
    return out;
}

namespace {

std::string last_segment(const FunctionId& id) {
    auto pos = id.rfind("::");
    return pos == std::string::npos ? id : id.substr(pos + 2);
}

ModuleClass callee_module_class(const FunctionId& id, const TagLookup& lookup) {
    const FunctionFact* local = lookup.facts().find_function(id);
    if (local != nullptr) return local->module_class;
    const tagdb::TagDbEntry* entry = lookup.db().find(id);
    if (entry != nullptr) return entry->module_class;
    return ModuleClass::Other;
}

// True when the callee's tag expressions allow a zero-size alternative in
// place of pointer validity (an Or branch built on Size(_, 0) / ZST).
bool permits_null_for_zst(const std::vector<sp::SpExpr>& expressions,
                          const sp::TagRegistry& reg) {
    std::function<bool(const sp::SpExpr&, bool)> walk = [&](const sp::SpExpr& e,
                                                            bool under_or) -> bool {
        if (e.kind == sp::SpExpr::Kind::Term) {
            if (!under_or) return false;
            const sp::SpTerm& t = e.term;
            if (t.negated) return false;
            if (t.tag == "ZST") return true;
            if ((t.tag == "Size" || t.tag == "Sized") && t.args.size() == 2)
                return sp::print(t.args[1]) == "0";
            return false;
        }
        bool next_under_or = under_or || e.kind == sp::SpExpr::Kind::Or;
        for (const auto& c : e.children)
            if (walk(c, next_under_or)) return true;
        return false;
    };
    for (const auto& e : expressions)
        if (walk(sp::expand_compound(e, reg), false)) return true;
    return false;
}

}  // namespace

std::vector<Elimination> apply_eliminations(const FunctionFact& f, const units::AuditUnit& unit,
                                            const TagLookup& lookup, Suggestion& suggestion) {
    std::vector<Elimination> out;

    // Rule 8: unchecked callee, Option-returning caller.
    if (f.ret.kind == RetKind::OptionWrapped) {
        for (const auto& callee : unit.callees) {
            if (last_segment(callee.func).find("unchecked") == std::string::npos) continue;
            TagSet waived = unchecked_tags_for(callee_module_class(callee.func, lookup));
            TagSet removed = waived.intersect(suggestion.tags);
            if (removed.empty()) continue;
            suggestion.tags.subtract(removed);
            for (const auto& k : removed) suggestion.provenance.erase(k);
            Elimination e;
            e.rule = Rule::Infer8;
            e.removed = removed;
            e.evidence = "caller returns Option and callee '" + callee.func +
                         "' is an unchecked operation";
            out.push_back(std::move(e));
        }
    }

    // Rule 9: NonNull caller parameter discharges a callee's !Null.
    if (f.has_param_class(ParamClass::NonNullPointer)) {
        TagKey not_null = sp::tag_key("!Null");
        for (const auto& callee : unit.callees) {
            if (!lookup.effective_rs(callee.func).contains(not_null)) continue;
            if (!suggestion.tags.contains(not_null)) break;
            TagSet removed;
            removed.insert(not_null);
            suggestion.tags.subtract(removed);
            suggestion.provenance.erase(not_null);
            Elimination e;
            e.rule = Rule::Infer9;
            e.removed = removed;
            e.evidence = "caller takes NonNull parameter '" +
                         first_param_named(f, ParamClass::NonNullPointer) + "' and callee '" +
                         callee.func + "' requires !Null";
            out.push_back(std::move(e));
            break;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Constructor consistency
// ---------------------------------------------------------------------------

namespace {

// Raw-pointer-derived requirements of an unsafe constructor: what the
// signature rules 2..4 pin on its raw-pointer input, plus an Allocator
// requirement that rides that pointer.
TagSet raw_derived_tags(const FunctionFact& ctor, const TagSet& rs) {
    TagSet out;
    if (!ctor.has_param_class(ParamClass::RawPointer)) return out;
    Suggestion sig = infer_signature_tags(ctor);
    for (const auto& k : sig.tags) {
        Rule r = sig.provenance.at(k);
        if (r == Rule::Infer2 || r == Rule::Infer3 || r == Rule::Infer4) out.insert(k);
    }
    if (rs.contains(sp::tag_key("Allocator"))) out.insert(sp::tag_key("Allocator"));
    return out;
}

}  // namespace

std::vector<Finding> check_constructor_consistency(const TypeFact& t, const TagLookup& lookup) {
    std::vector<Finding> out;
    if (t.constructors.size() < 2) return out;

    const LibraryFacts& facts = lookup.facts();
    for (const auto& ci_id : t.constructors) {
        const FunctionFact* ci = facts.find_function(ci_id);
        if (ci == nullptr || ci->safety != Safety::Unsafe) continue;
        TagSet rs_i = lookup.effective_rs(ci_id);
        if (rs_i.empty()) continue;

        for (const auto& cj_id : t.constructors) {
            if (cj_id == ci_id) continue;
            const FunctionFact* cj = facts.find_function(cj_id);
            if (cj == nullptr) continue;

            TagSet required = rs_i;
            std::string credit_note;
            bool literal = cj->kind == FnKind::LiteralConstructor;
            if (literal) {
                if (t.adt_kind == facts::AdtKind::Enum && name_contains(*ci, "unchecked")) {
                    // Literal enum construction only builds valid variants.
                    required = TagSet{};
                    credit_note = "; literal enum constructor credited with the unchecked "
                                  "requirements";
                }
            } else if (!cj->has_param_class(ParamClass::RawPointer)) {
                TagSet credited = raw_derived_tags(*ci, rs_i);
                if (!credited.empty()) {
                    required.subtract(credited);
                    credit_note = "; raw-pointer-derived tags " + credited.str() +
                                  " waived for a constructor without raw-pointer input";
                }
            }
            required.subtract(lookup.effective_rs(cj_id));
            required.subtract(lookup.verified(cj_id));
            if (required.empty()) continue;

            Finding f;
            f.kind = literal ? FindingKind::LiteralConstructorSoundness
                             : FindingKind::ConstructorInconsistency;
            f.subject = t.id;
            f.tags = required;
            f.rule = Rule::Infer10;
            f.severity = severity_of(f.kind);
            f.evidence = "unsafe constructor '" + ci_id + "' requires " + rs_i.str() +
                         "; constructor '" + cj_id + "' leaves " + required.str() + " uncovered" +
                         credit_note;
            out.push_back(std::move(f));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Full pipeline
// ---------------------------------------------------------------------------

std::vector<Finding> audit(const LibraryFacts& f, const upg::Upg& graph,
                           const std::vector<units::AuditUnit>& units,
                           const tagdb::TagDatabase& db, const sp::TagRegistry& reg) {
    (void)graph;
    TagLookup lookup(f, db, reg);
    std::vector<Finding> findings;

    std::map<FunctionId, const units::AuditUnit*> unit_by_caller;
    for (const auto& u : units)
        if (u.caller) unit_by_caller[u.caller->func] = &u;

    for (const auto& fn : f.functions) {
        TagSet declared = lookup.declared(fn.id);
        Suggestion suggestion = infer_signature_tags(fn);

        if (auto bottom = check_bottom(fn, declared, suggestion)) findings.push_back(*bottom);

        const units::AuditUnit* unit = nullptr;
        auto it = unit_by_caller.find(fn.id);
        if (it != unit_by_caller.end()) unit = it->second;

        std::vector<Elimination> eliminations;
        if (unit != nullptr) {
            std::vector<Finding> unresolved;
            TagSet delegated = infer_delegated_tags(*unit, lookup, &unresolved);
            std::move(unresolved.begin(), unresolved.end(), std::back_inserter(findings));

            if (fn.safety == Safety::Unsafe) {
                for (const auto& k : delegated) suggestion.propose(k, Rule::Infer7);
                std::ostringstream ev;
                ev << "delegated from callees:";
                for (const auto& c : unit->callees) ev << " " << c.func;
                suggestion.evidence[Rule::Infer7] = ev.str();

                eliminations = apply_eliminations(fn, *unit, lookup, suggestion);

                // A declared bare !Null is flagged when some callee explicitly
                // allows the zero-size alternative.
                TagKey not_null = sp::tag_key("!Null");
                if (declared.contains(not_null) && !suggestion.tags.contains(not_null)) {
                    for (const auto& callee : unit->callees) {
                        if (!permits_null_for_zst(lookup.tag_expressions(callee.func), reg))
                            continue;
                        Finding s;
                        s.kind = FindingKind::SuperfluousTag;
                        s.subject = fn.id;
                        s.tags.insert(not_null);
                        s.rule = Rule::Infer7;
                        s.unit_id = unit->id;
                        s.severity = severity_of(s.kind);
                        s.evidence = "callee '" + callee.func +
                                     "' permits zero-sized types; suggest `!Null || ZST`";
                        findings.push_back(std::move(s));
                        break;
                    }
                }
            }
        }

        if (fn.safety == Safety::Unsafe) {
            // Declared tags contradicted by an elimination rule.
            for (const auto& e : eliminations) {
                TagSet superfluous = e.removed.intersect(declared);
                if (superfluous.empty()) continue;
                Finding s;
                s.kind = FindingKind::SuperfluousTag;
                s.subject = fn.id;
                s.tags = superfluous;
                s.rule = e.rule;
                if (unit != nullptr) s.unit_id = unit->id;
                s.severity = severity_of(s.kind);
                s.evidence = e.evidence;
                findings.push_back(std::move(s));
            }

            // Missing tags, grouped by the rule that suggested them.
            std::map<Rule, TagSet> missing;
            for (const auto& k : suggestion.tags)
                if (!declared.contains(k)) missing[suggestion.provenance.at(k)].insert(k);
            for (const auto& [rule, tags] : missing) {
                Finding m;
                m.kind = FindingKind::MissingTag;
                m.subject = fn.id;
                m.tags = tags;
                m.rule = rule;
                if (rule == Rule::Infer7 && unit != nullptr) m.unit_id = unit->id;
                m.severity = severity_of(m.kind);
                auto ev = suggestion.evidence.find(rule);
                m.evidence = ev == suggestion.evidence.end() ? std::string{} : ev->second;
                findings.push_back(std::move(m));
            }
        }
    }

    for (const auto& t : f.types) {
        auto ctor_findings = check_constructor_consistency(t, lookup);
        std::move(ctor_findings.begin(), ctor_findings.end(), std::back_inserter(findings));
    }

    std::sort(findings.begin(), findings.end(),
              [](const Finding& a, const Finding& b) { return sort_key(a) < sort_key(b); });
    findings.erase(std::unique(findings.begin(), findings.end()), findings.end());
    return findings;
}

}  // namespace tagaudit::audit
