#include "tagaudit/units.hpp"

#include <algorithm>
#include <map>
#include <sstream>

namespace tagaudit::units {

using facts::FunctionId;
using upg::EdgeKind;
using upg::NodeKind;
using upg::UpgNode;

std::string_view to_string(Handling h) {
    switch (h) {
        case Handling::Origin: return "origin";
        case Handling::Encapsulation: return "encapsulation";
        case Handling::Delegation: return "delegation";
    }
    return "origin";
}

std::string PatternKind::name() const {
    switch (shape) {
        case Shape::OriginFn: return "f_u";
        case Shape::OriginMethod: return "m_u";
        case Shape::SafeCallerToFn: return "f'_s->f_u";
        case Shape::UnsafeCallerToFn: return "f'_u->f_u";
        case Shape::SafeCallerToMethod: return "f'_s->m_u";
        case Shape::UnsafeCallerToMethod: return "f'_u->m_u";
        case Shape::MethodCaller: {
            std::string out = "(c'_";
            out += ctor_unsafe ? 'u' : 's';
            out += "=>M')m'_";
            out += caller_unsafe ? 'u' : 's';
            out += "->";
            out += callee_is_method ? "m_u" : "f_u";
            return out;
        }
    }
    return "f_u";
}

std::vector<std::string> all_pattern_names() {
    std::vector<std::string> out = {"f_u",       "m_u",       "f'_s->f_u",
                                    "f'_u->f_u", "f'_s->m_u", "f'_u->m_u"};
    for (bool ctor_unsafe : {false, true})
        for (bool caller_unsafe : {false, true})
            for (bool callee_is_method : {false, true}) {
                PatternKind p;
                p.shape = PatternKind::Shape::MethodCaller;
                p.ctor_unsafe = ctor_unsafe;
                p.caller_unsafe = caller_unsafe;
                p.callee_is_method = callee_is_method;
                out.push_back(p.name());
            }
    return out;
}

PatternKind classify_pattern(const BasicUnit& u) {
    PatternKind p;
    bool callee_is_method = u.callee.kind == NodeKind::M;
    if (!u.caller) {
        p.shape = callee_is_method ? PatternKind::Shape::OriginMethod
                                   : PatternKind::Shape::OriginFn;
        p.handling = Handling::Origin;
        return p;
    }
    if (!u.ctor) {
        bool caller_unsafe = u.caller->is_unsafe;
        if (callee_is_method)
            p.shape = caller_unsafe ? PatternKind::Shape::UnsafeCallerToMethod
                                    : PatternKind::Shape::SafeCallerToMethod;
        else
            p.shape = caller_unsafe ? PatternKind::Shape::UnsafeCallerToFn
                                    : PatternKind::Shape::SafeCallerToFn;
        p.handling = caller_unsafe ? Handling::Delegation : Handling::Encapsulation;
        return p;
    }
    p.shape = PatternKind::Shape::MethodCaller;
    p.ctor_unsafe = u.ctor->is_unsafe;
    p.caller_unsafe = u.caller->is_unsafe;
    p.callee_is_method = callee_is_method;
    // Encapsulation only when the whole caller-side chain is safe.
    p.handling = (!p.ctor_unsafe && !p.caller_unsafe) ? Handling::Encapsulation
                                                      : Handling::Delegation;
    return p;
}

namespace {

std::set<FunctionId> mut_self_methods(const facts::LibraryFacts& facts,
                                      const facts::TypeId& owner) {
    std::set<FunctionId> out;
    for (const auto& fn : facts.functions)
        if (fn.kind == facts::FnKind::DynMethod && fn.owner_type == owner && fn.takes_mut_self)
            out.insert(fn.id);
    return out;
}

std::uint64_t fnv1a(const std::string& text) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace

std::vector<BasicUnit> split_basic_units(const upg::Upg& component,
                                         const facts::LibraryFacts& facts) {
    std::vector<BasicUnit> out;

    // Origin units: every local unsafe node is an annotation root.
    for (const auto& node : component.nodes) {
        if (node.external || !node.is_unsafe) continue;
        BasicUnit u;
        u.callee = node;
        u.pattern = classify_pattern(u);
        out.push_back(std::move(u));
    }

    for (const auto& edge : component.edges) {
        if (edge.kind != EdgeKind::Call) continue;
        if (edge.dst == facts::kDerefBuiltin) continue;  // intrinsic, no unit
        const UpgNode* caller = component.find(edge.src);
        const UpgNode* callee = component.find(edge.dst);
        if (caller == nullptr || callee == nullptr) continue;

        std::vector<const UpgNode*> ctors;
        std::set<FunctionId> kill;
        if (caller->kind == NodeKind::M) {
            ctors = component.object_flow_sources(caller->func);
            const facts::FunctionFact* fn = facts.find_function(caller->func);
            if (fn != nullptr && fn->owner_type) kill = mut_self_methods(facts, *fn->owner_type);
        }

        if (ctors.empty()) {
            // Function-shaped caller (or a method of a constructor-less type).
            BasicUnit u;
            u.callee = *callee;
            u.caller = *caller;
            u.pattern = classify_pattern(u);
            out.push_back(std::move(u));
            continue;
        }
        for (const UpgNode* ctor : ctors) {
            BasicUnit u;
            u.callee = *callee;
            u.caller = *caller;
            u.ctor = *ctor;
            u.kill_context = kill;
            u.pattern = classify_pattern(u);
            out.push_back(std::move(u));
        }
    }
    return out;
}

std::string AuditFormula::render() const {
    std::ostringstream out;
    if (origin) {
        out << "RS(" << (lhs.empty() ? "?" : lhs.front()) << ") != {}";
        return out.str();
    }
    for (std::size_t i = 0; i < lhs.size(); ++i) {
        if (i) out << " + ";
        out << "RS(" << lhs[i] << ")";
    }
    out << " <= ";
    bool need_plus = false;
    if (!ctors.empty()) {
        auto ctor_text = [](const CtorTerm& c) {
            return c.is_unsafe ? "(RS(" + c.id + ") + VS(" + c.id + "))" : "VS(" + c.id + ")";
        };
        if (ctors.size() == 1) {
            const CtorTerm& c = ctors.front();
            if (c.is_unsafe)
                out << "RS(" << c.id << ") + VS(" << c.id << ")";
            else
                out << "VS(" << c.id << ")";
        } else {
            out << "(";
            for (std::size_t i = 0; i < ctors.size(); ++i) {
                if (i) out << " & ";
                out << ctor_text(ctors[i]);
            }
            out << ")";
        }
        need_plus = true;
    }
    if (caller) {
        if (need_plus) out << " + ";
        if (caller_unsafe) out << "RS(" << *caller << ") + ";
        out << "VS(" << *caller << ")";
    }
    if (subtract_ks) out << " - KS(M)";
    return out.str();
}

AuditFormula formula_of(const AuditUnit& u) {
    AuditFormula f;
    if (u.handling == Handling::Origin) {
        f.origin = true;
        for (const auto& c : u.callees) f.lhs.push_back(c.func);
        return f;
    }
    for (const auto& c : u.callees) f.lhs.push_back(c.func);
    std::sort(f.lhs.begin(), f.lhs.end());
    for (const auto& c : u.ctors) f.ctors.push_back({c.func, c.is_unsafe});
    if (u.caller) {
        f.caller = u.caller->func;
        f.caller_unsafe = u.caller->is_unsafe;
    }
    f.subtract_ks = !u.ctors.empty();
    return f;
}

std::vector<AuditUnit> merge_units(const std::vector<BasicUnit>& units) {
    std::map<FunctionId, std::vector<const BasicUnit*>> by_caller;
    std::vector<const BasicUnit*> origins;
    for (const auto& u : units) {
        if (u.caller)
            by_caller[u.caller->func].push_back(&u);
        else
            origins.push_back(&u);
    }

    auto node_less = [](const UpgNode& a, const UpgNode& b) { return a.func < b.func; };
    auto finish = [](AuditUnit unit) {
        std::string members;
        std::vector<FunctionId> ids;
        for (const auto& n : unit.callees) ids.push_back(n.func);
        for (const auto& n : unit.ctors) ids.push_back(n.func);
        if (unit.caller) ids.push_back(unit.caller->func);
        std::sort(ids.begin(), ids.end());
        ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
        for (const auto& id : ids) members += id + ";";
        std::ostringstream hex;
        hex << std::hex << fnv1a(members);
        unit.id = "au-" + hex.str();
        unit.formula = formula_of(unit);
        return unit;
    };

    std::vector<AuditUnit> out;
    for (const BasicUnit* origin : origins) {
        AuditUnit unit;
        unit.callees = {origin->callee};
        unit.handling = Handling::Origin;
        unit.pattern_names = {origin->pattern.name()};
        out.push_back(finish(std::move(unit)));
    }
    for (const auto& [caller_id, members] : by_caller) {
        AuditUnit unit;
        unit.caller = *members.front()->caller;
        std::set<std::string> names;
        std::vector<UpgNode> callees;
        std::vector<UpgNode> ctors;
        for (const BasicUnit* m : members) {
            callees.push_back(m->callee);
            if (m->ctor) ctors.push_back(*m->ctor);
            unit.kill_context.insert(m->kill_context.begin(), m->kill_context.end());
            names.insert(m->pattern.name());
        }
        std::sort(callees.begin(), callees.end(), node_less);
        callees.erase(std::unique(callees.begin(), callees.end()), callees.end());
        // Unsafe constructors first, then by id: matches the rendered formula.
        std::sort(ctors.begin(), ctors.end(), [](const UpgNode& a, const UpgNode& b) {
            if (a.is_unsafe != b.is_unsafe) return a.is_unsafe;
            return a.func < b.func;
        });
        ctors.erase(std::unique(ctors.begin(), ctors.end()), ctors.end());
        unit.callees = std::move(callees);
        unit.ctors = std::move(ctors);
        bool any_unsafe_ctor = std::any_of(unit.ctors.begin(), unit.ctors.end(),
                                           [](const UpgNode& n) { return n.is_unsafe; });
        unit.handling = (unit.caller->is_unsafe || any_unsafe_ctor) ? Handling::Delegation
                                                                    : Handling::Encapsulation;
        unit.pattern_names.assign(names.begin(), names.end());
        out.push_back(finish(std::move(unit)));
    }

    std::sort(out.begin(), out.end(), [](const AuditUnit& a, const AuditUnit& b) {
        auto key = [](const AuditUnit& u) {
            return std::make_tuple(u.caller ? u.caller->func : u.callees.front().func,
                                   u.handling == Handling::Origin ? 0 : 1,
                                   u.callees.front().func);
        };
        return key(a) < key(b);
    });
    return out;
}

}  // namespace tagaudit::units
