#include "tagaudit/upg.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace tagaudit::upg {

using facts::FnKind;
using facts::FunctionFact;
using facts::FunctionId;
using facts::LibraryFacts;
using facts::Safety;

std::string_view to_string(NodeKind k) {
    switch (k) {
        case NodeKind::F: return "F";
        case NodeKind::M: return "M";
        case NodeKind::C: return "C";
        case NodeKind::CLiteral: return "C_l";
    }
    return "F";
}

std::string UpgNode::label() const {
    std::string out = func;
    out += " [";
    out += to_string(kind);
    out += is_unsafe ? ",u]" : ",s]";
    return out;
}

const UpgNode* Upg::find(const FunctionId& id) const {
    auto it = std::lower_bound(nodes.begin(), nodes.end(), id,
                               [](const UpgNode& n, const FunctionId& v) { return n.func < v; });
    if (it != nodes.end() && it->func == id) return &*it;
    return nullptr;
}

bool Upg::has_edge(const FunctionId& src, const FunctionId& dst, EdgeKind kind) const {
    UpgEdge probe{src, dst, kind};
    return std::binary_search(edges.begin(), edges.end(), probe);
}

std::vector<const UpgNode*> Upg::object_flow_sources(const FunctionId& dst) const {
    std::vector<const UpgNode*> out;
    for (const auto& e : edges)
        if (e.kind == EdgeKind::ObjectFlow && e.dst == dst) out.push_back(find(e.src));
    return out;
}

namespace {

NodeKind node_kind_of(const FunctionFact& f) {
    switch (f.kind) {
        case FnKind::DynMethod: return NodeKind::M;
        case FnKind::Constructor: return NodeKind::C;
        case FnKind::LiteralConstructor: return NodeKind::CLiteral;
        case FnKind::Function:
        case FnKind::StaticMethod: return NodeKind::F;
    }
    return NodeKind::F;
}

bool has_unsafe_marker(const FunctionFact& f) {
    return f.safety == Safety::Unsafe || !f.unsafe_callsites.empty();
}

class Builder {
  public:
    Builder(const LibraryFacts& f, const tagdb::TagDatabase& db) : facts_(f), db_(db) {}

    Upg run() {
        std::vector<const FunctionFact*> callers;
        for (const auto& fn : facts_.functions)
            if (has_unsafe_marker(fn)) callers.push_back(&fn);

        for (const FunctionFact* caller : callers) {
            add_local_node(*caller);
            if (caller->kind == FnKind::DynMethod) add_object_flows(*caller);
            for (const auto& site : caller->unsafe_callsites)
                for (const FunctionId& callee : resolve_callee(site)) add_call(*caller, callee);
        }
        return finish();
    }

  private:
    const LibraryFacts& facts_;
    const tagdb::TagDatabase& db_;
    std::map<FunctionId, UpgNode> nodes_;
    std::set<UpgEdge> edges_;

    void add_local_node(const FunctionFact& f) {
        nodes_.emplace(f.id, UpgNode{f.id, node_kind_of(f), f.safety == Safety::Unsafe, false});
    }

    void add_external_node(const FunctionId& id) {
        // External callees reached through an unsafe call site are assumed
        // unsafe; they enter the graph as plain function nodes.
        nodes_.emplace(id, UpgNode{id, NodeKind::F, true, true});
    }

    void add_object_flows(const FunctionFact& method) {
        const facts::TypeFact* owner = facts_.find_type(*method.owner_type);
        if (owner == nullptr || owner->constructors.empty()) return;
        std::set<FunctionId> api = facts::api_set_of(owner->id, facts_);
        for (const FunctionId& ctor_id : owner->constructors) {
            const FunctionFact* ctor = facts_.find_function(ctor_id);
            if (ctor == nullptr) continue;
            add_local_node(*ctor);
            for (const FunctionId& member_id : api) {
                const FunctionFact* member = facts_.find_function(member_id);
                if (member == nullptr || member_id == ctor_id) continue;
                add_local_node(*member);
                edges_.insert(UpgEdge{ctor_id, member_id, EdgeKind::ObjectFlow});
            }
        }
    }

    std::vector<FunctionId> resolve_callee(const facts::CallSiteFact& site) {
        switch (site.kind) {
            case facts::CallSiteFact::Kind::Direct:
                return {site.callee};
            case facts::CallSiteFact::Kind::GenericTraitMethod: {
                auto it = facts_.trait_impls.find(site.trait_name + "::" + site.method_name);
                if (it != facts_.trait_impls.end()) return it->second;
                // No local implementation: keep the trait method as an
                // external target so the callee stays visible.
                return {site.trait_name + "::" + site.method_name};
            }
            case facts::CallSiteFact::Kind::FnParam: {
                std::vector<FunctionId> out;
                for (const auto& fn : facts_.functions)
                    if (!fn.signature.empty() && fn.signature == site.signature)
                        out.push_back(fn.id);
                return out;
            }
        }
        return {};
    }

    void add_call(const FunctionFact& caller, const FunctionId& callee) {
        const FunctionFact* local = facts_.find_function(callee);
        if (local != nullptr) {
            // Call edges only target unsafe callees.
            if (local->safety != Safety::Unsafe) return;
            add_local_node(*local);
        } else {
            add_external_node(callee);
        }
        edges_.insert(UpgEdge{caller.id, callee, EdgeKind::Call});
    }

    Upg finish() {
        Upg g;
        g.nodes.reserve(nodes_.size());
        for (const auto& [id, node] : nodes_) g.nodes.push_back(node);
        g.edges.assign(edges_.begin(), edges_.end());
        return g;
    }
};

}  // namespace

Upg build_upg(const LibraryFacts& f, const tagdb::TagDatabase& db) {
    return Builder(f, db).run();
}

std::vector<Upg> components(const Upg& g) {
    std::map<FunctionId, FunctionId> parent;
    for (const auto& n : g.nodes) parent[n.func] = n.func;

    std::function<FunctionId(FunctionId)> find_root = [&](FunctionId x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    };
    auto unite = [&](const FunctionId& a, const FunctionId& b) {
        FunctionId ra = find_root(a);
        FunctionId rb = find_root(b);
        if (ra == rb) return;
        // Keep the lexicographically least id as the representative.
        if (rb < ra) std::swap(ra, rb);
        parent[rb] = ra;
    };
    for (const auto& e : g.edges) unite(e.src, e.dst);

    std::map<FunctionId, Upg> buckets;
    for (const auto& n : g.nodes) buckets[find_root(n.func)].nodes.push_back(n);
    for (const auto& e : g.edges) buckets[find_root(e.src)].edges.push_back(e);

    std::vector<Upg> out;
    for (auto& [root, comp] : buckets) {
        std::sort(comp.nodes.begin(), comp.nodes.end(),
                  [](const UpgNode& a, const UpgNode& b) { return a.func < b.func; });
        std::sort(comp.edges.begin(), comp.edges.end());
        out.push_back(std::move(comp));
    }
    return out;  // map iteration is already ordered by least id
}

std::string to_dot(const Upg& g) {
    std::ostringstream out;
    out << "digraph upg {\n";
    out << "  rankdir=LR;\n";
    for (const auto& n : g.nodes) out << "  \"" << n.func << "\" [label=\"" << n.label() << "\"];\n";
    for (const auto& e : g.edges) {
        out << "  \"" << e.src << "\" -> \"" << e.dst << "\"";
        if (e.kind == EdgeKind::ObjectFlow) out << " [style=dashed]";
        out << ";\n";
    }
    out << "}\n";
    return out.str();
}

}  // namespace tagaudit::upg
