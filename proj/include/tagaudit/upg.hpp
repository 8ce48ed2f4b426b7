#pragma once

// Unsafety propagation graph: call edges into unsafe callees plus object-flow
// edges from constructors to the method API set of their type.

#include "tagaudit/facts.hpp"
#include "tagaudit/tagdb.hpp"

#include <optional>
#include <string>
#include <vector>

namespace tagaudit::upg {

enum class NodeKind { F, M, C, CLiteral };

std::string_view to_string(NodeKind k);

struct UpgNode {
    facts::FunctionId func;
    NodeKind kind = NodeKind::F;
    bool is_unsafe = false;
    bool external = false;

    bool operator==(const UpgNode&) const = default;
    std::string label() const;  // "path [kind,safety]"
};

enum class EdgeKind { Call, ObjectFlow };

struct UpgEdge {
    facts::FunctionId src;
    facts::FunctionId dst;
    EdgeKind kind = EdgeKind::Call;

    auto operator<=>(const UpgEdge&) const = default;
};

struct Upg {
    std::vector<UpgNode> nodes;  // sorted by func id
    std::vector<UpgEdge> edges;  // sorted, unique

    const UpgNode* find(const facts::FunctionId& id) const;
    bool has_edge(const facts::FunctionId& src, const facts::FunctionId& dst,
                  EdgeKind kind) const;
    std::vector<const UpgNode*> object_flow_sources(const facts::FunctionId& dst) const;

    bool operator==(const Upg&) const = default;
};

/// Builds the propagation graph: seeds every function carrying an unsafe
/// marker (unsafe fns and fns with unsafe call sites), attaches object-flow
/// edges from each dyn-method caller's constructors to the owner's API set,
/// and adds call edges to unsafe callees, expanding generic trait-method
/// callees to all local implementations and fn-param callees to all local
/// functions with the same signature text.
Upg build_upg(const facts::LibraryFacts& f, const tagdb::TagDatabase& db);

/// Weakly-connected components, ordered by least function id.
std::vector<Upg> components(const Upg& g);

/// Deterministic DOT rendering; object-flow edges are dashed.
std::string to_dot(const Upg& g);

}  // namespace tagaudit::upg
