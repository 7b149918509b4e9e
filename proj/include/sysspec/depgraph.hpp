#pragma once

// Rely-guarantee dependency graph over a SpecDocument: edge construction,
// entailment reporting and deterministic generation order. Matching is
// name/signature based; semantic implication between contracts is out of
// scope.

#include <algorithm>
#include <map>
#include <queue>
#include <set>
#include <string>
#include <vector>

#include "sysspec/spec_model.hpp"

namespace sysspec {

struct DepEdge {
    std::string consumer;
    std::string provider;
    std::string witness;  // rendered rely item, e.g. "func locate(...)"
    bool operator==(const DepEdge&) const = default;
};

struct DependencyGraph {
    std::vector<std::string> nodes;  // sorted module names
    std::vector<DepEdge> edges;      // sorted (consumer, provider, witness)
    bool operator==(const DependencyGraph&) const = default;
};

struct RelyItem {
    std::string module;  // consumer
    std::string item;    // rendered form
    bool operator==(const RelyItem&) const = default;
    auto operator<=>(const RelyItem&) const = default;
};

struct EntailmentReport {
    std::vector<std::pair<RelyItem, std::string>> satisfied;  // item -> unique provider
    std::vector<RelyItem> unsatisfied;
    std::vector<std::pair<RelyItem, std::vector<std::string>>> ambiguous;

    bool clean() const { return unsatisfied.empty() && ambiguous.empty(); }
};

namespace detail {

inline std::string render_func_item(const Signature& s) { return "func " + sig_key(s); }
inline std::string render_type_item(const std::string& name) { return "type " + name; }
inline std::string render_proto_item(const std::string& name) { return "lockproto " + name; }

// Providers of one rely item, in lexicographic module order, self excluded.
template <typename Match>
std::vector<std::string> providers_of(const SpecDocument& doc, const std::string& consumer,
                                      Match match) {
    std::vector<std::string> out;
    for (const auto& mod : doc.modules) {
        if (mod.name == consumer) continue;
        if (match(mod)) out.push_back(mod.name);
    }
    std::sort(out.begin(), out.end());
    return out;
}

template <typename Visit>
void for_each_rely_item(const ModuleSpec& mod, const SpecDocument& doc, Visit visit) {
    for (const auto& f : mod.rely.imported_functions) {
        std::string key = sig_key(f);
        visit(render_func_item(f), providers_of(doc, mod.name, [&](const ModuleSpec& p) {
                  for (const auto& g : p.guarantee.exported_functions)
                      if (sig_key(g) == key) return true;
                  return false;
              }));
    }
    for (const auto& t : mod.rely.imported_types) {
        visit(render_type_item(t.name), providers_of(doc, mod.name, [&](const ModuleSpec& p) {
                  for (const auto& g : p.guarantee.exported_types)
                      if (g.name == t.name) return true;
                  return false;
              }));
    }
    for (const auto& l : mod.rely.imported_lock_protocols) {
        visit(render_proto_item(l), providers_of(doc, mod.name, [&](const ModuleSpec& p) {
                  for (const auto& g : p.guarantee.exported_functions)
                      if (g.name == l) return true;
                  return false;
              }));
    }
}

// DFS cycle search over consumer->provider edges.
inline bool find_cycle(const std::string& node,
                       const std::map<std::string, std::set<std::string>>& adj,
                       std::set<std::string>& visiting, std::set<std::string>& done,
                       std::vector<std::string>& path) {
    if (done.count(node)) return false;
    if (!visiting.insert(node).second) {
        path.push_back(node);
        return true;
    }
    auto it = adj.find(node);
    if (it != adj.end()) {
        for (const auto& next : it->second) {
            if (find_cycle(next, adj, visiting, done, path)) {
                if (path.size() < 2 || path.front() != path.back()) path.push_back(node);
                return true;
            }
        }
    }
    visiting.erase(node);
    done.insert(node);
    return false;
}

}  // namespace detail

inline DependencyGraph build_graph(const SpecDocument& doc) {
    DependencyGraph g;
    for (const auto& mod : doc.modules) g.nodes.push_back(mod.name);
    std::sort(g.nodes.begin(), g.nodes.end());

    std::set<DepEdge, decltype([](const DepEdge& a, const DepEdge& b) {
                 return std::tie(a.consumer, a.provider, a.witness) <
                        std::tie(b.consumer, b.provider, b.witness);
             })>
        edges;
    for (const auto& mod : doc.modules) {
        detail::for_each_rely_item(
            mod, doc, [&](const std::string& item, const std::vector<std::string>& providers) {
                for (const auto& p : providers) edges.insert({mod.name, p, item});
            });
    }
    g.edges.assign(edges.begin(), edges.end());

    std::map<std::string, std::set<std::string>> adj;
    for (const auto& e : g.edges) adj[e.consumer].insert(e.provider);
    std::set<std::string> visiting, done;
    for (const auto& n : g.nodes) {
        std::vector<std::string> path;
        if (detail::find_cycle(n, adj, visiting, done, path)) {
            std::reverse(path.begin(), path.end());
            throw CycleError(path);
        }
    }
    return g;
}

inline EntailmentReport check_entailment(const SpecDocument& doc) {
    EntailmentReport report;
    for (const auto& mod : doc.modules) {
        detail::for_each_rely_item(
            mod, doc, [&](const std::string& item, const std::vector<std::string>& providers) {
                RelyItem ri{mod.name, item};
                if (providers.empty()) report.unsatisfied.push_back(ri);
                else if (providers.size() == 1) report.satisfied.emplace_back(ri, providers[0]);
                else report.ambiguous.emplace_back(ri, providers);
            });
    }
    // Stable under module reordering in the document.
    std::sort(report.satisfied.begin(), report.satisfied.end());
    std::sort(report.unsatisfied.begin(), report.unsatisfied.end());
    std::sort(report.ambiguous.begin(), report.ambiguous.end());
    return report;
}

// Providers precede consumers; ties broken lexicographically by module name.
inline std::vector<std::string> topo_order(const DependencyGraph& graph) {
    std::map<std::string, int> pending;  // unfinished providers per consumer
    std::map<std::string, std::set<std::string>> consumers_of;
    for (const auto& n : graph.nodes) pending[n] = 0;
    for (const auto& e : graph.edges) {
        if (consumers_of[e.provider].insert(e.consumer).second) ++pending[e.consumer];
    }
    std::priority_queue<std::string, std::vector<std::string>, std::greater<>> ready;
    for (const auto& [n, deg] : pending)
        if (deg == 0) ready.push(n);
    std::vector<std::string> order;
    while (!ready.empty()) {
        std::string n = ready.top();
        ready.pop();
        order.push_back(n);
        for (const auto& c : consumers_of[n])
            if (--pending[c] == 0) ready.push(c);
    }
    if (order.size() != graph.nodes.size()) {
        std::vector<std::string> stuck;
        for (const auto& [n, deg] : pending)
            if (deg > 0) stuck.push_back(n);
        throw CycleError(stuck);
    }
    return order;
}

}  // namespace sysspec
