#pragma once

// DAG-structured specification patches: leaf nodes introduce self-contained
// changes, intermediate nodes build on their children's guarantees, and each
// root node commits by substituting a new guarantee for an existing export
// with an equivalent signature.
//
// Patch file grammar (.patch.sysspec):
//
//   [PATCH] <id>
//   [NODE] <id> kind=<leaf|intermediate|root> [depends=a,b]
//   Replaces: <signature>                  (root nodes only)
//   [CHANGE] <Kind> target=<module>
//   <payload in the module grammar>
//
// Payload shape per change kind: AddModule takes a whole [MODULE] block,
// AddFunction/ReplaceFunction a [SPEC] block (plus optional [CONCURRENCY]),
// AddGuarantee/AddRely their clause entries, ModifyType a single type line.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <queue>
#include <sstream>
#include <set>
#include <string>
#include <vector>

#include "sysspec/depgraph.hpp"
#include "sysspec/spec_model.hpp"

namespace sysspec {

enum class ChangeKind { AddModule, AddFunction, ReplaceFunction, AddGuarantee, AddRely, ModifyType };

inline const char* to_string(ChangeKind k) {
    switch (k) {
        case ChangeKind::AddModule: return "AddModule";
        case ChangeKind::AddFunction: return "AddFunction";
        case ChangeKind::ReplaceFunction: return "ReplaceFunction";
        case ChangeKind::AddGuarantee: return "AddGuarantee";
        case ChangeKind::AddRely: return "AddRely";
        case ChangeKind::ModifyType: return "ModifyType";
    }
    return "";
}

inline std::optional<ChangeKind> change_kind_from(std::string_view s) {
    if (s == "AddModule") return ChangeKind::AddModule;
    if (s == "AddFunction") return ChangeKind::AddFunction;
    if (s == "ReplaceFunction") return ChangeKind::ReplaceFunction;
    if (s == "AddGuarantee") return ChangeKind::AddGuarantee;
    if (s == "AddRely") return ChangeKind::AddRely;
    if (s == "ModifyType") return ChangeKind::ModifyType;
    return std::nullopt;
}

struct ModuleChange {
    ChangeKind kind = ChangeKind::AddFunction;
    std::string target;
    // Payload; which member is live follows from `kind`.
    ModuleSpec module;
    FunctionSpec function;
    GuaranteeClause guarantee;
    RelyClause rely;
    TypeDecl type;
    bool operator==(const ModuleChange&) const = default;
};

enum class NodeKind { leaf, intermediate, root };

inline const char* to_string(NodeKind k) {
    switch (k) {
        case NodeKind::leaf: return "leaf";
        case NodeKind::intermediate: return "intermediate";
        case NodeKind::root: return "root";
    }
    return "";
}

struct PatchNode {
    std::string id;
    NodeKind kind = NodeKind::leaf;
    std::vector<std::string> depends_on;
    std::vector<ModuleChange> changes;
    std::optional<Signature> replaces_guarantee;  // root only
    bool operator==(const PatchNode&) const = default;
};

struct SpecPatch {
    std::string patch_id;
    std::vector<PatchNode> nodes;
    bool operator==(const SpecPatch&) const = default;

    const PatchNode* find_node(const std::string& id) const {
        for (const auto& n : nodes)
            if (n.id == id) return &n;
        return nullptr;
    }
    PatchNode* find_node(const std::string& id) {
        for (auto& n : nodes)
            if (n.id == id) return &n;
        return nullptr;
    }
};

struct PatchInvalidError : Error {
    explicit PatchInvalidError(const std::string& msg) : Error("invalid patch: " + msg) {}
};

struct CommitPointMismatchError : Error {
    std::string root_id, expected, found;
    CommitPointMismatchError(const std::string& root, const std::string& expected_,
                             const std::string& found_)
        : Error("commit point mismatch at root '" + root + "': expected " + expected_ +
                ", found " + found_),
          root_id(root), expected(expected_), found(found_) {}
};

struct EntailmentBrokenError : Error {
    EntailmentReport report;
    explicit EntailmentBrokenError(EntailmentReport r)
        : Error(describe(r)), report(std::move(r)) {}

  private:
    static std::string describe(const EntailmentReport& r) {
        std::string s = "entailment broken after apply:";
        for (const auto& u : r.unsatisfied) s += " [" + u.module + " misses " + u.item + "]";
        for (const auto& [a, providers] : r.ambiguous)
            s += " [" + a.module + " has " + std::to_string(providers.size()) +
                 " providers for " + a.item + "]";
        return s;
    }
};

struct ConflictingChangeError : Error {
    std::string module, function;
    ConflictingChangeError(const std::string& module_, const std::string& function_)
        : Error("conflicting changes to " + module_ + "::" + function_ +
                " from order-unrelated nodes"),
          module(module_), function(function_) {}
};

// ---------------------------------------------------------------------------
// Patch file parsing

namespace detail {

inline ModuleChange parse_change_payload(ChangeKind kind, const std::string& target,
                                         const std::string& payload, int line) {
    ModuleChange ch;
    ch.kind = kind;
    ch.target = target;
    auto wrap = [&](const char* section) {
        return parse_spec("[MODULE] __payload\n" + std::string(section) + payload);
    };
    switch (kind) {
        case ChangeKind::AddModule: {
            SpecDocument doc = parse_spec(payload);
            if (doc.modules.size() != 1)
                throw SyntaxError(line, "exactly one [MODULE] block in AddModule payload");
            ch.module = doc.modules[0];
            if (ch.module.name != target)
                throw SyntaxError(line, "AddModule target matching the module name");
            break;
        }
        case ChangeKind::AddFunction:
        case ChangeKind::ReplaceFunction: {
            SpecDocument doc = parse_spec("[MODULE] __payload\n" + payload);
            if (doc.modules[0].functions.size() != 1)
                throw SyntaxError(line, "exactly one [SPEC] block in function payload");
            ch.function = doc.modules[0].functions[0];
            break;
        }
        case ChangeKind::AddGuarantee:
            ch.guarantee = wrap("[GUARANTEE]\n").modules[0].guarantee;
            if (ch.guarantee.empty()) throw SyntaxError(line, "guarantee entries");
            break;
        case ChangeKind::AddRely:
            ch.rely = wrap("[RELY]\n").modules[0].rely;
            if (ch.rely.empty()) throw SyntaxError(line, "rely entries");
            break;
        case ChangeKind::ModifyType: {
            auto types = wrap("[TYPES]\n").modules[0].local_types;
            if (types.size() != 1) throw SyntaxError(line, "exactly one type line");
            ch.type = types[0];
            break;
        }
    }
    return ch;
}

}  // namespace detail

inline SpecPatch parse_patch(const std::string& source) {
    SpecPatch patch;
    auto lines = detail::split_lines(source);
    size_t i = 0;
    auto skip = [&] {
        while (i < lines.size()) {
            std::string t = detail::trim(lines[i]);
            if (t.empty() || t[0] == '#') ++i;
            else break;
        }
    };
    skip();
    if (i >= lines.size() || !detail::starts_with(detail::trim(lines[i]), "[PATCH]"))
        throw SyntaxError(static_cast<int>(i) + 1, "[PATCH] header");
    patch.patch_id = detail::trim(detail::trim(lines[i]).substr(7));
    ++i;
    skip();
    while (i < lines.size()) {
        std::string t = detail::trim(lines[i]);
        if (!detail::starts_with(t, "[NODE]"))
            throw SyntaxError(static_cast<int>(i) + 1, "[NODE] header");
        PatchNode node;
        for (const auto& tokraw : detail::split(detail::trim(t.substr(6)), ' ')) {
            std::string tok = detail::trim(tokraw);
            if (tok.empty()) continue;
            if (detail::starts_with(tok, "kind=")) {
                std::string k = tok.substr(5);
                if (k == "leaf") node.kind = NodeKind::leaf;
                else if (k == "intermediate") node.kind = NodeKind::intermediate;
                else if (k == "root") node.kind = NodeKind::root;
                else throw SyntaxError(static_cast<int>(i) + 1, "kind=leaf|intermediate|root");
            } else if (detail::starts_with(tok, "depends=")) {
                for (const auto& d : detail::split(tok.substr(8), ','))
                    if (!detail::trim(d).empty()) node.depends_on.push_back(detail::trim(d));
            } else if (node.id.empty()) {
                node.id = tok;
            } else {
                throw SyntaxError(static_cast<int>(i) + 1, "kind=/depends= attribute");
            }
        }
        if (node.id.empty()) throw SyntaxError(static_cast<int>(i) + 1, "node id");
        ++i;
        skip();
        if (i < lines.size() && detail::starts_with(detail::trim(lines[i]), "Replaces:")) {
            node.replaces_guarantee =
                parse_signature(detail::trim(detail::trim(lines[i]).substr(9)),
                                static_cast<int>(i) + 1);
            ++i;
            skip();
        }
        while (i < lines.size() && detail::starts_with(detail::trim(lines[i]), "[CHANGE]")) {
            std::string head = detail::trim(detail::trim(lines[i]).substr(8));
            int change_line = static_cast<int>(i) + 1;
            auto sp = head.find(' ');
            if (sp == std::string::npos) throw SyntaxError(change_line, "'Kind target=module'");
            auto kind = change_kind_from(detail::trim(head.substr(0, sp)));
            std::string rest = detail::trim(head.substr(sp));
            if (!kind || !detail::starts_with(rest, "target="))
                throw SyntaxError(change_line, "'Kind target=module'");
            std::string target = detail::trim(rest.substr(7));
            ++i;
            std::string payload;
            while (i < lines.size()) {
                std::string u = detail::trim(lines[i]);
                if (detail::starts_with(u, "[CHANGE]") || detail::starts_with(u, "[NODE]")) break;
                if (!(u.empty() && payload.empty()) && !(u.size() && u[0] == '#')) {
                    payload += lines[i];
                    payload += "\n";
                }
                ++i;
            }
            node.changes.push_back(
                detail::parse_change_payload(*kind, target, payload, change_line));
        }
        patch.nodes.push_back(std::move(node));
        skip();
    }
    return patch;
}

inline SpecPatch load_patch_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_patch(ss.str());
}

// ---------------------------------------------------------------------------
// Validation and planning

namespace detail {

// Guarantee names a change introduces (new exports visible to later nodes).
inline std::vector<std::string> introduced_guarantees(const PatchNode& node) {
    std::vector<std::string> out;
    for (const auto& ch : node.changes) {
        if (ch.kind == ChangeKind::AddGuarantee) {
            for (const auto& f : ch.guarantee.exported_functions) out.push_back(f.name);
            for (const auto& t : ch.guarantee.exported_types) out.push_back(t.name);
        } else if (ch.kind == ChangeKind::AddModule) {
            for (const auto& f : ch.module.guarantee.exported_functions) out.push_back(f.name);
            for (const auto& t : ch.module.guarantee.exported_types) out.push_back(t.name);
        }
    }
    return out;
}

inline std::vector<std::string> added_rely_names(const PatchNode& node) {
    std::vector<std::string> out;
    for (const auto& ch : node.changes) {
        const RelyClause* rely = nullptr;
        if (ch.kind == ChangeKind::AddRely) rely = &ch.rely;
        else if (ch.kind == ChangeKind::AddModule) rely = &ch.module.rely;
        if (!rely) continue;
        for (const auto& f : rely->imported_functions) out.push_back(f.name);
        for (const auto& t : rely->imported_types) out.push_back(t.name);
        for (const auto& l : rely->imported_lock_protocols) out.push_back(l);
    }
    return out;
}

}  // namespace detail

inline void validate_patch(const SpecPatch& patch) {
    if (patch.nodes.empty()) throw PatchInvalidError("patch has no nodes");
    std::set<std::string> ids;
    for (const auto& n : patch.nodes)
        if (!ids.insert(n.id).second) throw PatchInvalidError("duplicate node id '" + n.id + "'");
    for (const auto& n : patch.nodes) {
        for (const auto& d : n.depends_on)
            if (!ids.count(d)) throw DanglingDependencyError(n.id, d);
        if (n.kind == NodeKind::leaf && !n.depends_on.empty())
            throw PatchInvalidError("leaf node '" + n.id + "' has dependencies");
        if (n.kind == NodeKind::root && !n.replaces_guarantee)
            throw PatchInvalidError("root node '" + n.id + "' has no Replaces signature");
        if (n.kind != NodeKind::root && n.replaces_guarantee)
            throw PatchInvalidError("non-root node '" + n.id + "' declares Replaces");
    }

    // Acyclicity over depends_on.
    std::map<std::string, std::set<std::string>> adj;
    for (const auto& n : patch.nodes)
        for (const auto& d : n.depends_on) adj[n.id].insert(d);
    std::set<std::string> visiting, done;
    for (const auto& n : patch.nodes) {
        std::vector<std::string> path;
        if (detail::find_cycle(n.id, adj, visiting, done, path)) {
            std::reverse(path.begin(), path.end());
            throw CycleError(path);
        }
    }

    // Transitive dependency closure.
    std::map<std::string, std::set<std::string>> reach;  // node -> transitive deps
    std::function<const std::set<std::string>&(const std::string&)> closure =
        [&](const std::string& id) -> const std::set<std::string>& {
        auto it = reach.find(id);
        if (it != reach.end()) return it->second;
        std::set<std::string> acc;
        for (const auto& d : adj[id]) {
            acc.insert(d);
            const auto& sub = closure(d);
            acc.insert(sub.begin(), sub.end());
        }
        return reach.emplace(id, std::move(acc)).first->second;
    };

    bool any_root = false;
    for (const auto& n : patch.nodes) {
        if (n.kind != NodeKind::root) continue;
        any_root = true;
        bool from_leaf = false;
        for (const auto& d : closure(n.id))
            if (patch.find_node(d)->kind == NodeKind::leaf) from_leaf = true;
        if (!from_leaf)
            throw PatchInvalidError("root node '" + n.id + "' is not reachable from a leaf");
    }
    if (!any_root) throw PatchInvalidError("patch has no root node");

    // New guarantees may only be relied upon downstream of their introducer.
    for (const auto& consumer : patch.nodes) {
        const auto& deps = closure(consumer.id);
        for (const auto& name : detail::added_rely_names(consumer)) {
            for (const auto& producer : patch.nodes) {
                if (producer.id == consumer.id) continue;
                auto intro = detail::introduced_guarantees(producer);
                if (std::find(intro.begin(), intro.end(), name) != intro.end() &&
                    !deps.count(producer.id))
                    throw PatchInvalidError("node '" + consumer.id + "' relies on '" + name +
                                            "' introduced by non-dependency '" + producer.id +
                                            "'");
            }
        }
    }

    // Order-unrelated function replacements conflict.
    for (size_t a = 0; a < patch.nodes.size(); ++a) {
        for (size_t b = a + 1; b < patch.nodes.size(); ++b) {
            const auto& na = patch.nodes[a];
            const auto& nb = patch.nodes[b];
            bool related = closure(na.id).count(nb.id) || closure(nb.id).count(na.id);
            if (related) continue;
            for (const auto& ca : na.changes) {
                if (ca.kind != ChangeKind::ReplaceFunction) continue;
                for (const auto& cb : nb.changes)
                    if (cb.kind == ChangeKind::ReplaceFunction && ca.target == cb.target &&
                        ca.function.signature.name == cb.function.signature.name)
                        throw ConflictingChangeError(ca.target, ca.function.signature.name);
            }
        }
    }
}

// Topological node order: leaves first, dependencies before dependents,
// deterministic tie-break by node id.
inline std::vector<std::string> plan(const SpecPatch& patch, const SpecDocument& base) {
    validate_patch(patch);
    (void)base;
    std::map<std::string, int> pending;
    std::map<std::string, std::set<std::string>> dependents;
    for (const auto& n : patch.nodes) pending[n.id] = static_cast<int>(n.depends_on.size());
    for (const auto& n : patch.nodes)
        for (const auto& d : n.depends_on) dependents[d].insert(n.id);
    using Key = std::pair<int, std::string>;  // (0 for leaves, 1 otherwise, id)
    std::priority_queue<Key, std::vector<Key>, std::greater<>> ready;
    auto rank = [&](const std::string& id) {
        return patch.find_node(id)->kind == NodeKind::leaf ? 0 : 1;
    };
    for (const auto& [id, deg] : pending)
        if (deg == 0) ready.push({rank(id), id});
    std::vector<std::string> order;
    while (!ready.empty()) {
        auto [r, id] = ready.top();
        ready.pop();
        order.push_back(id);
        for (const auto& dep : dependents[id])
            if (--pending[dep] == 0) ready.push({rank(dep), dep});
    }
    return order;
}

// ---------------------------------------------------------------------------
// Application

// Apply a change list to a document in place. Shared by `apply` and by the
// single-node round trip of `diff`.
inline void apply_changes(SpecDocument& doc, const std::vector<ModuleChange>& changes) {
    for (const auto& ch : changes) {
        if (ch.kind == ChangeKind::AddModule) {
            if (doc.find_module(ch.target)) throw DuplicateModuleError(ch.target);
            doc.modules.push_back(ch.module);
            continue;
        }
        ModuleSpec* mod = doc.find_module(ch.target);
        if (!mod) throw PatchInvalidError("change targets unknown module '" + ch.target + "'");
        switch (ch.kind) {
            case ChangeKind::AddFunction:
                if (mod->find_function(ch.function.signature.name))
                    throw ConflictingChangeError(ch.target, ch.function.signature.name);
                mod->functions.push_back(ch.function);
                break;
            case ChangeKind::ReplaceFunction: {
                bool found = false;
                for (auto& fn : mod->functions) {
                    if (fn.signature.name == ch.function.signature.name) {
                        fn = ch.function;
                        found = true;
                    }
                }
                if (!found)
                    throw PatchInvalidError("ReplaceFunction: no function '" +
                                            ch.function.signature.name + "' in " + ch.target);
                break;
            }
            case ChangeKind::AddGuarantee:
                for (const auto& f : ch.guarantee.exported_functions)
                    mod->guarantee.exported_functions.push_back(f);
                for (const auto& t : ch.guarantee.exported_types)
                    mod->guarantee.exported_types.push_back(t);
                break;
            case ChangeKind::AddRely:
                for (const auto& f : ch.rely.imported_functions)
                    mod->rely.imported_functions.push_back(f);
                for (const auto& t : ch.rely.imported_types) mod->rely.imported_types.push_back(t);
                for (const auto& l : ch.rely.imported_lock_protocols)
                    mod->rely.imported_lock_protocols.push_back(l);
                break;
            case ChangeKind::ModifyType: {
                bool found = false;
                for (auto& t : mod->guarantee.exported_types)
                    if (t.name == ch.type.name) t = ch.type, found = true;
                for (auto& t : mod->local_types)
                    if (t.name == ch.type.name) t = ch.type, found = true;
                if (!found) mod->local_types.push_back(ch.type);
                break;
            }
            default: break;
        }
    }
}

inline SpecDocument apply(const SpecPatch& patch, const SpecDocument& base) {
    std::vector<std::string> order = plan(patch, base);
    SpecDocument doc = base;  // the input stays untouched on every error path

    for (const auto& id : order) {
        const PatchNode& node = *patch.find_node(id);

        std::vector<std::string> old_providers;
        if (node.kind == NodeKind::root) {
            std::string key = sig_key(*node.replaces_guarantee);
            for (const auto& mod : doc.modules)
                for (const auto& g : mod.guarantee.exported_functions)
                    if (sig_key(g) == key) old_providers.push_back(mod.name);
            if (old_providers.empty())
                throw CommitPointMismatchError(node.id, key, "no matching export in base");
        }

        apply_changes(doc, node.changes);

        if (node.kind == NodeKind::root) {
            std::string key = sig_key(*node.replaces_guarantee);
            // The new provider is a module this node touched that still (or
            // newly) exports the replaced signature.
            std::string new_provider;
            for (const auto& ch : node.changes) {
                bool touches = false;
                if (ch.kind == ChangeKind::AddGuarantee) {
                    for (const auto& f : ch.guarantee.exported_functions)
                        if (sig_key(f) == key) touches = true;
                } else if (ch.kind == ChangeKind::ReplaceFunction) {
                    touches = ch.function.signature.name == node.replaces_guarantee->name;
                } else if (ch.kind == ChangeKind::AddModule) {
                    for (const auto& f : ch.module.guarantee.exported_functions)
                        if (sig_key(f) == key) touches = true;
                }
                if (!touches) continue;
                std::string target = ch.kind == ChangeKind::AddModule ? ch.module.name : ch.target;
                const ModuleSpec* mod = doc.find_module(target);
                for (const auto& g : mod->guarantee.exported_functions)
                    if (sig_key(g) == key) new_provider = target;
            }
            if (new_provider.empty())
                throw CommitPointMismatchError(node.id, key,
                                               "node introduces no equivalent guarantee");
            // Commit point: the old export disappears; consumers re-resolve.
            for (auto& mod : doc.modules) {
                if (mod.name == new_provider) continue;
                std::erase_if(mod.guarantee.exported_functions,
                              [&](const Signature& s) { return sig_key(s) == key; });
            }
        }
    }

    auto diags = check_wellformed(doc);
    if (!diags.empty()) {
        std::string msg = "post-apply document ill-formed:";
        for (const auto& d : diags) msg += " [" + d.module + " " + d.rule + "]";
        throw PatchInvalidError(msg);
    }
    EntailmentReport report = check_entailment(doc);
    if (!report.clean()) throw EntailmentBrokenError(std::move(report));
    return doc;
}

// ---------------------------------------------------------------------------
// Diff

inline std::vector<ModuleChange> diff(const SpecDocument& before, const SpecDocument& after) {
    std::vector<ModuleChange> out;
    for (const auto& amod : after.modules) {
        const ModuleSpec* bmod = before.find_module(amod.name);
        if (!bmod) {
            ModuleChange ch;
            ch.kind = ChangeKind::AddModule;
            ch.target = amod.name;
            ch.module = amod;
            out.push_back(std::move(ch));
            continue;
        }
        if (*bmod == amod) continue;

        RelyClause new_rely;
        for (const auto& t : amod.rely.imported_types) {
            bool present = std::any_of(bmod->rely.imported_types.begin(),
                                       bmod->rely.imported_types.end(),
                                       [&](const TypeDecl& b) { return b == t; });
            if (!present) new_rely.imported_types.push_back(t);
        }
        for (const auto& f : amod.rely.imported_functions) {
            bool present = std::any_of(bmod->rely.imported_functions.begin(),
                                       bmod->rely.imported_functions.end(),
                                       [&](const Signature& b) { return b == f; });
            if (!present) new_rely.imported_functions.push_back(f);
        }
        for (const auto& l : amod.rely.imported_lock_protocols) {
            bool present = std::any_of(bmod->rely.imported_lock_protocols.begin(),
                                       bmod->rely.imported_lock_protocols.end(),
                                       [&](const std::string& b) { return b == l; });
            if (!present) new_rely.imported_lock_protocols.push_back(l);
        }
        if (!new_rely.empty()) {
            ModuleChange ch;
            ch.kind = ChangeKind::AddRely;
            ch.target = amod.name;
            ch.rely = new_rely;
            out.push_back(std::move(ch));
        }

        for (const auto& fn : amod.functions) {
            const FunctionSpec* bfn = bmod->find_function(fn.signature.name);
            if (!bfn) {
                ModuleChange ch;
                ch.kind = ChangeKind::AddFunction;
                ch.target = amod.name;
                ch.function = fn;
                out.push_back(std::move(ch));
            } else if (*bfn != fn) {
                ModuleChange ch;
                ch.kind = ChangeKind::ReplaceFunction;
                ch.target = amod.name;
                ch.function = fn;
                out.push_back(std::move(ch));
            }
        }

        GuaranteeClause new_guar;
        for (const auto& f : amod.guarantee.exported_functions) {
            bool present = std::any_of(bmod->guarantee.exported_functions.begin(),
                                       bmod->guarantee.exported_functions.end(),
                                       [&](const Signature& b) { return b == f; });
            if (!present) new_guar.exported_functions.push_back(f);
        }
        for (const auto& t : amod.guarantee.exported_types) {
            const TypeDecl* bt = nullptr;
            for (const auto& b : bmod->guarantee.exported_types)
                if (b.name == t.name) bt = &b;
            if (!bt) new_guar.exported_types.push_back(t);
            else if (!(*bt == t)) {
                ModuleChange ch;
                ch.kind = ChangeKind::ModifyType;
                ch.target = amod.name;
                ch.type = t;
                out.push_back(std::move(ch));
            }
        }
        if (!new_guar.empty()) {
            ModuleChange ch;
            ch.kind = ChangeKind::AddGuarantee;
            ch.target = amod.name;
            ch.guarantee = new_guar;
            out.push_back(std::move(ch));
        }

        for (const auto& t : amod.local_types) {
            const TypeDecl* bt = nullptr;
            for (const auto& b : bmod->local_types)
                if (b.name == t.name) bt = &b;
            if (!bt || !(*bt == t)) {
                ModuleChange ch;
                ch.kind = ChangeKind::ModifyType;
                ch.target = amod.name;
                ch.type = t;
                out.push_back(std::move(ch));
            }
        }
    }
    return out;
}

}  // namespace sysspec
