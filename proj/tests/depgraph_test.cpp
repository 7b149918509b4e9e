#include "sysspec/depgraph.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace sysspec;

namespace {

std::string fixture(const std::string& rel) { return std::string(FIXTURE_DIR) + "/" + rel; }

bool has_edge(const DependencyGraph& g, const std::string& consumer,
              const std::string& provider) {
    for (const auto& e : g.edges)
        if (e.consumer == consumer && e.provider == provider) return true;
    return false;
}

TEST(BuildGraph, AtomfsInsReliesOnTraversal) {
    SpecDocument doc = load_spec_dir(fixture("atomfs"));
    DependencyGraph g = build_graph(doc);
    EXPECT_TRUE(has_edge(g, "ins", "traversal"));
    EXPECT_FALSE(has_edge(g, "traversal", "ins"));
    bool witness_locate = false;
    for (const auto& e : g.edges)
        if (e.consumer == "ins" && e.witness.find("locate") != std::string::npos)
            witness_locate = true;
    EXPECT_TRUE(witness_locate);
}

TEST(BuildGraph, SingleModuleNoEdges) {
    SpecDocument doc = parse_spec("[MODULE] m\n");
    DependencyGraph g = build_graph(doc);
    EXPECT_EQ(g.nodes.size(), 1u);
    EXPECT_TRUE(g.edges.empty());
}

TEST(BuildGraph, TwoModuleCycleDetected) {
    const char* src =
        "[MODULE] a\n\n[RELY]\nfunc fb() -> int\n\n[GUARANTEE]\nfunc fa() -> int\n\n"
        "[SPEC] fa() -> int\nPost-condition:\nCase 1: ok\n  Return: 0\n\n"
        "[MODULE] b\n\n[RELY]\nfunc fa() -> int\n\n[GUARANTEE]\nfunc fb() -> int\n\n"
        "[SPEC] fb() -> int\nPost-condition:\nCase 1: ok\n  Return: 0\n";
    SpecDocument doc = parse_spec(src);
    EXPECT_TRUE(check_wellformed(doc).empty());
    EXPECT_THROW(build_graph(doc), CycleError);
    // Both orderings of the same cycle are rejected.
    std::swap(doc.modules[0], doc.modules[1]);
    EXPECT_THROW(build_graph(doc), CycleError);
}

TEST(Entailment, BaseFixtureClean) {
    SpecDocument doc = load_spec_dir(fixture("specfs_base"));
    ASSERT_TRUE(check_wellformed(doc).empty());
    EntailmentReport report = check_entailment(doc);
    EXPECT_TRUE(report.unsatisfied.empty()) << report.unsatisfied.size();
    EXPECT_TRUE(report.ambiguous.empty());
}

TEST(Entailment, DeletedGuaranteeBecomesUnsatisfied) {
    SpecDocument doc = load_spec_dir(fixture("atomfs"));
    ModuleSpec* trav = doc.find_module("traversal");
    std::erase_if(trav->guarantee.exported_functions,
                  [](const Signature& s) { return s.name == "check_ins"; });
    EntailmentReport report = check_entailment(doc);
    bool found = false;
    for (const auto& ri : report.unsatisfied)
        if (ri.module == "ins" && ri.item.find("check_ins") != std::string::npos) found = true;
    EXPECT_TRUE(found);
}

TEST(Entailment, TwoProvidersAmbiguous) {
    SpecDocument doc = load_spec_dir(fixture("atomfs"));
    // Clone traversal's locate export into a second provider.
    ModuleSpec clone = *doc.find_module("traversal");
    clone.name = "traversal_alt";
    doc.modules.push_back(clone);
    EntailmentReport report = check_entailment(doc);
    bool found = false;
    for (const auto& [ri, providers] : report.ambiguous)
        if (ri.module == "ins" && ri.item.find("locate") != std::string::npos) {
            found = true;
            EXPECT_EQ(providers.size(), 2u);
        }
    EXPECT_TRUE(found);
}

TEST(Entailment, StableUnderModuleReordering) {
    SpecDocument doc = load_spec_dir(fixture("specfs_base"));
    EntailmentReport before = check_entailment(doc);
    std::mt19937 rng(3);
    std::shuffle(doc.modules.begin(), doc.modules.end(), rng);
    EntailmentReport after = check_entailment(doc);
    EXPECT_EQ(before.satisfied, after.satisfied);
    EXPECT_EQ(before.unsatisfied, after.unsatisfied);
}

TEST(Entailment, PartitionCoversAllRelyItems) {
    SpecDocument doc = load_spec_dir(fixture("specfs_base"));
    EntailmentReport r = check_entailment(doc);
    size_t total = 0;
    for (const auto& mod : doc.modules)
        total += mod.rely.imported_functions.size() + mod.rely.imported_types.size() +
                 mod.rely.imported_lock_protocols.size();
    EXPECT_EQ(r.satisfied.size() + r.unsatisfied.size() + r.ambiguous.size(), total);
}

TEST(TopoOrder, ProviderFirst) {
    SpecDocument doc = load_spec_dir(fixture("atomfs"));
    auto order = topo_order(build_graph(doc));
    ASSERT_EQ(order.size(), 2u);
    EXPECT_EQ(order[0], "traversal");
    EXPECT_EQ(order[1], "ins");
}

TEST(TopoOrder, LexicographicTieBreak) {
    SpecDocument doc = parse_spec("[MODULE] zed\n\n[MODULE] apple\n\n[MODULE] mango\n");
    auto order = topo_order(build_graph(doc));
    EXPECT_EQ(order, (std::vector<std::string>{"apple", "mango", "zed"}));
}

TEST(TopoOrder, BaseFixtureRespectsLayers) {
    SpecDocument doc = load_spec_dir(fixture("specfs_base"));
    auto order = topo_order(build_graph(doc));
    auto pos = [&](const std::string& n) {
        return std::find(order.begin(), order.end(), n) - order.begin();
    };
    EXPECT_LT(pos("lowlevel_file"), pos("inode_management"));
    EXPECT_LT(pos("inode_management"), pos("file_ops"));
    EXPECT_LT(pos("dir_ops"), pos("vfs_interface"));
}

// --- Random DAG properties -------------------------------------------------

TEST(Property, RandomDagsTopoOrderIsValid) {
    std::mt19937 rng(11);
    for (int iter = 0; iter < 100; ++iter) {
        int n = 2 + rng() % 10;
        DependencyGraph g;
        for (int i = 0; i < n; ++i) g.nodes.push_back("m" + std::to_string(i));
        std::sort(g.nodes.begin(), g.nodes.end());
        // Edges only from higher to lower index keep the graph acyclic.
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < i; ++j)
                if (rng() % 3 == 0)
                    g.edges.push_back({"m" + std::to_string(i), "m" + std::to_string(j), "w"});
        auto order = topo_order(g);
        ASSERT_EQ(order.size(), g.nodes.size());
        std::map<std::string, size_t> pos;
        for (size_t i = 0; i < order.size(); ++i) pos[order[i]] = i;
        for (const auto& e : g.edges) ASSERT_LT(pos[e.provider], pos[e.consumer]);
    }
}

TEST(Property, RemovingUsedGuaranteeBreaksEntailment) {
    SpecDocument base = load_spec_dir(fixture("specfs_base"));
    EntailmentReport clean = check_entailment(base);
    ASSERT_TRUE(clean.clean());
    std::mt19937 rng(13);
    for (int iter = 0; iter < 30; ++iter) {
        SpecDocument doc = base;
        // Pick a random used export and delete it.
        auto& [item, provider] = clean.satisfied[rng() % clean.satisfied.size()];
        ModuleSpec* mod = doc.find_module(provider);
        ASSERT_NE(mod, nullptr);
        if (item.item.starts_with("type ")) {
            std::string name = item.item.substr(5);
            std::erase_if(mod->guarantee.exported_types,
                          [&](const TypeDecl& t) { return t.name == name; });
        } else if (item.item.starts_with("func ")) {
            std::string key = item.item.substr(5);
            std::erase_if(mod->guarantee.exported_functions,
                          [&](const Signature& s) { return sig_key(s) == key; });
        } else {
            continue;  // lockproto items share their function's export
        }
        EXPECT_FALSE(check_entailment(doc).unsatisfied.empty()) << item.item;
    }
}

}  // namespace
