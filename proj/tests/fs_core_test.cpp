#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <thread>

#include "sysspec/fs_core.hpp"

using namespace sysspec;

namespace {

std::vector<std::string> p(std::initializer_list<const char*> comps) {
    return {comps.begin(), comps.end()};
}

// Canonical snapshot of the reachable tree, for equivalence oracles.
void snapshot_rec(FsState& fs, Inode* node, const std::string& prefix, std::string& out) {
    for (const auto& [name, child] : node->entries) {
        out += prefix + "/" + name + (child->kind == InodeKind::dir ? " d" : " f");
        if (child->kind == InodeKind::file) {
            std::string bytes = child->image
                                    ? [&] {
                                          auto v = child->image->read(0, child->image->size());
                                          return std::string(v.begin(), v.end());
                                      }()
                                    : child->data;
            out += " <" + bytes + ">";
        }
        out += "\n";
        if (child->kind == InodeKind::dir) snapshot_rec(fs, child, prefix + "/" + name, out);
    }
}

std::string snapshot(FsState& fs) {
    std::string out;
    snapshot_rec(fs, fs.root(), "", out);
    return out;
}

std::vector<LockEvent> events_for(const std::vector<LockEvent>& log, std::thread::id tid) {
    std::vector<LockEvent> out;
    for (const auto& e : log)
        if (e.thread == tid) out.push_back(e);
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// locate: lock coupling

TEST(LocateTest, CouplingEventSequenceMatchesReplayOracle) {
    FsState fs;
    ASSERT_EQ(fs.ins({}, "a", InodeKind::dir), 0);
    ASSERT_EQ(fs.ins(p({"a"}), "b", InodeKind::dir), 0);
    Inode* a = fs.root()->entries.at("a");
    Inode* b = a->entries.at("b");

    fs.monitor().reset();
    fs.lock_inode(fs.root());
    Inode* got = fs.locate(fs.root(), p({"a", "b"}));
    ASSERT_EQ(got, b);
    EXPECT_EQ(fs.monitor().held_count(), 1u);
    fs.unlock_inode(b);

    auto log = events_for(fs.monitor().log(), std::this_thread::get_id());
    std::vector<std::pair<LockEventKind, uint64_t>> want = {
        {LockEventKind::acquire, fs.root()->id}, {LockEventKind::acquire, a->id},
        {LockEventKind::release, fs.root()->id}, {LockEventKind::acquire, b->id},
        {LockEventKind::release, a->id},         {LockEventKind::release, b->id},
    };
    ASSERT_EQ(log.size(), want.size());
    for (size_t i = 0; i < want.size(); ++i) {
        EXPECT_EQ(log[i].kind, want[i].first) << "event " << i;
        EXPECT_EQ(log[i].subject, want[i].second) << "event " << i;
    }
    EXPECT_TRUE(fs.monitor().violations().empty());
}

TEST(LocateTest, EmptyPathReturnsCurStillLocked) {
    FsState fs;
    fs.lock_inode(fs.root());
    EXPECT_EQ(fs.locate(fs.root(), {}), fs.root());
    EXPECT_EQ(fs.monitor().held_count(), 1u);
    fs.unlock_inode(fs.root());
}

TEST(LocateTest, MissingComponentReturnsNullWithNoLockHeld) {
    FsState fs;
    fs.lock_inode(fs.root());
    EXPECT_EQ(fs.locate(fs.root(), p({"ghost"})), nullptr);
    EXPECT_TRUE(fs.monitor().none_held());
}

TEST(LocateTest, FileMidPathReturnsNullWithNoLockHeld) {
    FsState fs;
    ASSERT_EQ(fs.ins({}, "f", InodeKind::file), 0);
    fs.lock_inode(fs.root());
    EXPECT_EQ(fs.locate(fs.root(), p({"f", "x"})), nullptr);
    EXPECT_TRUE(fs.monitor().none_held());
    EXPECT_TRUE(fs.monitor().violations().empty());
}

TEST(LocateTest, NeverHoldsMoreThanTwoLocks) {
    FsState fs;
    std::vector<std::string> path;
    for (int i = 0; i < 8; ++i) {
        ASSERT_EQ(fs.ins(path, "d" + std::to_string(i), InodeKind::dir), 0);
        path.push_back("d" + std::to_string(i));
    }
    fs.lock_inode(fs.root());
    Inode* deep = fs.locate(fs.root(), path);
    ASSERT_NE(deep, nullptr);
    fs.unlock_inode(deep);
    EXPECT_LE(fs.monitor().max_held(), 2u);
    EXPECT_TRUE(fs.monitor().violations().empty());
}

// ---------------------------------------------------------------------------
// check_ins

TEST(CheckInsTest, PermittedLeavesDirLocked) {
    FsState fs;
    fs.lock_inode(fs.root());
    EXPECT_EQ(fs.check_ins(fs.root(), "new"), 0);
    EXPECT_EQ(fs.monitor().held_count(), 1u);
    fs.unlock_inode(fs.root());
}

TEST(CheckInsTest, DuplicateNameUnlocks) {
    FsState fs;
    ASSERT_EQ(fs.ins({}, "a", InodeKind::dir), 0);
    fs.lock_inode(fs.root());
    EXPECT_EQ(fs.check_ins(fs.root(), "a"), 1);
    EXPECT_TRUE(fs.monitor().none_held());
}

TEST(CheckInsTest, NonDirectoryUnlocks) {
    FsState fs;
    ASSERT_EQ(fs.ins({}, "f", InodeKind::file), 0);
    Inode* f = fs.root()->entries.at("f");
    fs.lock_inode(f);
    EXPECT_EQ(fs.check_ins(f, "x"), 1);
    EXPECT_TRUE(fs.monitor().none_held());
}

// ---------------------------------------------------------------------------
// ins / remove / rename postconditions

TEST(OpsTest, InsCreatesEntryAndReleasesAllLocks) {
    FsState fs;
    EXPECT_EQ(fs.ins({}, "a", InodeKind::dir), 0);
    EXPECT_EQ(fs.ins(p({"a"}), "f", InodeKind::file), 0);
    EXPECT_EQ(fs.ins(p({"a"}), "f", InodeKind::file), -1);  // duplicate
    EXPECT_EQ(fs.ins(p({"nope"}), "f", InodeKind::file), -1);
    EXPECT_EQ(fs.ins({}, "", InodeKind::file), -1);
    EXPECT_EQ(fs.ins({}, "a/b", InodeKind::file), -1);
    EXPECT_TRUE(fs.monitor().none_held());
    EXPECT_TRUE(fs.monitor().violations().empty());
    EXPECT_EQ(snapshot(fs), "/a d\n/a/f f <>\n");
}

TEST(OpsTest, RemoveUnlinksAndRejectsNonEmptyDir) {
    FsState fs;
    ASSERT_EQ(fs.ins({}, "a", InodeKind::dir), 0);
    ASSERT_EQ(fs.ins(p({"a"}), "f", InodeKind::file), 0);
    Inode* a = fs.root()->entries.at("a");
    Inode* f = a->entries.at("f");

    EXPECT_EQ(fs.remove({}, "a"), -1);  // non-empty
    EXPECT_EQ(fs.remove(p({"a"}), "ghost"), -1);
    EXPECT_EQ(fs.remove(p({"a"}), "f"), 0);
    EXPECT_TRUE(f->unlinked);
    EXPECT_EQ(f->parent, nullptr);
    EXPECT_EQ(fs.remove({}, "a"), 0);  // now empty
    EXPECT_TRUE(a->unlinked);
    EXPECT_TRUE(fs.monitor().violations().empty());
    EXPECT_EQ(snapshot(fs), "");
}

TEST(OpsTest, RenameMovesEntryAndUpdatesParent) {
    FsState fs;
    ASSERT_EQ(fs.ins({}, "a", InodeKind::dir), 0);
    ASSERT_EQ(fs.ins({}, "b", InodeKind::dir), 0);
    ASSERT_EQ(fs.ins(p({"a"}), "f", InodeKind::file), 0);
    Inode* b = fs.root()->entries.at("b");
    Inode* f = fs.root()->entries.at("a")->entries.at("f");

    EXPECT_EQ(fs.rename(p({"a"}), "f", p({"b"}), "g"), 0);
    EXPECT_EQ(f->parent, b);
    EXPECT_EQ(snapshot(fs), "/a d\n/b d\n/b/g f <>\n");
    EXPECT_TRUE(fs.monitor().violations().empty());
    EXPECT_TRUE(fs.check_tree());
}

TEST(OpsTest, RenameWithinSameDirectory) {
    FsState fs;
    ASSERT_EQ(fs.ins({}, "f", InodeKind::file), 0);
    EXPECT_EQ(fs.rename({}, "f", {}, "g"), 0);
    EXPECT_EQ(snapshot(fs), "/g f <>\n");
}

TEST(OpsTest, RenameFailureCases) {
    FsState fs;
    ASSERT_EQ(fs.ins({}, "a", InodeKind::dir), 0);
    ASSERT_EQ(fs.ins(p({"a"}), "b", InodeKind::dir), 0);
    ASSERT_EQ(fs.ins({}, "x", InodeKind::file), 0);

    // Moving a directory into its own descendant would create a cycle.
    EXPECT_EQ(fs.rename({}, "a", p({"a", "b"}), "a2"), -1);
    // Moving a directory onto itself.
    EXPECT_EQ(fs.rename({}, "a", p({"a"}), "a2"), -1);
    // Destination name taken.
    EXPECT_EQ(fs.rename(p({"a"}), "b", {}, "x"), -1);
    // Missing source entry / missing directories.
    EXPECT_EQ(fs.rename({}, "ghost", {}, "g"), -1);
    EXPECT_EQ(fs.rename(p({"ghost"}), "b", {}, "g"), -1);
    EXPECT_EQ(fs.rename({}, "x", p({"ghost"}), "g"), -1);

    EXPECT_TRUE(fs.check_tree());
    EXPECT_TRUE(fs.monitor().none_held());
    EXPECT_TRUE(fs.monitor().violations().empty());
}

// ---------------------------------------------------------------------------
// read / write

TEST(IoTest, ShortReadsAndZeroFilledHoles) {
    FsState fs;
    ASSERT_EQ(fs.ins({}, "f", InodeKind::file), 0);
    ASSERT_EQ(fs.write(p({"f"}), 4, "abc"), 0);

    std::string got = fs.read(p({"f"}), 0, 100);
    EXPECT_EQ(got, std::string("\0\0\0\0abc", 7));  // short read at EOF
    EXPECT_EQ(fs.read(p({"f"}), 7, 10), "");        // read at EOF
    EXPECT_EQ(fs.read(p({"f"}), 5, 1), "b");
    EXPECT_EQ(fs.read(p({"ghost"}), 0, 1), "");
    EXPECT_EQ(fs.write(p({"ghost"}), 0, "x"), -1);
    EXPECT_TRUE(fs.monitor().none_held());
}

TEST(IoTest, WriteToDirectoryFails) {
    FsState fs;
    ASSERT_EQ(fs.ins({}, "d", InodeKind::dir), 0);
    EXPECT_EQ(fs.write(p({"d"}), 0, "x"), -1);
    EXPECT_EQ(fs.read(p({"d"}), 0, 1), "");
    EXPECT_TRUE(fs.monitor().none_held());
}

TEST(IoTest, DiskBackedFilesMatchInMemorySemantics) {
    std::mt19937_64 rng(7);
    FeatureConfig cfg;
    cfg.block_map = BlockStrategy::extent;
    cfg.prealloc_enabled = true;
    cfg.delayed_enabled = true;
    SimDisk disk(4096);
    FsState with_disk(cfg, &disk);
    FsState plain;
    for (FsState* fs : {&with_disk, &plain}) ASSERT_EQ(fs->ins({}, "f", InodeKind::file), 0);

    for (int i = 0; i < 200; ++i) {
        uint64_t off = rng() % 20000;
        if (rng() % 2) {
            std::string bytes(1 + rng() % 600, char('a' + i % 26));
            ASSERT_EQ(with_disk.write(p({"f"}), off, bytes), 0);
            ASSERT_EQ(plain.write(p({"f"}), off, bytes), 0);
        } else {
            uint64_t len = rng() % 800;
            ASSERT_EQ(with_disk.read(p({"f"}), off, len), plain.read(p({"f"}), off, len))
                << "op " << i;
        }
    }
    with_disk.sync();
    EXPECT_EQ(snapshot(with_disk), snapshot(plain));
}

// ---------------------------------------------------------------------------
// concurrency invariants

TEST(ConcurrencyTest, MutationsAreBracketedByTheSubjectLock) {
    FsState fs;
    ASSERT_EQ(fs.ins({}, "a", InodeKind::dir), 0);
    ASSERT_EQ(fs.ins(p({"a"}), "f", InodeKind::file), 0);
    ASSERT_EQ(fs.write(p({"a", "f"}), 0, "hi"), 0);
    ASSERT_EQ(fs.rename(p({"a"}), "f", {}, "g"), 0);
    ASSERT_EQ(fs.remove({}, "g"), 0);

    // Replay the log: at every mutate event the same thread must have an
    // unmatched acquire on the same subject.
    std::map<std::thread::id, std::multiset<uint64_t>> held;
    size_t mutations = 0;
    for (const auto& e : fs.monitor().log()) {
        auto& h = held[e.thread];
        switch (e.kind) {
            case LockEventKind::acquire: h.insert(e.subject); break;
            case LockEventKind::release: h.erase(h.find(e.subject)); break;
            case LockEventKind::mutate:
                ++mutations;
                EXPECT_TRUE(h.count(e.subject)) << "unlocked mutation of " << e.subject;
                break;
            default: break;
        }
    }
    EXPECT_GE(mutations, 6u);
    EXPECT_TRUE(fs.monitor().violations().empty());
}

TEST(ConcurrencyTest, StressKeepsHygieneAndTreeInvariant) {
    FsState fs;
    fs.monitor().enable_log(false);
    for (int i = 0; i < 4; ++i)
        ASSERT_EQ(fs.ins({}, "d" + std::to_string(i), InodeKind::dir), 0);

    std::atomic<long> ins_ok{0}, rm_ok{0};
    auto worker = [&](int seed) {
        std::mt19937_64 rng(seed);
        for (int i = 0; i < 800; ++i) {
            std::string dir = "d" + std::to_string(rng() % 4);
            std::string name = "n" + std::to_string(rng() % 6);
            switch (rng() % 4) {
                case 0:
                    if (fs.ins(p({dir.c_str()}), name, InodeKind::file) == 0) ins_ok++;
                    break;
                case 1:
                    if (fs.remove(p({dir.c_str()}), name) == 0) rm_ok++;
                    break;
                case 2: {
                    std::string dst = "d" + std::to_string(rng() % 4);
                    fs.rename(p({dir.c_str()}), name, p({dst.c_str()}), name + "r");
                    if (fs.remove(p({dst.c_str()}), name + "r") == 0) rm_ok++;
                    break;
                }
                case 3:
                    fs.write(p({dir.c_str(), name.c_str()}), 0, "x");
                    fs.read(p({dir.c_str(), name.c_str()}), 0, 4);
                    break;
            }
        }
    };
    std::vector<std::thread> threads;
    for (int t = 0; t < 4; ++t) threads.emplace_back(worker, 100 + t);
    for (auto& t : threads) t.join();

    EXPECT_TRUE(fs.monitor().violations().empty());
    EXPECT_TRUE(fs.monitor().none_held());
    EXPECT_TRUE(fs.check_tree());
    // Count oracle: root + 4 fixed dirs + net successful file insertions.
    EXPECT_EQ(fs.live_inode_count(), 5u + ins_ok.load() - rm_ok.load());
}

TEST(ConcurrencyTest, SmallScheduleMatchesSomeSerialOrder) {
    // Three concurrent two-op scripts; the final tree must equal the outcome
    // of at least one serial permutation of the six operations.
    using Op = std::function<void(FsState&)>;
    std::vector<Op> ops = {
        [](FsState& fs) { fs.ins({}, "a", InodeKind::dir); },
        [](FsState& fs) { fs.ins(p({"a"}), "f", InodeKind::file); },
        [](FsState& fs) { fs.ins({}, "b", InodeKind::dir); },
        [](FsState& fs) { fs.rename(p({"a"}), "f", p({"b"}), "g"); },
        [](FsState& fs) { fs.write(p({"b", "g"}), 0, "z"); },
        [](FsState& fs) { fs.remove({}, "a"); },
    };

    std::set<std::string> serial_outcomes;
    std::vector<int> order(ops.size());
    std::iota(order.begin(), order.end(), 0);
    // Only permutations preserving each thread's program order are legal:
    // thread 0 runs ops 0,1; thread 1 ops 2,3; thread 2 ops 4,5.
    do {
        auto pos = [&](int op) {
            return std::find(order.begin(), order.end(), op) - order.begin();
        };
        if (pos(0) > pos(1) || pos(2) > pos(3) || pos(4) > pos(5)) continue;
        FsState fs;
        for (int op : order) ops[op](fs);
        serial_outcomes.insert(snapshot(fs));
    } while (std::next_permutation(order.begin(), order.end()));

    for (int trial = 0; trial < 50; ++trial) {
        FsState fs;
        std::vector<std::thread> threads;
        for (int t = 0; t < 3; ++t)
            threads.emplace_back([&, t] {
                ops[2 * t](fs);
                ops[2 * t + 1](fs);
            });
        for (auto& th : threads) th.join();
        EXPECT_TRUE(serial_outcomes.count(snapshot(fs)))
            << "trial " << trial << " produced non-serializable state:\n" << snapshot(fs);
        EXPECT_TRUE(fs.monitor().violations().empty());
    }
}

TEST(ConcurrencyTest, CrossingRenamesDoNotDeadlock) {
    FsState fs;
    ASSERT_EQ(fs.ins({}, "a", InodeKind::dir), 0);
    ASSERT_EQ(fs.ins({}, "b", InodeKind::dir), 0);
    ASSERT_EQ(fs.ins(p({"a"}), "x", InodeKind::file), 0);
    ASSERT_EQ(fs.ins(p({"b"}), "y", InodeKind::file), 0);
    fs.monitor().enable_log(false);

    auto shuttle = [&](const char* from, const char* to, const char* name, int n) {
        for (int i = 0; i < n; ++i) {
            fs.rename(p({from}), name, p({to}), name);
            fs.rename(p({to}), name, p({from}), name);
        }
    };
    std::thread t1(shuttle, "a", "b", "x", 2000);
    std::thread t2(shuttle, "b", "a", "y", 2000);
    t1.join();
    t2.join();

    EXPECT_TRUE(fs.monitor().violations().empty());
    EXPECT_TRUE(fs.check_tree());
    EXPECT_EQ(fs.live_inode_count(), 5u);
}

// ---------------------------------------------------------------------------
// dentry cache

TEST(DcacheTest, HitIncrementsRefcountExactlyOnce) {
    FsState fs;
    Dcache& dc = fs.dcache();
    DcacheEntry* e = dc.insert(fs.root(), "hello");
    DcacheEntry* got = fs.dcache_lookup(fs.root(), qname_of("hello"));
    ASSERT_EQ(got, e);
    EXPECT_EQ(e->d_count.load(), 1);
    fs.dcache_lookup(fs.root(), qname_of("hello"));
    EXPECT_EQ(e->d_count.load(), 2);
}

TEST(DcacheTest, WrongParentMisses) {
    FsState fs;
    ASSERT_EQ(fs.ins({}, "d", InodeKind::dir), 0);
    Inode* d = fs.root()->entries.at("d");
    DcacheEntry* e = fs.dcache().insert(d, "x");
    EXPECT_EQ(fs.dcache_lookup(fs.root(), qname_of("x")), nullptr);
    EXPECT_EQ(e->d_count.load(), 0);
}

TEST(DcacheTest, UnhashedEntryIsSkippedButLaterMatchWins) {
    FsState fs;
    Dcache& dc = fs.dcache();
    DcacheEntry* stale = dc.insert(fs.root(), "name");
    DcacheEntry* live = dc.insert(fs.root(), "name");
    dc.unhash(stale);
    DcacheEntry* got = fs.dcache_lookup(fs.root(), qname_of("name"));
    EXPECT_EQ(got, live);
    EXPECT_EQ(stale->d_count.load(), 0);
    EXPECT_EQ(live->d_count.load(), 1);

    dc.unhash(live);
    EXPECT_EQ(fs.dcache_lookup(fs.root(), qname_of("name")), nullptr);
}

TEST(DcacheTest, ParentChangeBetweenScanAndLockIsCaught) {
    // A racing rename retargets the entry after the bucket scan saw it but
    // before its d_lock is taken; the re-check under d_lock must reject it.
    FsState fs;
    ASSERT_EQ(fs.ins({}, "other", InodeKind::dir), 0);
    Inode* other = fs.root()->entries.at("other");
    Dcache& dc = fs.dcache();
    DcacheEntry* e = dc.insert(fs.root(), "moved");

    bool fired = false;
    dc.on_candidate = [&](DcacheEntry* cand) {
        if (fired || cand != e) return;
        fired = true;
        std::thread mover([&] { dc.set_parent(e, other); });
        mover.join();
    };
    EXPECT_EQ(fs.dcache_lookup(fs.root(), qname_of("moved")), nullptr);
    EXPECT_TRUE(fired);
    EXPECT_EQ(e->d_count.load(), 0);

    dc.on_candidate = nullptr;
    EXPECT_EQ(fs.dcache_lookup(other, qname_of("moved")), e);
    EXPECT_EQ(e->d_count.load(), 1);
}

TEST(DcacheTest, LockNestingOrderIsReadSectionThenEntryLock) {
    FsState fs;
    fs.dcache().insert(fs.root(), "n");
    fs.monitor().reset();
    fs.dcache_lookup(fs.root(), qname_of("n"));

    auto log = events_for(fs.monitor().log(), std::this_thread::get_id());
    ASSERT_EQ(log.size(), 4u);
    EXPECT_EQ(log[0].kind, LockEventKind::read_enter);
    EXPECT_EQ(log[1].kind, LockEventKind::acquire);
    EXPECT_EQ(log[2].kind, LockEventKind::release);
    EXPECT_EQ(log[3].kind, LockEventKind::read_exit);
    EXPECT_EQ(log[1].subject, log[2].subject);
    EXPECT_TRUE(fs.monitor().violations().empty());
}

TEST(DcacheTest, ConcurrentLookupsCountEveryHit) {
    FsState fs;
    DcacheEntry* e = fs.dcache().insert(fs.root(), "hot");
    constexpr int kThreads = 8, kLookups = 500;
    std::vector<std::thread> threads;
    for (int t = 0; t < kThreads; ++t)
        threads.emplace_back([&] {
            for (int i = 0; i < kLookups; ++i)
                ASSERT_EQ(fs.dcache_lookup(fs.root(), qname_of("hot")), e);
        });
    for (auto& t : threads) t.join();
    EXPECT_EQ(e->d_count.load(), kThreads * kLookups);
    EXPECT_TRUE(fs.monitor().violations().empty());
}

// ---------------------------------------------------------------------------
// monitor

TEST(MonitorTest, ReleasingUnheldLockIsAViolation) {
    LockMonitor m;
    m.on_acquire(1);
    m.on_release(1);
    EXPECT_TRUE(m.violations().empty());
    m.on_release(2);
    ASSERT_EQ(m.violations().size(), 1u);
    EXPECT_NE(m.violations()[0].find("not held"), std::string::npos);
}

TEST(MonitorTest, UnlockedMutationIsAViolation) {
    LockMonitor m;
    m.on_acquire(5);
    m.on_mutate(5);
    EXPECT_TRUE(m.violations().empty());
    m.on_mutate(6);
    EXPECT_EQ(m.violations().size(), 1u);
}
