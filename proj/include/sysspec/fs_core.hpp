#pragma once

// Concurrent in-memory file system with per-inode exclusive locks and
// lock-coupling traversal, instrumented by a runtime lock-discipline monitor,
// plus a dentry cache combining a shared per-bucket read section with
// per-entry locks.
//
// Rename locking: a global rename serializer plus a pair-locking rule for the
// two directories — ancestor before descendant when related (matching the
// top-down coupling order), ascending inode id when unrelated. Everything is
// re-validated after the locks are held.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

#include "sysspec/fs_features.hpp"

namespace sysspec {

// ---------------------------------------------------------------------------
// Lock monitor

enum class LockEventKind { acquire, release, read_enter, read_exit, mutate };

struct LockEvent {
    uint64_t ordinal = 0;
    std::thread::id thread;
    uint64_t subject = 0;  // inode id, dentry id, or bucket id
    LockEventKind kind = LockEventKind::acquire;
};

class LockMonitor {
  public:
    void enable_log(bool on) {
        std::lock_guard lock(mu_);
        logging_ = on;
    }

    void on_acquire(uint64_t subject) {
        std::lock_guard lock(mu_);
        auto& held = held_[std::this_thread::get_id()];
        held.insert(subject);
        max_held_ = std::max(max_held_, held.size());
        record(subject, LockEventKind::acquire);
    }

    void on_release(uint64_t subject) {
        std::lock_guard lock(mu_);
        auto& held = held_[std::this_thread::get_id()];
        auto it = held.find(subject);
        if (it == held.end())
            violations_.push_back("release of lock " + std::to_string(subject) +
                                  " that is not held");
        else
            held.erase(it);
        record(subject, LockEventKind::release);
    }

    void on_read_enter(uint64_t subject) {
        std::lock_guard lock(mu_);
        read_depth_[std::this_thread::get_id()]++;
        record(subject, LockEventKind::read_enter);
    }

    void on_read_exit(uint64_t subject) {
        std::lock_guard lock(mu_);
        auto& d = read_depth_[std::this_thread::get_id()];
        if (d == 0)
            violations_.push_back("read-section exit without enter on " +
                                  std::to_string(subject));
        else
            --d;
        record(subject, LockEventKind::read_exit);
    }

    // A mutation of `subject` must happen while its lock is held by the
    // mutating thread.
    void on_mutate(uint64_t subject) {
        std::lock_guard lock(mu_);
        const auto& held = held_[std::this_thread::get_id()];
        if (!held.count(subject))
            violations_.push_back("mutation of " + std::to_string(subject) +
                                  " without holding its lock");
        record(subject, LockEventKind::mutate);
    }

    void flag(const std::string& violation) {
        std::lock_guard lock(mu_);
        violations_.push_back(violation);
    }

    size_t held_count() const {
        std::lock_guard lock(mu_);
        auto it = held_.find(std::this_thread::get_id());
        return it == held_.end() ? 0 : it->second.size();
    }

    bool none_held() const { return held_count() == 0; }

    size_t max_held() const {
        std::lock_guard lock(mu_);
        return max_held_;
    }

    std::vector<std::string> violations() const {
        std::lock_guard lock(mu_);
        return violations_;
    }

    std::vector<LockEvent> log() const {
        std::lock_guard lock(mu_);
        return log_;
    }

    void reset() {
        std::lock_guard lock(mu_);
        log_.clear();
        violations_.clear();
        held_.clear();
        read_depth_.clear();
        max_held_ = 0;
        ordinal_ = 0;
    }

  private:
    void record(uint64_t subject, LockEventKind kind) {
        if (!logging_) {
            ++ordinal_;
            return;
        }
        log_.push_back({ordinal_++, std::this_thread::get_id(), subject, kind});
    }

    mutable std::mutex mu_;
    bool logging_ = true;
    uint64_t ordinal_ = 0;
    std::vector<LockEvent> log_;
    std::vector<std::string> violations_;
    std::map<std::thread::id, std::multiset<uint64_t>> held_;
    std::map<std::thread::id, size_t> read_depth_;
    size_t max_held_ = 0;
};

// ---------------------------------------------------------------------------
// Inodes

enum class InodeKind { dir, file };

struct Inode {
    uint64_t id = 0;
    InodeKind kind = InodeKind::dir;
    std::map<std::string, Inode*> entries;  // dir only
    std::string data;                       // file only, when no disk attached
    std::unique_ptr<FileImage> image;       // file only, when a disk is attached
    Inode* parent = nullptr;
    bool unlinked = false;
    Timestamps times;
    std::mutex mtx;
};

// ---------------------------------------------------------------------------
// Dentry cache (64-bucket open hash, shared bucket read section + d_lock)

struct Qname {
    uint32_t hash = 0;
    uint32_t len = 0;
    std::string bytes;
};

inline uint32_t fnv1a(std::string_view s) {
    uint32_t h = 2166136261u;
    for (unsigned char c : s) {
        h ^= c;
        h *= 16777619u;
    }
    return h;
}

inline Qname qname_of(std::string_view name) {
    return {fnv1a(name), static_cast<uint32_t>(name.size()), std::string(name)};
}

struct DcacheEntry {
    uint64_t id = 0;  // monitor subject for d_lock
    Qname d_name;
    Inode* d_parent = nullptr;
    std::atomic<int> d_count{0};
    std::mutex d_lock;
    bool unhashed = false;
};

class Dcache {
  public:
    static constexpr size_t kBuckets = 64;
    // Monitor subjects: buckets use [kBucketBase, +64), entries their own id.
    static constexpr uint64_t kBucketBase = 1u << 20;

    explicit Dcache(LockMonitor& monitor) : monitor_(&monitor) {}

    // Test hook, invoked for each hash-matching candidate inside the read
    // section before its d_lock is taken.
    std::function<void(DcacheEntry*)> on_candidate;

    DcacheEntry* insert(Inode* parent, std::string_view name) {
        auto entry = std::make_unique<DcacheEntry>();
        entry->id = next_id_.fetch_add(1);
        entry->d_name = qname_of(name);
        entry->d_parent = parent;
        DcacheEntry* raw = entry.get();
        Bucket& bucket = buckets_[raw->d_name.hash % kBuckets];
        std::unique_lock write(bucket.mu);
        bucket.chain.push_back(raw);
        std::lock_guard own(owned_mu_);
        owned_.push_back(std::move(entry));
        return raw;
    }

    DcacheEntry* lookup(Inode* parent, const Qname& q) {
        Bucket& bucket = buckets_[q.hash % kBuckets];
        uint64_t bucket_subject = kBucketBase + q.hash % kBuckets;
        std::shared_lock read(bucket.mu);
        monitor_->on_read_enter(bucket_subject);
        DcacheEntry* found = nullptr;
        for (DcacheEntry* entry : bucket.chain) {
            if (entry->d_name.hash != q.hash) continue;
            if (on_candidate) on_candidate(entry);
            entry->d_lock.lock();
            monitor_->on_acquire(entry->id);
            // Re-check under d_lock: the parent link, the full name, and the
            // hash-table membership may all have changed since the scan.
            bool hit = entry->d_parent == parent && entry->d_name.len == q.len &&
                       entry->d_name.bytes == q.bytes && !entry->unhashed;
            if (hit) entry->d_count.fetch_add(1);
            monitor_->on_release(entry->id);
            entry->d_lock.unlock();
            if (hit) {
                found = entry;
                break;
            }
        }
        monitor_->on_read_exit(bucket_subject);
        return found;
    }

    void unhash(DcacheEntry* entry) {
        std::lock_guard lock(entry->d_lock);
        monitor_->on_acquire(entry->id);
        entry->unhashed = true;
        monitor_->on_mutate(entry->id);
        monitor_->on_release(entry->id);
    }

    void set_parent(DcacheEntry* entry, Inode* parent) {
        std::lock_guard lock(entry->d_lock);
        monitor_->on_acquire(entry->id);
        entry->d_parent = parent;
        monitor_->on_mutate(entry->id);
        monitor_->on_release(entry->id);
    }

  private:
    struct Bucket {
        std::shared_mutex mu;
        std::vector<DcacheEntry*> chain;
    };

    LockMonitor* monitor_;
    Bucket buckets_[kBuckets];
    std::mutex owned_mu_;
    std::vector<std::unique_ptr<DcacheEntry>> owned_;
    std::atomic<uint64_t> next_id_{1u << 24};
};

// ---------------------------------------------------------------------------
// File system state

class FsState {
  public:
    explicit FsState(FeatureConfig cfg = {}, SimDisk* disk = nullptr)
        : cfg_(cfg), disk_(disk), pool_(cfg.pool_org), delay_(cfg.delayed_limit),
          dcache_(monitor_) {
        root_ = alloc_inode(InodeKind::dir);
    }

    LockMonitor& monitor() { return monitor_; }
    Dcache& dcache() { return dcache_; }
    Inode* root() { return root_; }

    // Monitored lock helpers, for callers driving locate directly.
    void lock_inode(Inode* ino) { lock(ino); }
    void unlock_inode(Inode* ino) { unlock(ino); }

    // Pre: cur is locked and is the only lock held. Lock coupling: the child
    // is acquired before the parent is released, so at most two inode locks
    // are ever held. On null, no lock is held; otherwise only the target's.
    Inode* locate(Inode* cur, const std::vector<std::string>& path) {
        for (const auto& comp : path) {
            if (cur->kind != InodeKind::dir) {
                unlock(cur);
                return nullptr;
            }
            auto it = cur->entries.find(comp);
            if (it == cur->entries.end()) {
                unlock(cur);
                return nullptr;
            }
            Inode* child = it->second;
            lock(child);
            if (monitor_.held_count() > 2)
                monitor_.flag("more than two locks held during traversal");
            unlock(cur);
            cur = child;
        }
        return cur;
    }

    // Pre: dir is locked. 0 = insertion permitted (dir stays locked);
    // 1 = rejected (dir unlocked).
    int check_ins(Inode* dir, const std::string& name) {
        if (dir->kind != InodeKind::dir || dir->entries.count(name)) {
            unlock(dir);
            return 1;
        }
        return 0;
    }

    int ins(const std::vector<std::string>& path, const std::string& name, InodeKind kind) {
        if (!valid_name(name)) return -1;
        OpGuard guard(*this);
        lock(root_);
        Inode* dir = locate(root_, path);
        if (!dir) return -1;
        if (check_ins(dir, name) == 1) return -1;
        Inode* child = alloc_inode(kind);
        child->parent = dir;
        dir->entries[name] = child;
        monitor_.on_mutate(dir->id);
        unlock(dir);
        return 0;
    }

    int remove(const std::vector<std::string>& path, const std::string& name) {
        OpGuard guard(*this);
        lock(root_);
        Inode* dir = locate(root_, path);
        if (!dir) return -1;
        if (dir->kind != InodeKind::dir) {
            unlock(dir);
            return -1;
        }
        auto it = dir->entries.find(name);
        if (it == dir->entries.end()) {
            unlock(dir);
            return -1;
        }
        Inode* child = it->second;
        lock(child);
        if (child->kind == InodeKind::dir && !child->entries.empty()) {
            unlock(child);
            unlock(dir);
            return -1;
        }
        dir->entries.erase(it);
        monitor_.on_mutate(dir->id);
        child->unlinked = true;
        child->parent = nullptr;
        monitor_.on_mutate(child->id);
        unlock(child);
        unlock(dir);
        return 0;
    }

    int rename(const std::vector<std::string>& src_path, const std::string& src_name,
               const std::vector<std::string>& dst_path, const std::string& dst_name) {
        if (!valid_name(dst_name)) return -1;
        OpGuard guard(*this);
        std::lock_guard serial(rename_mu_);

        Inode* src_dir = resolve_dir(src_path);
        if (!src_dir) return -1;
        Inode* dst_dir = resolve_dir(dst_path);
        if (!dst_dir) return -1;

        lock_pair(src_dir, dst_dir);
        auto unlock_pair = [&] {
            unlock(src_dir);
            if (dst_dir != src_dir) unlock(dst_dir);
        };

        // Everything was resolved before the locks were held; re-validate.
        auto it = src_dir->entries.find(src_name);
        if (src_dir->unlinked || dst_dir->unlinked || src_dir->kind != InodeKind::dir ||
            dst_dir->kind != InodeKind::dir || it == src_dir->entries.end() ||
            dst_dir->entries.count(dst_name)) {
            unlock_pair();
            return -1;
        }
        Inode* child = it->second;
        // Moving a directory under itself or its own descendant makes a cycle.
        if (child == dst_dir || is_ancestor(child, dst_dir)) {
            unlock_pair();
            return -1;
        }
        src_dir->entries.erase(it);
        monitor_.on_mutate(src_dir->id);
        dst_dir->entries[dst_name] = child;
        monitor_.on_mutate(dst_dir->id);
        lock(child);
        child->parent = dst_dir;
        monitor_.on_mutate(child->id);
        unlock(child);
        unlock_pair();
        return 0;
    }

    int write(const std::vector<std::string>& path, uint64_t off, const std::string& bytes) {
        OpGuard guard(*this);
        lock(root_);
        Inode* ino = locate(root_, path);
        if (!ino) return -1;
        if (ino->kind != InodeKind::file) {
            unlock(ino);
            return -1;
        }
        if (ino->image) {
            ino->image->write(off, {bytes.begin(), bytes.end()});
        } else {
            if (ino->data.size() < off + bytes.size()) ino->data.resize(off + bytes.size(), 0);
            std::copy(bytes.begin(), bytes.end(), ino->data.begin() + off);
        }
        monitor_.on_mutate(ino->id);
        unlock(ino);
        return 0;
    }

    // Short read past EOF; holes read as zeros. Empty on missing path.
    std::string read(const std::vector<std::string>& path, uint64_t off, uint64_t len) {
        OpGuard guard(*this);
        lock(root_);
        Inode* ino = locate(root_, path);
        if (!ino) return "";
        if (ino->kind != InodeKind::file) {
            unlock(ino);
            return "";
        }
        std::string out;
        if (ino->image) {
            uint64_t avail = off >= ino->image->size() ? 0 : ino->image->size() - off;
            auto bytes = ino->image->read(off, std::min(len, avail));
            out.assign(bytes.begin(), bytes.end());
        } else if (off < ino->data.size()) {
            out = ino->data.substr(off, len);
        }
        unlock(ino);
        return out;
    }

    DcacheEntry* dcache_lookup(Inode* parent, const Qname& q) {
        OpGuard guard(*this);
        return dcache_.lookup(parent, q);
    }

    void sync() {
        if (disk_ && cfg_.delayed_enabled) {
            // Flushing resolves physical blocks via each file's own map.
            std::lock_guard lock(inodes_mu_);
            for (const auto& ino : inodes_)
                if (ino->image) ino->image->sync();
        }
    }

    // Tree invariant: every reachable inode has a single parent link that
    // matches the traversal edge, and the reachable graph is acyclic.
    bool check_tree() {
        std::set<const Inode*> seen;
        return check_tree_rec(root_, nullptr, seen);
    }

    uint64_t live_inode_count() {
        std::lock_guard lock(inodes_mu_);
        uint64_t n = 0;
        for (const auto& ino : inodes_)
            if (!ino->unlinked) ++n;
        return n;
    }

  private:
    // Entry/exit hygiene for every top-level operation.
    struct OpGuard {
        explicit OpGuard(FsState& fs) : fs_(fs) {
            if (!fs_.monitor_.none_held())
                fs_.monitor_.flag("locks held at operation entry");
        }
        ~OpGuard() {
            if (!fs_.monitor_.none_held())
                fs_.monitor_.flag("locks held at operation exit");
        }
        FsState& fs_;
    };

    static bool valid_name(const std::string& name) {
        return !name.empty() && name.find('/') == std::string::npos;
    }

    Inode* alloc_inode(InodeKind kind) {
        auto ino = std::make_unique<Inode>();
        ino->id = next_id_.fetch_add(1);
        ino->kind = kind;
        if (kind == InodeKind::file && disk_)
            ino->image = std::make_unique<FileImage>(
                ino->id, *disk_, cfg_, &pool_,
                cfg_.delayed_enabled ? &delay_ : nullptr);
        Inode* raw = ino.get();
        std::lock_guard lock(inodes_mu_);
        inodes_.push_back(std::move(ino));
        return raw;
    }

    void lock(Inode* ino) {
        ino->mtx.lock();
        monitor_.on_acquire(ino->id);
    }

    void unlock(Inode* ino) {
        monitor_.on_release(ino->id);
        ino->mtx.unlock();
    }

    // Resolve a directory via coupling, then drop its lock; callers must
    // re-validate under the pair locks.
    Inode* resolve_dir(const std::vector<std::string>& path) {
        lock(root_);
        Inode* dir = locate(root_, path);
        if (!dir) return nullptr;
        unlock(dir);
        return dir;
    }

    // Walks parent links; stable here because rename_mu_ serializes renames
    // and the result is re-validated under the pair locks anyway.
    static bool is_ancestor(const Inode* maybe_ancestor, const Inode* node) {
        for (const Inode* p = node->parent; p; p = p->parent)
            if (p == maybe_ancestor) return true;
        return false;
    }

    // Ancestor before descendant keeps the order compatible with top-down
    // coupling; unrelated pairs fall back to ascending inode id.
    void lock_pair(Inode* a, Inode* b) {
        if (a == b) {
            lock(a);
            return;
        }
        if (is_ancestor(a, b)) {
            lock(a);
            lock(b);
        } else if (is_ancestor(b, a)) {
            lock(b);
            lock(a);
        } else if (a->id < b->id) {
            lock(a);
            lock(b);
        } else {
            lock(b);
            lock(a);
        }
    }

    bool check_tree_rec(const Inode* node, const Inode* parent, std::set<const Inode*>& seen) {
        if (!seen.insert(node).second) return false;  // shared or cyclic
        if (node->parent != parent) return false;
        if (node->unlinked) return false;
        for (const auto& [name, child] : node->entries)
            if (!check_tree_rec(child, node, seen)) return false;
        return true;
    }

    FeatureConfig cfg_;
    SimDisk* disk_;
    PreallocPool pool_;
    DelayBuffer delay_;
    LockMonitor monitor_;
    Dcache dcache_;
    Inode* root_ = nullptr;
    std::vector<std::unique_ptr<Inode>> inodes_;
    std::mutex inodes_mu_;
    std::mutex rename_mu_;
    std::atomic<uint64_t> next_id_{1};
};

}  // namespace sysspec
