#pragma once

// Simulated block device with I/O accounting. The unit of accounting is the
// request: a bulk request covering many contiguous blocks bumps its kind
// counter once. `io_ops` additionally coalesces a mergeable request into the
// previous request of the same kind when the two are physically adjacent or
// carry the same non-zero tag, so a sequential scan through one extent costs
// a single io_op however many requests deliver it.

#include <atomic>
#include <cstdint>
#include <cstring>
#include <map>
#include <mutex>
#include <stdexcept>
#include <vector>

#include "sysspec/errors.hpp"

namespace sysspec {

struct DiskFullError : Error {
    explicit DiskFullError(uint32_t wanted)
        : Error("disk full: no free run of " + std::to_string(wanted) + " blocks") {}
};

struct RangeError : Error {
    explicit RangeError(const std::string& detail) : Error("bad range: " + detail) {}
};

enum class IoKind { data_read, data_write, meta_read, meta_write };

struct IoRequest {
    IoKind kind = IoKind::data_read;
    uint64_t block = 0;       // physical start
    uint32_t count = 1;       // contiguous blocks covered
    bool mergeable = false;   // bulk/extent-style request, may coalesce in io_ops
    uint64_t tag = 0;         // non-zero: requests with equal tags coalesce too
};

struct DiskCounters {
    uint64_t data_reads = 0;
    uint64_t data_writes = 0;
    uint64_t meta_reads = 0;
    uint64_t meta_writes = 0;
    uint64_t io_ops = 0;
    uint64_t uncontiguous_ops = 0;

    uint64_t sum() const { return data_reads + data_writes + meta_reads + meta_writes; }
};

class SimDisk {
  public:
    static constexpr uint32_t kBlockSize = 4096;
    static constexpr uint64_t kDefaultBlocks = 256ull * 1024 * 1024 / kBlockSize;

    explicit SimDisk(uint64_t total_blocks = kDefaultBlocks)
        : total_blocks_(total_blocks), allocated_(total_blocks, false) {}

    uint64_t total_blocks() const { return total_blocks_; }

    // First-fit contiguous allocation of exactly `count` blocks.
    uint64_t allocate(uint32_t count) {
        std::lock_guard lock(mu_);
        auto [start, got] = find_run(count);
        if (got < count) throw DiskFullError(count);
        mark(start, count, true);
        return start;
    }

    // First-fit for `count`; if no run that long exists, the longest free run.
    // Returns (start, length actually allocated); throws only when the disk
    // has no free block at all.
    std::pair<uint64_t, uint32_t> allocate_up_to(uint32_t count) {
        std::lock_guard lock(mu_);
        auto [start, got] = find_run(count);
        if (got == 0) throw DiskFullError(count);
        mark(start, got, true);
        return {start, got};
    }

    void release(uint64_t start, uint32_t count) {
        std::lock_guard lock(mu_);
        check_bounds(start, count);
        mark(start, count, false);
    }

    bool is_allocated(uint64_t block) const {
        std::lock_guard lock(mu_);
        return block < total_blocks_ && allocated_[block];
    }

    uint64_t allocated_blocks() const {
        std::lock_guard lock(mu_);
        uint64_t n = 0;
        for (bool b : allocated_)
            if (b) ++n;
        return n;
    }

    // Accounting without data movement.
    void submit(const IoRequest& req) {
        check_bounds(req.block, req.count);
        account(req);
    }

    void write(const IoRequest& req, const uint8_t* bytes) {
        check_bounds(req.block, req.count);
        {
            std::lock_guard lock(mu_);
            for (uint32_t i = 0; i < req.count; ++i) {
                auto& blk = data_[req.block + i];
                blk.assign(bytes + uint64_t(i) * kBlockSize,
                           bytes + uint64_t(i + 1) * kBlockSize);
            }
        }
        account(req);
    }

    void read(const IoRequest& req, uint8_t* bytes) {
        check_bounds(req.block, req.count);
        {
            std::lock_guard lock(mu_);
            for (uint32_t i = 0; i < req.count; ++i) {
                auto it = data_.find(req.block + i);
                uint8_t* dst = bytes + uint64_t(i) * kBlockSize;
                if (it == data_.end()) std::memset(dst, 0, kBlockSize);
                else std::memcpy(dst, it->second.data(), kBlockSize);
            }
        }
        account(req);
    }

    // Unaccounted access, for test oracles.
    std::vector<uint8_t> peek_block(uint64_t block) const {
        std::lock_guard lock(mu_);
        auto it = data_.find(block);
        if (it == data_.end()) return std::vector<uint8_t>(kBlockSize, 0);
        return it->second;
    }

    void note_uncontiguous() { counters_.uncontiguous_ops.fetch_add(1); }

    DiskCounters counters() const {
        DiskCounters c;
        c.data_reads = counters_.data_reads.load();
        c.data_writes = counters_.data_writes.load();
        c.meta_reads = counters_.meta_reads.load();
        c.meta_writes = counters_.meta_writes.load();
        c.io_ops = counters_.io_ops.load();
        c.uncontiguous_ops = counters_.uncontiguous_ops.load();
        return c;
    }

  private:
    struct AtomicCounters {
        std::atomic<uint64_t> data_reads{0}, data_writes{0}, meta_reads{0}, meta_writes{0},
            io_ops{0}, uncontiguous_ops{0};
    };

    void check_bounds(uint64_t start, uint32_t count) const {
        if (count == 0) throw RangeError("zero-length request");
        if (start >= total_blocks_ || total_blocks_ - start < count)
            throw RangeError("blocks [" + std::to_string(start) + ", +" +
                             std::to_string(count) + ") outside the disk");
    }

    // Caller holds mu_. Returns (start, length) of the first run of `count`
    // free blocks, or the longest free run when none reaches `count`.
    std::pair<uint64_t, uint32_t> find_run(uint32_t count) const {
        uint64_t best_start = 0;
        uint32_t best_len = 0;
        uint64_t i = 0;
        while (i < total_blocks_) {
            if (allocated_[i]) {
                ++i;
                continue;
            }
            uint64_t j = i;
            while (j < total_blocks_ && !allocated_[j] && j - i < count) ++j;
            uint32_t len = static_cast<uint32_t>(j - i);
            if (len >= count) return {i, count};
            if (len > best_len) {
                best_len = len;
                best_start = i;
            }
            while (j < total_blocks_ && allocated_[j]) ++j;
            i = j;
        }
        return {best_start, best_len};
    }

    void mark(uint64_t start, uint32_t count, bool value) {
        for (uint64_t b = start; b < start + count; ++b) allocated_[b] = value;
    }

    std::atomic<uint64_t>& kind_counter(IoKind kind) {
        switch (kind) {
            case IoKind::data_read: return counters_.data_reads;
            case IoKind::data_write: return counters_.data_writes;
            case IoKind::meta_read: return counters_.meta_reads;
            case IoKind::meta_write: return counters_.meta_writes;
        }
        return counters_.data_reads;
    }

    void account(const IoRequest& req) {
        kind_counter(req.kind).fetch_add(1);
        std::lock_guard lock(merge_mu_);
        Last& last = last_[static_cast<int>(req.kind)];
        bool merged = req.mergeable && last.valid &&
                      (req.block == last.end_block ||
                       (req.tag != 0 && req.tag == last.tag));
        if (!merged) counters_.io_ops.fetch_add(1);
        last.valid = req.mergeable;
        last.end_block = req.block + req.count;
        last.tag = req.tag;
    }

    struct Last {
        bool valid = false;
        uint64_t end_block = 0;
        uint64_t tag = 0;
    };

    uint64_t total_blocks_;
    std::vector<bool> allocated_;
    std::map<uint64_t, std::vector<uint8_t>> data_;  // sparse; absent = zeros
    AtomicCounters counters_;
    Last last_[4];
    mutable std::mutex mu_;
    mutable std::mutex merge_mu_;
};

}  // namespace sysspec
