#pragma once

// Evolvable data-path features over SimDisk: block-map strategies (indirect,
// extent, inline), multi-block pre-allocation with list vs ordered-tree
// pools, delayed write-back buffering, CRC-32 metadata checksums and
// nanosecond timestamps. FileImage composes them into one file's read/write
// path; strategies are behaviorally equivalent and differ only in disk
// counters.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "sysspec/blockdev.hpp"
#include "sysspec/detail/crc32.hpp"

namespace sysspec {

enum class BlockStrategy { indirect, extent, inline_data };
enum class PoolOrg { list, ordered_tree };

struct FeatureConfig {
    BlockStrategy block_map = BlockStrategy::indirect;
    uint32_t inline_threshold = 128;  // 0 disables inline storage
    bool prealloc_enabled = false;
    PoolOrg pool_org = PoolOrg::list;
    bool delayed_enabled = false;
    uint32_t delayed_limit = 64;
    bool checksums = true;
    bool timestamps = true;

    static FeatureConfig from_json(const nlohmann::json& j) {
        FeatureConfig cfg;
        if (j.contains("block_map")) {
            std::string s = j.at("block_map").get<std::string>();
            if (s == "indirect") cfg.block_map = BlockStrategy::indirect;
            else if (s == "extent") cfg.block_map = BlockStrategy::extent;
            else throw Error("block_map must be indirect|extent, got '" + s + "'");
        }
        cfg.inline_threshold = j.value("inline_threshold", cfg.inline_threshold);
        if (j.contains("prealloc")) {
            const auto& p = j.at("prealloc");
            cfg.prealloc_enabled = p.value("enabled", false);
            std::string pool = p.value("pool", "list");
            if (pool == "list") cfg.pool_org = PoolOrg::list;
            else if (pool == "tree") cfg.pool_org = PoolOrg::ordered_tree;
            else throw Error("prealloc.pool must be list|tree, got '" + pool + "'");
        }
        if (j.contains("delayed")) {
            const auto& d = j.at("delayed");
            cfg.delayed_enabled = d.value("enabled", false);
            cfg.delayed_limit = d.value("limit_blocks", cfg.delayed_limit);
        }
        cfg.checksums = j.value("checksums", cfg.checksums);
        cfg.timestamps = j.value("timestamps", cfg.timestamps);
        return cfg;
    }
};

// ---------------------------------------------------------------------------
// Block maps

struct Extent {
    uint64_t logical_start = 0;
    uint64_t physical_start = 0;
    uint32_t length = 0;
    bool operator==(const Extent&) const = default;

    bool covers(uint64_t logical) const {
        return logical >= logical_start && logical < logical_start + length;
    }
};

struct BlockMapHandle {
    BlockStrategy strategy = BlockStrategy::indirect;
    uint64_t file_id = 0;
    std::map<uint64_t, uint64_t> blocks;  // indirect: logical -> physical
    std::vector<Extent> extents;          // sorted by logical_start, disjoint
    std::vector<uint8_t> inline_buf;
    uint64_t file_size = 0;  // bytes

    std::optional<uint64_t> lookup(uint64_t logical) const {
        if (strategy == BlockStrategy::indirect) {
            auto it = blocks.find(logical);
            if (it == blocks.end()) return std::nullopt;
            return it->second;
        }
        for (const auto& e : extents)
            if (e.covers(logical)) return e.physical_start + (logical - e.logical_start);
        return std::nullopt;
    }

    uint64_t mapped_blocks() const {
        if (strategy == BlockStrategy::indirect) return blocks.size();
        uint64_t n = 0;
        for (const auto& e : extents) n += e.length;
        return n;
    }
};

namespace detail {

// One index node covers this many logical mappings (indirect strategy).
inline constexpr uint64_t kIndexFanout = 1024;

inline uint64_t meta_tag(uint64_t file_id, uint64_t key) {
    return (file_id + 1) * 1000003ull + key + 1;
}

}  // namespace detail

// Data requests covering [logical_start, +count) blocks. Indirect emits one
// request per block, extent one bulk request per covering fragment, inline
// none.
inline std::vector<IoRequest> map_requests(const BlockMapHandle& handle, IoKind kind,
                                           uint64_t logical_start, uint32_t count) {
    if (logical_start + count < logical_start) throw RangeError("logical range overflows");
    std::vector<IoRequest> out;
    // Inline files own no disk blocks; their reads are served from inline_buf.
    if (handle.strategy == BlockStrategy::inline_data) return out;
    uint64_t logical = logical_start;
    uint64_t end = logical_start + count;
    while (logical < end) {
        auto phys = handle.lookup(logical);
        if (!phys)
            throw RangeError("logical block " + std::to_string(logical) + " is unmapped");
        if (handle.strategy == BlockStrategy::indirect) {
            out.push_back({kind, *phys, 1, false, 0});
            ++logical;
        } else {
            // Extend the fragment while the same extent keeps covering.
            uint64_t run = 1;
            while (logical + run < end) {
                auto next = handle.lookup(logical + run);
                if (!next || *next != *phys + run) break;
                ++run;
            }
            out.push_back({kind, *phys, static_cast<uint32_t>(run), true, 0});
            logical += run;
        }
    }
    return out;
}

inline std::vector<IoRequest> map_read(const BlockMapHandle& handle, uint64_t logical_start,
                                       uint32_t count) {
    return map_requests(handle, IoKind::data_read, logical_start, count);
}

inline std::vector<IoRequest> map_write(const BlockMapHandle& handle, uint64_t logical_start,
                                        uint32_t count) {
    return map_requests(handle, IoKind::data_write, logical_start, count);
}

// Metadata requests for the index structures backing a logical range:
// indirect touches one non-mergeable op per index node, extent one mergeable
// op per extent record.
inline std::vector<IoRequest> meta_requests(const BlockMapHandle& handle, bool for_write,
                                            uint64_t logical_start, uint32_t count) {
    IoKind kind = for_write ? IoKind::meta_write : IoKind::meta_read;
    std::vector<IoRequest> out;
    if (handle.strategy == BlockStrategy::inline_data) return out;
    if (handle.strategy == BlockStrategy::indirect) {
        std::set<uint64_t> nodes;
        for (uint64_t l = logical_start; l < logical_start + count; ++l)
            nodes.insert(l / detail::kIndexFanout);
        for (uint64_t n : nodes)
            out.push_back({kind, 0, 1, false, detail::meta_tag(handle.file_id, n)});
    } else {
        for (const auto& e : handle.extents) {
            if (e.logical_start >= logical_start + count ||
                e.logical_start + e.length <= logical_start)
                continue;
            out.push_back(
                {kind, 0, 1, true, detail::meta_tag(handle.file_id, e.logical_start)});
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Pre-allocation pool

struct PoolRun {
    uint64_t logical_start = 0;
    uint64_t physical_start = 0;
    uint32_t length = 0;
    bool operator==(const PoolRun&) const = default;
};

class PreallocPool {
  public:
    explicit PreallocPool(PoolOrg org) : org_(org) {}

    void reserve(PoolRun run) {
        if (run.length == 0) return;
        std::lock_guard lock(mu_);
        if (org_ == PoolOrg::list) {
            runs_.push_back(run);
        } else {
            auto it = std::lower_bound(runs_.begin(), runs_.end(), run,
                                       [](const PoolRun& a, const PoolRun& b) {
                                           return a.logical_start < b.logical_start;
                                       });
            runs_.insert(it, run);
        }
    }

    // Exact covering take: a run containing the whole requested range, or null.
    std::optional<PoolRun> take(uint64_t logical_start, uint32_t length) {
        std::lock_guard lock(mu_);
        size_t i = locate(logical_start);
        if (i == npos) return std::nullopt;
        const PoolRun& run = runs_[i];
        if (logical_start + length > run.logical_start + run.length) return std::nullopt;
        return split_out(i, logical_start, length);
    }

    // Take whatever the covering run offers at `logical_start`, up to max_len.
    std::optional<PoolRun> take_up_to(uint64_t logical_start, uint32_t max_len) {
        std::lock_guard lock(mu_);
        size_t i = locate(logical_start);
        if (i == npos) return std::nullopt;
        const PoolRun& run = runs_[i];
        uint64_t avail = run.logical_start + run.length - logical_start;
        return split_out(i, logical_start,
                         static_cast<uint32_t>(std::min<uint64_t>(avail, max_len)));
    }

    uint64_t visit_counter() const {
        std::lock_guard lock(mu_);
        return visits_;
    }

    size_t size() const {
        std::lock_guard lock(mu_);
        return runs_.size();
    }

    std::vector<PoolRun> runs() const {
        std::lock_guard lock(mu_);
        return runs_;
    }

    PoolOrg organization() const { return org_; }

  private:
    static constexpr size_t npos = static_cast<size_t>(-1);

    // Index of the run covering `logical`, or npos; bumps visits_ once per
    // node inspected. The list variant scans linearly; the tree variant
    // descends the sorted order by comparison.
    size_t locate(uint64_t logical) {
        if (org_ == PoolOrg::list) {
            for (size_t i = 0; i < runs_.size(); ++i) {
                ++visits_;
                if (runs_[i].logical_start <= logical &&
                    logical < runs_[i].logical_start + runs_[i].length)
                    return i;
            }
            return npos;
        }
        size_t lo = 0, hi = runs_.size();
        while (lo < hi) {
            size_t mid = (lo + hi) / 2;
            ++visits_;
            if (runs_[mid].logical_start <= logical) lo = mid + 1;
            else hi = mid;
        }
        if (lo == 0) return npos;
        const PoolRun& cand = runs_[lo - 1];
        return logical < cand.logical_start + cand.length ? lo - 1 : npos;
    }

    // Remove [logical_start, +length) from run i, keeping any prefix/suffix.
    PoolRun split_out(size_t i, uint64_t logical_start, uint32_t length) {
        PoolRun run = runs_[i];
        runs_.erase(runs_.begin() + static_cast<ptrdiff_t>(i));
        uint64_t offset = logical_start - run.logical_start;
        PoolRun taken{logical_start, run.physical_start + offset, length};
        PoolRun prefix{run.logical_start, run.physical_start, static_cast<uint32_t>(offset)};
        uint64_t tail = run.length - offset - length;
        PoolRun suffix{logical_start + length, taken.physical_start + length,
                       static_cast<uint32_t>(tail)};
        for (const PoolRun& rest : {prefix, suffix}) {
            if (rest.length == 0) continue;
            if (org_ == PoolOrg::list) {
                runs_.push_back(rest);
            } else {
                auto it = std::lower_bound(runs_.begin(), runs_.end(), rest,
                                           [](const PoolRun& a, const PoolRun& b) {
                                               return a.logical_start < b.logical_start;
                                           });
                runs_.insert(it, rest);
            }
        }
        return taken;
    }

    PoolOrg org_;
    std::vector<PoolRun> runs_;  // list: insertion order; tree: sorted by logical
    uint64_t visits_ = 0;
    mutable std::mutex mu_;
};

// ---------------------------------------------------------------------------
// Extent allocation

namespace detail {

inline void insert_extent(BlockMapHandle& handle, Extent ext) {
    auto& v = handle.extents;
    auto it = std::lower_bound(v.begin(), v.end(), ext,
                               [](const Extent& a, const Extent& b) {
                                   return a.logical_start < b.logical_start;
                               });
    it = v.insert(it, ext);
    // Merge with the successor, then the predecessor, when both logically
    // and physically adjacent.
    if (it + 1 != v.end() && it->logical_start + it->length == (it + 1)->logical_start &&
        it->physical_start + it->length == (it + 1)->physical_start) {
        it->length += (it + 1)->length;
        it = v.erase(it + 1) - 1;
    }
    if (it != v.begin()) {
        auto prev = it - 1;
        if (prev->logical_start + prev->length == it->logical_start &&
            prev->physical_start + prev->length == it->physical_start) {
            prev->length += it->length;
            v.erase(it);
        }
    }
}

}  // namespace detail

// Cap on the extra blocks reserved into the pool per allocation.
inline constexpr uint32_t kPreallocCap = 16;

// Map [logical_start, +length) to physical blocks: pool runs first, then
// fresh first-fit allocation, with new extents merged into the handle.
// Returns the extents created by this call. When `reserve_into` is given,
// each fresh allocation of k blocks reserves up to min(k, 16) further blocks
// into the pool at the following logical position.
inline std::vector<Extent> extent_allocate(BlockMapHandle& handle, SimDisk& disk,
                                           uint64_t logical_start, uint32_t length,
                                           PreallocPool* pool = nullptr,
                                           bool reserve_into = false) {
    if (length == 0) throw RangeError("zero-length allocation");
    std::vector<Extent> created;
    uint64_t logical = logical_start;
    uint32_t remaining = length;
    while (remaining > 0) {
        if (handle.lookup(logical)) throw RangeError("logical block already mapped");
        Extent ext;
        if (pool) {
            if (auto run = pool->take_up_to(logical, remaining)) {
                ext = {run->logical_start, run->physical_start, run->length};
            }
        }
        if (ext.length == 0) {
            auto [start, got] = disk.allocate_up_to(remaining);
            ext = {logical, start, got};
            if (pool && reserve_into) {
                uint32_t extra = std::min(got, kPreallocCap);
                try {
                    auto [pstart, pgot] = disk.allocate_up_to(extra);
                    pool->reserve({logical + got, pstart, pgot});
                } catch (const DiskFullError&) {
                    // Reservation is best-effort.
                }
            }
        }
        detail::insert_extent(handle, ext);
        if (!created.empty() && created.back().logical_start + created.back().length ==
                                    ext.logical_start &&
            created.back().physical_start + created.back().length == ext.physical_start) {
            created.back().length += ext.length;
        } else {
            created.push_back(ext);
        }
        logical += ext.length;
        remaining -= ext.length;
    }
    return created;
}

// ---------------------------------------------------------------------------
// Delayed allocation buffer

class DelayBuffer {
  public:
    using Block = std::vector<uint8_t>;
    // Maps (file id, logical block) to the physical block, allocating when
    // needed; called at flush time.
    using Resolve = std::function<uint64_t(uint64_t file, uint64_t block)>;

    explicit DelayBuffer(uint32_t size_limit = 64) : size_limit_(size_limit) {}

    // Buffer a whole-block write. Inserting a new block into a full buffer
    // flushes first, so `pending ≤ size_limit` holds between operations and
    // a workload touching ≤ size_limit distinct blocks only flushes on sync.
    void write(uint64_t file, uint64_t block, Block bytes, SimDisk& disk,
               const Resolve& resolve) {
        std::lock_guard lock(mu_);
        auto key = std::make_pair(file, block);
        auto it = pending_.find(key);
        if (it != pending_.end()) {
            ++absorbed_writes_;
            it->second = std::move(bytes);
            return;
        }
        if (pending_.size() >= size_limit_) flush_locked(disk, resolve);
        pending_.emplace(key, std::move(bytes));
    }

    size_t flush(SimDisk& disk, const Resolve& resolve) {
        std::lock_guard lock(mu_);
        return flush_locked(disk, resolve);
    }

    std::optional<Block> peek(uint64_t file, uint64_t block) const {
        std::lock_guard lock(mu_);
        auto it = pending_.find({file, block});
        if (it == pending_.end()) return std::nullopt;
        return it->second;
    }

    size_t size() const {
        std::lock_guard lock(mu_);
        return pending_.size();
    }

    uint64_t flush_count() const { return flush_count_; }
    uint64_t absorbed_writes() const { return absorbed_writes_; }

  private:
    // Caller holds mu_. Resolution happens before anything is dropped, so a
    // DiskFull during allocation leaves the buffer intact.
    size_t flush_locked(SimDisk& disk, const Resolve& resolve) {
        if (pending_.empty()) return 0;
        std::vector<std::pair<uint64_t, const Block*>> placed;  // physical -> bytes
        placed.reserve(pending_.size());
        for (const auto& [key, bytes] : pending_)
            placed.emplace_back(resolve(key.first, key.second), &bytes);
        std::sort(placed.begin(), placed.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });

        size_t flushed = placed.size();
        size_t i = 0;
        while (i < placed.size()) {
            size_t j = i + 1;
            while (j < placed.size() && placed[j].first == placed[i].first + (j - i)) ++j;
            Block bulk;
            bulk.reserve((j - i) * SimDisk::kBlockSize);
            for (size_t k = i; k < j; ++k) {
                const Block& b = *placed[k].second;
                bulk.insert(bulk.end(), b.begin(), b.end());
                bulk.resize((k - i + 1) * SimDisk::kBlockSize, 0);
            }
            disk.write({IoKind::data_write, placed[i].first,
                        static_cast<uint32_t>(j - i), true, 0},
                       bulk.data());
            i = j;
        }
        pending_.clear();
        ++flush_count_;
        return flushed;
    }

    uint32_t size_limit_;
    std::map<std::pair<uint64_t, uint64_t>, Block> pending_;
    uint64_t flush_count_ = 0;
    uint64_t absorbed_writes_ = 0;
    mutable std::mutex mu_;
};

// ---------------------------------------------------------------------------
// Metadata checksums

struct ChecksumMismatchError : Error {
    uint32_t expected, found;
    ChecksumMismatchError(uint32_t expected_, uint32_t found_)
        : Error("checksum mismatch: expected " + std::to_string(expected_) + ", found " +
                std::to_string(found_)),
          expected(expected_), found(found_) {}
};

struct MetaChecksum {
    uint32_t stored = 0;

    void commit(std::string_view meta) {
        stored = detail::crc32(meta.data(), meta.size());
    }

    void verify(std::string_view meta) const {
        uint32_t found = detail::crc32(meta.data(), meta.size());
        if (found != stored) throw ChecksumMismatchError(stored, found);
    }
};

// ---------------------------------------------------------------------------
// Timestamps

struct Timestamps {
    int64_t atime_ns = 0;
    int64_t mtime_ns = 0;
    int64_t ctime_ns = 0;
    bool operator==(const Timestamps&) const = default;
};

enum class TouchKind { read, data, metadata };

inline void touch(Timestamps& ts, TouchKind kind, int64_t now_ns) {
    switch (kind) {
        case TouchKind::read:
            ts.atime_ns = std::max(ts.atime_ns, now_ns);
            break;
        case TouchKind::data:
            ts.mtime_ns = std::max(ts.mtime_ns, now_ns);
            ts.ctime_ns = std::max(ts.ctime_ns, now_ns);
            break;
        case TouchKind::metadata:
            ts.ctime_ns = std::max(ts.ctime_ns, now_ns);
            break;
    }
}

// ---------------------------------------------------------------------------
// FileImage: one file's data path through the configured feature stack

class FileImage {
  public:
    using Clock = std::function<int64_t()>;

    FileImage(uint64_t file_id, SimDisk& disk, const FeatureConfig& cfg,
              PreallocPool* pool = nullptr, DelayBuffer* delay = nullptr,
              Clock clock = nullptr)
        : disk_(&disk), cfg_(cfg), pool_(pool), delay_(delay), clock_(std::move(clock)) {
        handle_.file_id = file_id;
        handle_.strategy =
            cfg.inline_threshold > 0 ? BlockStrategy::inline_data : cfg.block_map;
    }

    const BlockMapHandle& handle() const { return handle_; }
    const Timestamps& times() const { return times_; }
    const MetaChecksum& checksum() const { return checksum_; }
    uint64_t size() const { return handle_.file_size; }

    void write(uint64_t off, const std::vector<uint8_t>& bytes) {
        if (bytes.empty()) return;
        uint64_t end = off + bytes.size();
        if (end < off) throw RangeError("byte range overflows");

        if (handle_.strategy == BlockStrategy::inline_data) {
            if (std::max(end, handle_.file_size) <= cfg_.inline_threshold) {
                if (handle_.inline_buf.size() < end) handle_.inline_buf.resize(end);
                std::copy(bytes.begin(), bytes.end(), handle_.inline_buf.begin() + off);
                handle_.file_size = std::max(handle_.file_size, end);
                after_data_write();
                return;
            }
            promote_inline();
        }

        uint64_t first = off / SimDisk::kBlockSize;
        uint64_t last = (end - 1) / SimDisk::kBlockSize;
        ensure_mapped(first, static_cast<uint32_t>(last - first + 1));

        for (uint64_t logical = first; logical <= last; ++logical) {
            uint64_t blk_begin = logical * SimDisk::kBlockSize;
            uint64_t lo = std::max(off, blk_begin);
            uint64_t hi = std::min(end, blk_begin + SimDisk::kBlockSize);
            std::vector<uint8_t> block = load_block(logical, lo != blk_begin ||
                                                                hi != blk_begin +
                                                                          SimDisk::kBlockSize);
            std::copy(bytes.begin() + (lo - off), bytes.begin() + (hi - off),
                      block.begin() + (lo - blk_begin));
            store_block(logical, std::move(block));
        }
        handle_.file_size = std::max(handle_.file_size, end);
        after_data_write();
    }

    std::vector<uint8_t> read(uint64_t off, uint64_t len) {
        std::vector<uint8_t> out(len, 0);
        if (len == 0) return out;
        uint64_t end = std::min(off + len, handle_.file_size);
        if (off >= end) return out;

        if (handle_.strategy == BlockStrategy::inline_data) {
            std::copy(handle_.inline_buf.begin() + off, handle_.inline_buf.begin() + end,
                      out.begin());
            after_read();
            return out;
        }

        uint64_t first = off / SimDisk::kBlockSize;
        uint64_t last = (end - 1) / SimDisk::kBlockSize;
        // Blocks served by the delay buffer cost no disk I/O; the rest go
        // through the block map as one ranged read per disk run.
        std::vector<uint8_t> assembled((last - first + 1) * SimDisk::kBlockSize, 0);
        std::vector<uint64_t> from_disk;
        for (uint64_t logical = first; logical <= last; ++logical) {
            std::optional<DelayBuffer::Block> pend;
            if (delay_) pend = delay_->peek(handle_.file_id, logical);
            if (pend) {
                std::copy(pend->begin(), pend->end(),
                          assembled.begin() + (logical - first) * SimDisk::kBlockSize);
            } else if (handle_.lookup(logical)) {
                from_disk.push_back(logical);
            }
        }
        size_t i = 0;
        while (i < from_disk.size()) {
            size_t j = i + 1;
            while (j < from_disk.size() && from_disk[j] == from_disk[i] + (j - i)) ++j;
            uint32_t run = static_cast<uint32_t>(j - i);
            for (const auto& req : meta_requests(handle_, false, from_disk[i], run))
                disk_->submit(req);
            std::vector<uint8_t> buf(uint64_t(run) * SimDisk::kBlockSize);
            uint64_t pos = 0;
            for (const auto& req : map_read(handle_, from_disk[i], run)) {
                disk_->read(req, buf.data() + pos);
                pos += uint64_t(req.count) * SimDisk::kBlockSize;
            }
            std::copy(buf.begin(), buf.end(),
                      assembled.begin() + (from_disk[i] - first) * SimDisk::kBlockSize);
            i = j;
        }
        uint64_t base = first * SimDisk::kBlockSize;
        std::copy(assembled.begin() + (off - base), assembled.begin() + (end - base),
                  out.begin());
        after_read();
        return out;
    }

    void sync() {
        if (delay_) delay_->flush(*disk_, resolver());
    }

    // Serialized metadata view used for checksumming.
    std::string meta_bytes() const {
        std::string s = "id=" + std::to_string(handle_.file_id) +
                        ";size=" + std::to_string(handle_.file_size) +
                        ";strategy=" + std::to_string(static_cast<int>(handle_.strategy));
        for (const auto& [l, p] : handle_.blocks)
            s += ";b" + std::to_string(l) + "=" + std::to_string(p);
        for (const auto& e : handle_.extents)
            s += ";e" + std::to_string(e.logical_start) + "=" + std::to_string(e.physical_start) +
                 "+" + std::to_string(e.length);
        s += ";at=" + std::to_string(times_.atime_ns) + ";mt=" + std::to_string(times_.mtime_ns) +
             ";ct=" + std::to_string(times_.ctime_ns);
        return s;
    }

    DelayBuffer::Resolve resolver() {
        return [this](uint64_t, uint64_t block) {
            auto phys = handle_.lookup(block);
            if (!phys) throw RangeError("flush of unmapped block " + std::to_string(block));
            return *phys;
        };
    }

  private:
    void ensure_mapped(uint64_t first, uint32_t count) {
        uint64_t logical = first;
        uint64_t end = first + count;
        while (logical < end) {
            if (handle_.lookup(logical)) {
                ++logical;
                continue;
            }
            uint64_t run = 1;
            while (logical + run < end && !handle_.lookup(logical + run)) ++run;
            if (handle_.strategy == BlockStrategy::indirect) {
                for (uint64_t l = logical; l < logical + run; ++l)
                    handle_.blocks[l] = disk_->allocate(1);
            } else {
                extent_allocate(handle_, *disk_, logical, static_cast<uint32_t>(run),
                                cfg_.prealloc_enabled ? pool_ : nullptr,
                                cfg_.prealloc_enabled);
            }
            for (const auto& req :
                 meta_requests(handle_, true, logical, static_cast<uint32_t>(run)))
                disk_->submit(req);
            logical += run;
        }
    }

    std::vector<uint8_t> load_block(uint64_t logical, bool need_existing) {
        if (delay_) {
            if (auto pend = delay_->peek(handle_.file_id, logical)) return *pend;
        }
        std::vector<uint8_t> block(SimDisk::kBlockSize, 0);
        if (!need_existing) return block;
        auto phys = handle_.lookup(logical);
        if (phys && disk_->is_allocated(*phys)) {
            for (const auto& req : meta_requests(handle_, false, logical, 1))
                disk_->submit(req);
            disk_->read(map_read(handle_, logical, 1)[0], block.data());
        }
        return block;
    }

    void store_block(uint64_t logical, std::vector<uint8_t> block) {
        if (delay_) {
            delay_->write(handle_.file_id, logical, std::move(block), *disk_, resolver());
            return;
        }
        for (const auto& req : meta_requests(handle_, true, logical, 1)) disk_->submit(req);
        disk_->write(map_write(handle_, logical, 1)[0], block.data());
    }

    void promote_inline() {
        std::vector<uint8_t> contents = std::move(handle_.inline_buf);
        handle_.inline_buf.clear();
        handle_.strategy = cfg_.block_map;
        uint64_t saved_size = handle_.file_size;
        handle_.file_size = 0;
        if (!contents.empty()) {
            write(0, contents);
            handle_.file_size = saved_size;
        }
    }

    void after_data_write() {
        if (cfg_.timestamps && clock_) touch(times_, TouchKind::data, clock_());
        if (cfg_.checksums) checksum_.commit(meta_bytes());
    }

    void after_read() {
        if (cfg_.timestamps && clock_) {
            touch(times_, TouchKind::read, clock_());
            if (cfg_.checksums) checksum_.commit(meta_bytes());
        }
    }

    BlockMapHandle handle_;
    Timestamps times_;
    MetaChecksum checksum_;
    SimDisk* disk_;
    FeatureConfig cfg_;
    PreallocPool* pool_;
    DelayBuffer* delay_;
    Clock clock_;
};

}  // namespace sysspec
