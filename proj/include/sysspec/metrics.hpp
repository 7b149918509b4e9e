#pragma once

// Synthetic workloads over the simulated disk plus before/after comparison
// reports. Workloads are deterministic per seed; comparison normalizes each
// counter as after/before, reporting "n/a" on a zero baseline.

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "sysspec/fs_core.hpp"

namespace sysspec {

enum class WorkloadKind { small_file, large_file, random_then_range, pool_stress, append_batch };

inline std::string to_string(WorkloadKind k) {
    switch (k) {
        case WorkloadKind::small_file: return "small_file";
        case WorkloadKind::large_file: return "large_file";
        case WorkloadKind::random_then_range: return "random_then_range";
        case WorkloadKind::pool_stress: return "pool_stress";
        case WorkloadKind::append_batch: return "append_batch";
    }
    return "?";
}

inline WorkloadKind workload_kind_from(const std::string& s) {
    if (s == "small_file") return WorkloadKind::small_file;
    if (s == "large_file") return WorkloadKind::large_file;
    if (s == "random_then_range") return WorkloadKind::random_then_range;
    if (s == "pool_stress") return WorkloadKind::pool_stress;
    if (s == "append_batch") return WorkloadKind::append_batch;
    throw Error("unknown workload kind '" + s + "'");
}

struct WorkloadConfig {
    WorkloadKind kind = WorkloadKind::small_file;
    uint64_t seed = 42;
    uint32_t file_count = 0;   // 0 = per-kind default
    uint64_t file_size = 0;    // bytes; 0 = per-kind default
    uint32_t op_count = 0;     // 0 = per-kind default
    uint32_t io_size = 0;      // bytes per op; 0 = per-kind default

    static WorkloadConfig preset(WorkloadKind kind, uint64_t seed = 42) {
        WorkloadConfig cfg;
        cfg.kind = kind;
        cfg.seed = seed;
        switch (kind) {
            case WorkloadKind::small_file:
                cfg.file_count = 1000;
                cfg.file_size = 96;
                break;
            case WorkloadKind::large_file:
                cfg.file_count = 4;
                cfg.file_size = 1 << 20;
                cfg.io_size = SimDisk::kBlockSize;
                break;
            case WorkloadKind::random_then_range:
                cfg.file_count = 1;
                cfg.file_size = 256 * SimDisk::kBlockSize;
                cfg.op_count = 60;
                cfg.io_size = 4 * SimDisk::kBlockSize;
                break;
            case WorkloadKind::pool_stress:
                cfg.file_count = 1024;  // reserved runs
                cfg.op_count = 512;     // takes
                break;
            case WorkloadKind::append_batch:
                cfg.file_count = 1;
                cfg.op_count = 1000;
                cfg.io_size = 256;
                break;
        }
        return cfg;
    }
};

struct ConfigMismatchError : Error {
    ConfigMismatchError(const std::string& a, const std::string& b)
        : Error("reports compare different runs: " + a + " vs " + b) {}
};

struct MetricsReport {
    WorkloadKind kind = WorkloadKind::small_file;
    uint64_t seed = 42;
    DiskCounters counters;
    uint64_t classified_ops = 0;  // read/write ops run through contiguity_classify
    uint64_t pool_visits = 0;
    uint64_t allocated_blocks = 0;
    bool disk_full = false;
    std::vector<PoolRun> pool_takes;  // pool_stress only
    std::map<std::string, std::string> ratios;  // compare() output; "n/a" on /0

    double uncontiguous_ratio() const {
        return classified_ops == 0
                   ? 0.0
                   : double(counters.uncontiguous_ops) / double(classified_ops);
    }

    nlohmann::json to_json() const {
        nlohmann::json j{{"kind", to_string(kind)},
                         {"seed", seed},
                         {"data_reads", counters.data_reads},
                         {"data_writes", counters.data_writes},
                         {"meta_reads", counters.meta_reads},
                         {"meta_writes", counters.meta_writes},
                         {"io_ops", counters.io_ops},
                         {"uncontiguous_ops", counters.uncontiguous_ops},
                         {"classified_ops", classified_ops},
                         {"uncontiguous_ratio", uncontiguous_ratio()},
                         {"pool_visits", pool_visits},
                         {"allocated_blocks", allocated_blocks},
                         {"disk_full", disk_full}};
        if (!pool_takes.empty()) {
            nlohmann::json takes = nlohmann::json::array();
            for (const auto& r : pool_takes)
                takes.push_back({r.logical_start, r.physical_start, r.length});
            j["pool_takes"] = takes;
        }
        if (!ratios.empty()) j["ratios"] = ratios;
        return j;
    }

    static MetricsReport from_json(const nlohmann::json& j) {
        MetricsReport r;
        r.kind = workload_kind_from(j.at("kind").get<std::string>());
        r.seed = j.at("seed").get<uint64_t>();
        r.counters.data_reads = j.at("data_reads").get<uint64_t>();
        r.counters.data_writes = j.at("data_writes").get<uint64_t>();
        r.counters.meta_reads = j.at("meta_reads").get<uint64_t>();
        r.counters.meta_writes = j.at("meta_writes").get<uint64_t>();
        r.counters.io_ops = j.at("io_ops").get<uint64_t>();
        r.counters.uncontiguous_ops = j.at("uncontiguous_ops").get<uint64_t>();
        r.classified_ops = j.at("classified_ops").get<uint64_t>();
        r.pool_visits = j.at("pool_visits").get<uint64_t>();
        r.allocated_blocks = j.at("allocated_blocks").get<uint64_t>();
        r.disk_full = j.at("disk_full").get<bool>();
        if (j.contains("pool_takes"))
            for (const auto& t : j.at("pool_takes"))
                r.pool_takes.push_back({t.at(0).get<uint64_t>(), t.at(1).get<uint64_t>(),
                                        t.at(2).get<uint32_t>()});
        if (j.contains("ratios"))
            r.ratios = j.at("ratios").get<std::map<std::string, std::string>>();
        return r;
    }
};

// Sequential iff the whole logical range falls within a single extent.
// Zero-length ranges are vacuously sequential.
inline bool contiguity_sequential(uint64_t logical_start, uint32_t block_count,
                                  const std::vector<Extent>& extents) {
    if (block_count == 0) return true;
    for (const auto& e : extents)
        if (e.logical_start <= logical_start &&
            logical_start + block_count <= e.logical_start + e.length)
            return true;
    return false;
}

namespace detail {

// Extent view of a block map: native extents, or per-block mappings merged
// when both logically and physically contiguous.
inline std::vector<Extent> extent_view(const BlockMapHandle& handle) {
    if (handle.strategy == BlockStrategy::extent) return handle.extents;
    std::vector<Extent> out;
    for (const auto& [logical, physical] : handle.blocks) {
        if (!out.empty() && out.back().logical_start + out.back().length == logical &&
            out.back().physical_start + out.back().length == physical)
            out.back().length++;
        else
            out.push_back({logical, physical, 1});
    }
    return out;
}

struct WorkloadRunner {
    const WorkloadConfig& cfg;
    const FeatureConfig& features;
    SimDisk disk;
    FsState fs;
    std::mt19937_64 rng;
    MetricsReport rep;

    WorkloadRunner(const WorkloadConfig& c, const FeatureConfig& f)
        : cfg(c), features(f), fs(f, &disk), rng(c.seed) {
        rep.kind = c.kind;
        rep.seed = c.seed;
    }

    static std::string file_name(uint32_t i) { return "f" + std::to_string(i); }

    void classify(Inode* file, uint64_t off, uint64_t len) {
        if (!file || !file->image) return;
        rep.classified_ops++;
        if (len == 0) return;
        uint64_t first = off / SimDisk::kBlockSize;
        uint64_t last = (off + len - 1) / SimDisk::kBlockSize;
        if (!contiguity_sequential(first, static_cast<uint32_t>(last - first + 1),
                                   extent_view(file->image->handle())))
            disk.note_uncontiguous();
    }

    Inode* file(uint32_t i) { return fs.root()->entries.at(file_name(i)); }

    void write(uint32_t i, uint64_t off, uint64_t len) {
        std::string bytes(len, char('a' + (off + len) % 26));
        fs.write({file_name(i)}, off, bytes);
        classify(file(i), off, len);
    }

    void read(uint32_t i, uint64_t off, uint64_t len) {
        fs.read({file_name(i)}, off, len);
        classify(file(i), off, len);
    }

    void make_files(uint32_t n) {
        for (uint32_t i = 0; i < n; ++i) fs.ins({}, file_name(i), InodeKind::file);
    }

    void run() {
        try {
            switch (cfg.kind) {
                case WorkloadKind::small_file: small_file(); break;
                case WorkloadKind::large_file: large_file(); break;
                case WorkloadKind::random_then_range: random_then_range(); break;
                case WorkloadKind::pool_stress: pool_stress(); break;
                case WorkloadKind::append_batch: append_batch(); break;
            }
            fs.sync();
        } catch (const DiskFullError&) {
            rep.disk_full = true;
        }
        rep.counters = disk.counters();
        rep.allocated_blocks = disk.allocated_blocks();
    }

    void small_file() {
        make_files(cfg.file_count);
        for (uint32_t i = 0; i < cfg.file_count; ++i) write(i, 0, cfg.file_size);
        for (uint32_t i = 0; i < cfg.file_count; ++i) read(i, 0, cfg.file_size);
    }

    void large_file() {
        make_files(cfg.file_count);
        for (uint32_t i = 0; i < cfg.file_count; ++i)
            for (uint64_t off = 0; off < cfg.file_size; off += cfg.io_size)
                write(i, off, std::min<uint64_t>(cfg.io_size, cfg.file_size - off));
        for (uint32_t i = 0; i < cfg.file_count; ++i)
            for (uint64_t off = 0; off < cfg.file_size; off += cfg.io_size)
                read(i, off, std::min<uint64_t>(cfg.io_size, cfg.file_size - off));
    }

    // Random writes scattered across the window, then sequential write and
    // read passes over the whole range in multi-block chunks. Holes left by
    // the random phase are filled by the sequential write pass; without
    // pre-allocation those fills land on unrelated physical blocks and
    // fragment the extent map.
    void random_then_range() {
        make_files(1);
        uint64_t window_blocks = cfg.file_size / SimDisk::kBlockSize;
        uint64_t io_blocks = cfg.io_size / SimDisk::kBlockSize;
        for (uint32_t i = 0; i < cfg.op_count; ++i)
            write(0, (rng() % (window_blocks - io_blocks)) * SimDisk::kBlockSize, cfg.io_size);
        for (uint64_t off = 0; off < cfg.file_size; off += cfg.io_size)
            write(0, off, std::min<uint64_t>(cfg.io_size, cfg.file_size - off));
        for (uint64_t off = 0; off < cfg.file_size; off += cfg.io_size)
            read(0, off, std::min<uint64_t>(cfg.io_size, cfg.file_size - off));
    }

    // Disjoint logical reservations, then random takes; the visit counter
    // exposes the pool organization's search cost.
    void pool_stress() {
        PreallocPool pool(features.pool_org);
        constexpr uint64_t kStride = 32;
        for (uint32_t i = 0; i < cfg.file_count; ++i) {
            uint32_t len = 8 + static_cast<uint32_t>(rng() % 9);  // 8..16
            pool.reserve({uint64_t(i) * kStride, uint64_t(i) * kStride + (1u << 20), len});
        }
        for (uint32_t i = 0; i < cfg.op_count; ++i) {
            uint64_t run = rng() % cfg.file_count;
            uint32_t want = 1 + static_cast<uint32_t>(rng() % 8);
            auto got = pool.take_up_to(run * kStride, want);
            if (got) rep.pool_takes.push_back(*got);
        }
        rep.pool_visits = pool.visit_counter();
    }

    void append_batch() {
        make_files(1);
        for (uint32_t i = 0; i < cfg.op_count; ++i)
            write(0, uint64_t(i) * cfg.io_size, cfg.io_size);
        for (uint32_t i = 0; i < 4; ++i) read(0, 0, uint64_t(cfg.op_count) * cfg.io_size);
    }
};

}  // namespace detail

inline MetricsReport run_workload(WorkloadConfig cfg, const FeatureConfig& features) {
    WorkloadConfig defaults = WorkloadConfig::preset(cfg.kind, cfg.seed);
    if (cfg.file_count == 0) cfg.file_count = defaults.file_count;
    if (cfg.file_size == 0) cfg.file_size = defaults.file_size;
    if (cfg.op_count == 0) cfg.op_count = defaults.op_count;
    if (cfg.io_size == 0) cfg.io_size = defaults.io_size;
    detail::WorkloadRunner runner(cfg, features);
    runner.run();
    return runner.rep;
}

inline MetricsReport compare(const MetricsReport& before, const MetricsReport& after) {
    if (before.kind != after.kind || before.seed != after.seed)
        throw ConfigMismatchError(
            to_string(before.kind) + "/" + std::to_string(before.seed),
            to_string(after.kind) + "/" + std::to_string(after.seed));
    MetricsReport out = after;
    auto ratio = [](uint64_t a, uint64_t b) -> std::string {
        if (b == 0) return "n/a";
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.6g", double(a) / double(b));
        return buf;
    };
    out.ratios = {
        {"data_reads", ratio(after.counters.data_reads, before.counters.data_reads)},
        {"data_writes", ratio(after.counters.data_writes, before.counters.data_writes)},
        {"meta_reads", ratio(after.counters.meta_reads, before.counters.meta_reads)},
        {"meta_writes", ratio(after.counters.meta_writes, before.counters.meta_writes)},
        {"io_ops", ratio(after.counters.io_ops, before.counters.io_ops)},
        {"uncontiguous_ops",
         ratio(after.counters.uncontiguous_ops, before.counters.uncontiguous_ops)},
        {"pool_visits", ratio(after.pool_visits, before.pool_visits)},
    };
    return out;
}

}  // namespace sysspec
