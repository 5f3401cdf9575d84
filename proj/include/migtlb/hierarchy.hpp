#pragma once

#include <cstdint>
#include <deque>
#include <list>
#include <map>
#include <memory>
#include <queue>
#include <unordered_map>
#include <vector>

#include "migtlb/metrics.hpp"
#include "migtlb/subentry_tlb.hpp"
#include "migtlb/variants.hpp"
#include "migtlb/workloads.hpp"

namespace migtlb {

struct GmmuConfig {
    std::uint32_t walkers_per_gpc = 8;
    std::uint32_t walk_cache_entries = 128;
    std::uint32_t levels = 4;
    std::uint32_t level_latency = 100;
};

struct HierarchyConfig {
    std::uint64_t page_size_bytes = 65536;
    TlbGeometry l1{1, 16, 1, 1};    // 16 entries, fully associative
    TlbGeometry l2{16, 8, 16, 10};  // 128 entries, 8-way
    TlbGeometry l3{128, 8, 16, 40}; // 1024 entries, 8-way
    VariantConfig l3_variant;
    std::uint32_t tpcs_per_gpc = 4;
    std::uint32_t l1_mshr_entries = 32;
    std::uint32_t l2_mshr_entries = 64;
    GmmuConfig gmmu;
    // Reuse distance over 16-page regions instead of pages.
    bool region_reuse = false;
};

struct InstanceConfig {
    InstanceId id = 0;
    Pid pid = 1;
    std::uint32_t g_units = 1;
    std::uint32_t gpc_count = 0; // 0: one GPC per g-unit
};

/// Per-tenant counters. Only requests from a tenant's first full pass are
/// counted; L2 and L3 probes inherit the flag of the request that opened the
/// miss.
struct TenantStats {
    Pid pid = 0;
    InstanceId instance = 0;
    std::uint64_t requests = 0;
    std::uint64_t instructions = 0;
    std::uint64_t l1_hits = 0, l1_misses = 0, l1_coalesced = 0;
    std::uint64_t l2_hits = 0, l2_misses = 0, l2_coalesced = 0;
    std::uint64_t l3_hits = 0, l3_misses = 0;
    std::uint64_t walks = 0, walk_cache_hits = 0;
    std::uint64_t mshr_stalls = 0;
    std::vector<std::uint32_t> latencies;
    UtilizationAccumulator evictions;
    Histogram reuse;
};

// Whole-run counters, independent of the measurement window.
struct RawCounters {
    std::uint64_t requests = 0;
    std::uint64_t l3_probes = 0;
    std::uint64_t l3_hits = 0;
    std::uint64_t l3_misses = 0;
    std::uint64_t walks_started = 0;
    std::uint64_t walks_completed = 0;
    std::uint64_t walks_queued = 0;
    std::uint64_t l3_evictions = 0;
    std::uint64_t l1_mshr_stalls = 0;
    std::uint64_t l2_mshr_stalls = 0;
    Tick last_completion = 0;
};

struct CompletedRequest {
    std::uint64_t id = 0;
    RequestIdentity who;
    std::uint64_t vaddr = 0;
    Tick issue_tick = 0;
    Tick completion_tick = 0;
    bool measured = true;
};

/// Clocked translation pipeline: per-TPC L1 TLBs, per-GPC L2 sub-entry TLBs,
/// one L3 shared by every instance, MSHR coalescing at L1 and L2, and a GMMU
/// per instance with a pool of walkers per GPC and a shared walk cache.
///
/// A request probes L1 at its issue tick. Misses open (or join) an L1 MSHR
/// record, whose primary probes L2 after the L1 latency, and so on down to
/// the page walk. When a walk finishes the translation fills L3, the GPC's
/// L2 and every waiting TPC's L1, and all coalesced requests complete on the
/// same tick. Everything runs on one deterministic event queue.
class Hierarchy {
public:
    Hierarchy(const HierarchyConfig &cfg, std::vector<InstanceConfig> instances);
    ~Hierarchy();
    Hierarchy(const Hierarchy &) = delete;
    Hierarchy &operator=(const Hierarchy &) = delete;

    /// Requests must arrive in nondecreasing tick order per instance.
    void submit(const TraceRecord &rec, bool measured = true);

    /// Process every event up to and including `until`; returns the requests
    /// that completed in that window.
    std::vector<CompletedRequest> step(Tick until);
    std::vector<CompletedRequest> drain();
    bool idle() const { return events_.empty(); }
    // When false, completions are only folded into the statistics.
    void set_record_completions(bool on) { record_completions_ = on; }

    const std::map<Pid, TenantStats> &tenants() const { return tenants_; }
    const RawCounters &raw() const { return raw_; }
    const L3Tlb &l3() const { return *l3_; }
    const HierarchyConfig &config() const { return cfg_; }
    std::uint32_t walk_latency(bool walk_cache_hit) const;

private:
    using PageKey = std::pair<Pid, std::uint64_t>;
    struct PageKeyHash {
        std::size_t operator()(const PageKey &k) const
        {
            return std::hash<std::uint64_t>{}(k.second * 0x9E3779B97F4A7C15ull ^ k.first);
        }
    };

    struct Request {
        TraceRecord rec;
        bool measured = true;
        std::uint32_t tpc = 0;
        bool l1_miss_counted = false;
    };
    struct L1Miss {
        std::vector<std::uint64_t> waiting; // request ids, primary first
        std::uint64_t vaddr = 0;
        bool measured = true;
        bool l2_miss_counted = false;
    };
    struct L2Miss {
        std::vector<std::uint32_t> tpcs; // L1 MSHR records waiting on this miss
        std::uint64_t vaddr = 0;
        bool measured = true;
    };
    struct Walk {
        std::uint32_t gpc = 0;
        PageKey key;
        std::uint64_t vaddr = 0;
        bool measured = true;
    };
    enum class EventKind : std::uint8_t { Issue, Done, L2Probe, L3Probe, L1Fill, L2Fill, WalkArrive, WalkDone };
    struct Event {
        Tick tick;
        std::uint64_t seq;
        EventKind kind;
        std::uint64_t a;
        PageKey key;
    };
    struct EventOrder {
        bool operator()(const Event &x, const Event &y) const
        {
            return x.tick != y.tick ? x.tick > y.tick : x.seq > y.seq;
        }
    };
    struct Instance {
        InstanceConfig cfg;
        std::uint32_t first_gpc = 0;
        std::uint32_t first_tpc = 0;
        std::uint32_t tpc_count = 0;
        std::uint64_t issued = 0;
    };
    struct WalkerPool {
        std::uint32_t busy = 0;
        std::deque<std::uint64_t> queue;
    };
    class WalkCache {
    public:
        explicit WalkCache(std::size_t capacity) : capacity_(capacity) {}
        bool probe(const PageKey &k); // refreshes recency on hit
        void insert(const PageKey &k);

    private:
        std::size_t capacity_;
        std::list<PageKey> order_; // front = most recent
        std::unordered_map<PageKey, std::list<PageKey>::iterator, PageKeyHash> index_;
    };

    void schedule(Tick tick, EventKind kind, std::uint64_t a, const PageKey &key = {});
    void on_issue(Tick now, std::uint64_t req_id, bool woken = false);
    void on_l2_probe(Tick now, std::uint32_t tpc, const PageKey &key, bool woken = false);
    void wake_l1(Tick now, std::uint32_t tpc);
    void wake_l2(Tick now, std::uint32_t gpc);
    void on_l3_probe(Tick now, std::uint32_t gpc, const PageKey &key);
    void on_l1_fill(Tick now, std::uint32_t tpc, const PageKey &key);
    void on_l2_fill(Tick now, std::uint32_t gpc, const PageKey &key);
    void on_walk_done(Tick now, std::uint64_t walk_id);
    void on_walk_arrive(Tick now, std::uint64_t walk_id);
    void start_walk(Tick now, std::uint64_t walk_id);
    void complete_l1(Tick now, std::uint32_t tpc, const PageKey &key);
    void complete_l2(Tick now, std::uint32_t gpc, const PageKey &key);
    void record_eviction(const EvictionSample &s);
    TenantStats &tenant(Pid pid) { return tenants_.at(pid); }

    HierarchyConfig cfg_;
    std::vector<Instance> instances_;
    std::map<InstanceId, std::size_t> instance_index_;
    std::vector<std::uint32_t> tpc_gpc_;
    std::vector<std::uint32_t> gpc_instance_;
    std::vector<SubEntryTlb> l1_;
    std::vector<SubEntryTlb> l2_;
    std::unique_ptr<L3Tlb> l3_;
    std::vector<std::unordered_map<PageKey, L1Miss, PageKeyHash>> l1_mshr_;
    std::vector<std::unordered_map<PageKey, L2Miss, PageKeyHash>> l2_mshr_;
    // Requests (per TPC) and L1 miss records (per GPC) waiting for a free
    // MSHR, in arrival order. Later traffic queues behind them.
    std::vector<std::deque<std::uint64_t>> l1_blocked_;
    std::vector<std::deque<std::pair<std::uint32_t, PageKey>>> l2_blocked_;
    std::vector<WalkerPool> walkers_;
    std::vector<WalkCache> walk_caches_; // per instance
    std::vector<Request> requests_;
    std::vector<Walk> walks_;
    std::priority_queue<Event, std::vector<Event>, EventOrder> events_;
    std::uint64_t seq_ = 0;
    std::map<Pid, TenantStats> tenants_;
    std::map<Pid, bool> measuring_;
    ReuseDistanceTracker reuse_;
    RawCounters raw_;
    std::vector<CompletedRequest> completed_;
    bool record_completions_ = true;
    AddressLayout page_layout_;
};

} // namespace migtlb
