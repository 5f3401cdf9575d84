#include "migtlb/hierarchy.hpp"

#include <limits>
#include <stdexcept>
#include <string>
#include <utility>

namespace migtlb {

bool Hierarchy::WalkCache::probe(const PageKey &k)
{
    auto it = index_.find(k);
    if (it == index_.end())
        return false;
    order_.splice(order_.begin(), order_, it->second);
    return true;
}

void Hierarchy::WalkCache::insert(const PageKey &k)
{
    if (capacity_ == 0 || probe(k))
        return;
    if (order_.size() == capacity_) {
        index_.erase(order_.back());
        order_.pop_back();
    }
    order_.push_front(k);
    index_[k] = order_.begin();
}

Hierarchy::Hierarchy(const HierarchyConfig &cfg, std::vector<InstanceConfig> instances)
    : cfg_(cfg)
    , page_layout_(PageConfig{cfg.page_size_bytes, 1}, 1)
{
    if (instances.empty())
        throw std::invalid_argument("hierarchy needs at least one instance");
    expects(cfg.tpcs_per_gpc > 0, "tpcs_per_gpc must be positive");
    expects(cfg.l1_mshr_entries > 0 && cfg.l2_mshr_entries > 0, "MSHR capacity must be positive");
    expects(cfg.gmmu.walkers_per_gpc > 0, "need at least one page table walker");

    std::vector<InstanceShare> shares;
    std::uint32_t gpcs = 0;
    for (const auto &ic : instances) {
        if (instance_index_.count(ic.id))
            throw std::invalid_argument("duplicate instance id " + std::to_string(ic.id));
        if (tenants_.count(ic.pid))
            throw std::invalid_argument("pid " + std::to_string(ic.pid) + " runs on two instances");
        Instance inst;
        inst.cfg = ic;
        if (inst.cfg.gpc_count == 0)
            inst.cfg.gpc_count = std::max<std::uint32_t>(1, ic.g_units);
        inst.first_gpc = gpcs;
        inst.first_tpc = gpcs * cfg.tpcs_per_gpc;
        inst.tpc_count = inst.cfg.gpc_count * cfg.tpcs_per_gpc;
        gpcs += inst.cfg.gpc_count;
        instance_index_[ic.id] = instances_.size();
        for (std::uint32_t g = 0; g < inst.cfg.gpc_count; ++g)
            gpc_instance_.push_back(static_cast<std::uint32_t>(instances_.size()));
        instances_.push_back(inst);
        shares.push_back({ic.id, ic.g_units});

        TenantStats ts;
        ts.pid = ic.pid;
        ts.instance = ic.id;
        tenants_.emplace(ic.pid, std::move(ts));
        measuring_[ic.pid] = true;
        walk_caches_.emplace_back(cfg.gmmu.walk_cache_entries);
    }

    const std::uint32_t tpcs = gpcs * cfg.tpcs_per_gpc;
    for (std::uint32_t t = 0; t < tpcs; ++t) {
        tpc_gpc_.push_back(t / cfg.tpcs_per_gpc);
        l1_.emplace_back(cfg.l1, cfg.page_size_bytes);
    }
    for (std::uint32_t g = 0; g < gpcs; ++g)
        l2_.emplace_back(cfg.l2, cfg.page_size_bytes);
    l1_mshr_.resize(tpcs);
    l2_mshr_.resize(gpcs);
    l1_blocked_.resize(tpcs);
    l2_blocked_.resize(gpcs);
    walkers_.resize(gpcs);
    l3_ = make_l3(cfg.l3_variant, cfg.l3, cfg.page_size_bytes, shares);
}

Hierarchy::~Hierarchy() = default;

std::uint32_t Hierarchy::walk_latency(bool walk_cache_hit) const
{
    // A walk-cache hit skips straight to the last level.
    return cfg_.gmmu.level_latency * (walk_cache_hit ? 1 : cfg_.gmmu.levels);
}

void Hierarchy::schedule(Tick tick, EventKind kind, std::uint64_t a, const PageKey &key)
{
    events_.push(Event{tick, seq_++, kind, a, key});
}

void Hierarchy::submit(const TraceRecord &rec, bool measured)
{
    auto it = instance_index_.find(rec.instance);
    if (it == instance_index_.end())
        throw std::invalid_argument("request for unknown instance " + std::to_string(rec.instance));
    Instance &inst = instances_[it->second];
    if (rec.pid != inst.cfg.pid)
        throw std::invalid_argument("pid " + std::to_string(rec.pid) + " does not run on instance " +
                                    std::to_string(rec.instance));
    Request r;
    r.rec = rec;
    r.measured = measured;
    r.tpc = inst.first_tpc + static_cast<std::uint32_t>(inst.issued % inst.tpc_count);
    ++inst.issued;
    requests_.push_back(r);
    schedule(rec.tick, EventKind::Issue, requests_.size() - 1);
}

std::vector<CompletedRequest> Hierarchy::step(Tick until)
{
    while (!events_.empty() && events_.top().tick <= until) {
        const Event ev = events_.top();
        events_.pop();
        switch (ev.kind) {
        case EventKind::Issue: on_issue(ev.tick, ev.a); break;
        case EventKind::Done: {
            const Request &r = requests_[ev.a];
            if (r.measured)
                tenant(r.rec.pid).latencies.push_back(static_cast<std::uint32_t>(ev.tick - r.rec.tick));
            raw_.last_completion = std::max(raw_.last_completion, ev.tick);
            if (record_completions_)
                completed_.push_back({ev.a, {r.rec.instance, r.rec.pid}, r.rec.vaddr, r.rec.tick,
                                      ev.tick, r.measured});
            break;
        }
        case EventKind::L2Probe: on_l2_probe(ev.tick, static_cast<std::uint32_t>(ev.a), ev.key); break;
        case EventKind::L3Probe: on_l3_probe(ev.tick, static_cast<std::uint32_t>(ev.a), ev.key); break;
        case EventKind::L1Fill: on_l1_fill(ev.tick, static_cast<std::uint32_t>(ev.a), ev.key); break;
        case EventKind::L2Fill: on_l2_fill(ev.tick, static_cast<std::uint32_t>(ev.a), ev.key); break;
        case EventKind::WalkArrive: on_walk_arrive(ev.tick, ev.a); break;
        case EventKind::WalkDone: on_walk_done(ev.tick, ev.a); break;
        }
    }
    return std::exchange(completed_, {});
}

std::vector<CompletedRequest> Hierarchy::drain()
{
    return step(std::numeric_limits<Tick>::max());
}

void Hierarchy::on_issue(Tick now, std::uint64_t req_id, bool woken)
{
    Request &r = requests_[req_id];
    if (!woken && !l1_blocked_[r.tpc].empty()) {
        l1_blocked_[r.tpc].push_back(req_id);
        return;
    }
    const RequestIdentity who{r.rec.instance, r.rec.pid};
    const PageKey key{r.rec.pid, page_layout_.page_number(r.rec.vaddr)};
    const bool first_attempt = !r.l1_miss_counted;
    TenantStats &ts = tenant(r.rec.pid);

    if (first_attempt) {
        ++raw_.requests;
        if (!r.measured)
            measuring_[r.rec.pid] = false;
        if (r.measured) {
            ++ts.requests;
            ts.instructions += r.rec.weight_instructions;
        }
    }

    SubEntryTlb &l1 = l1_[r.tpc];
    const LookupResult res = l1.lookup(l1.decompose(r.rec.vaddr), who, now);
    if (res.hit()) {
        if (first_attempt && r.measured)
            ++ts.l1_hits;
        schedule(now + res.latency_cycles, EventKind::Done, req_id);
        return;
    }
    if (first_attempt) {
        r.l1_miss_counted = true;
        if (r.measured)
            ++ts.l1_misses;
    }

    auto &mshr = l1_mshr_[r.tpc];
    if (auto it = mshr.find(key); it != mshr.end()) {
        it->second.waiting.push_back(req_id);
        if (r.measured)
            ++ts.l1_coalesced;
        return;
    }
    if (mshr.size() >= cfg_.l1_mshr_entries) {
        ++raw_.l1_mshr_stalls;
        if (r.measured)
            ++ts.mshr_stalls;
        l1_blocked_[r.tpc].push_front(req_id);
        return;
    }
    L1Miss miss;
    miss.waiting.push_back(req_id);
    miss.vaddr = r.rec.vaddr;
    miss.measured = r.measured;
    mshr.emplace(key, std::move(miss));
    schedule(now + res.latency_cycles, EventKind::L2Probe, r.tpc, key);
}

void Hierarchy::on_l2_probe(Tick now, std::uint32_t tpc, const PageKey &key, bool woken)
{
    L1Miss &m = l1_mshr_[tpc].at(key);
    const std::uint32_t gpc = tpc_gpc_[tpc];
    if (!woken && !l2_blocked_[gpc].empty()) {
        l2_blocked_[gpc].emplace_back(tpc, key);
        return;
    }
    const Instance &inst = instances_[gpc_instance_[gpc]];
    const RequestIdentity who{inst.cfg.id, key.first};
    TenantStats &ts = tenant(key.first);
    const bool first_attempt = !m.l2_miss_counted;

    SubEntryTlb &l2 = l2_[gpc];
    const LookupResult res = l2.lookup(l2.decompose(m.vaddr), who, now);
    if (res.hit()) {
        if (first_attempt && m.measured)
            ++ts.l2_hits;
        schedule(now + res.latency_cycles, EventKind::L1Fill, tpc, key);
        return;
    }
    if (first_attempt) {
        m.l2_miss_counted = true;
        if (m.measured)
            ++ts.l2_misses;
    }

    auto &mshr = l2_mshr_[gpc];
    if (auto it = mshr.find(key); it != mshr.end()) {
        it->second.tpcs.push_back(tpc);
        if (m.measured)
            ++ts.l2_coalesced;
        return;
    }
    if (mshr.size() >= cfg_.l2_mshr_entries) {
        ++raw_.l2_mshr_stalls;
        if (m.measured)
            ++ts.mshr_stalls;
        l2_blocked_[gpc].emplace_front(tpc, key);
        return;
    }
    L2Miss miss;
    miss.tpcs.push_back(tpc);
    miss.vaddr = m.vaddr;
    miss.measured = m.measured;
    mshr.emplace(key, std::move(miss));
    schedule(now + res.latency_cycles, EventKind::L3Probe, gpc, key);
}

void Hierarchy::on_l3_probe(Tick now, std::uint32_t gpc, const PageKey &key)
{
    const L2Miss &m = l2_mshr_[gpc].at(key);
    const Instance &inst = instances_[gpc_instance_[gpc]];
    const RequestIdentity who{inst.cfg.id, key.first};
    TenantStats &ts = tenant(key.first);

    const std::uint64_t reuse_key =
        cfg_.region_reuse ? key.second / cfg_.l3.subentries_per_entry : key.second;
    const auto distance = reuse_.access(key.first, reuse_key);
    if (distance && m.measured)
        ts.reuse.add(*distance);

    ++raw_.l3_probes;
    const LookupResult res = l3_->lookup(m.vaddr, who, now);
    if (res.hit()) {
        ++raw_.l3_hits;
        if (m.measured)
            ++ts.l3_hits;
        schedule(now + res.latency_cycles, EventKind::L2Fill, gpc, key);
        return;
    }
    ++raw_.l3_misses;
    if (m.measured)
        ++ts.l3_misses;
    walks_.push_back(Walk{gpc, key, m.vaddr, m.measured});
    schedule(now + res.latency_cycles, EventKind::WalkArrive, walks_.size() - 1);
}

void Hierarchy::on_walk_arrive(Tick now, std::uint64_t walk_id)
{
    WalkerPool &pool = walkers_[walks_[walk_id].gpc];
    if (pool.busy < cfg_.gmmu.walkers_per_gpc) {
        start_walk(now, walk_id);
        return;
    }
    ++raw_.walks_queued;
    pool.queue.push_back(walk_id);
}

void Hierarchy::start_walk(Tick now, std::uint64_t walk_id)
{
    const Walk &w = walks_[walk_id];
    ++walkers_[w.gpc].busy;
    const bool cached = walk_caches_[gpc_instance_[w.gpc]].probe(w.key);
    ++raw_.walks_started;
    if (w.measured) {
        TenantStats &ts = tenant(w.key.first);
        ++ts.walks;
        if (cached)
            ++ts.walk_cache_hits;
    }
    schedule(now + walk_latency(cached), EventKind::WalkDone, walk_id);
}

void Hierarchy::on_walk_done(Tick now, std::uint64_t walk_id)
{
    const Walk w = walks_[walk_id];
    ++raw_.walks_completed;
    WalkerPool &pool = walkers_[w.gpc];
    --pool.busy;
    walk_caches_[gpc_instance_[w.gpc]].insert(w.key);

    const Instance &inst = instances_[gpc_instance_[w.gpc]];
    const InsertOutcome out = l3_->insert(w.vaddr, w.key.second, {inst.cfg.id, w.key.first}, now);
    for (const auto &s : out) {
        ++raw_.l3_evictions;
        record_eviction(s);
    }
    complete_l2(now, w.gpc, w.key);

    if (!pool.queue.empty()) {
        const std::uint64_t next = pool.queue.front();
        pool.queue.pop_front();
        start_walk(now, next);
    }
}

void Hierarchy::on_l2_fill(Tick now, std::uint32_t gpc, const PageKey &key)
{
    complete_l2(now, gpc, key);
}

void Hierarchy::complete_l2(Tick now, std::uint32_t gpc, const PageKey &key)
{
    auto node = l2_mshr_[gpc].extract(key);
    expects(!node.empty(), "L2 fill without an outstanding miss");
    const L2Miss &m = node.mapped();
    const Instance &inst = instances_[gpc_instance_[gpc]];
    SubEntryTlb &l2 = l2_[gpc];
    l2.insert(l2.decompose(m.vaddr), key.second, {inst.cfg.id, key.first}, now);
    for (std::uint32_t tpc : m.tpcs)
        on_l1_fill(now, tpc, key);
    wake_l2(now, gpc);
}

void Hierarchy::wake_l2(Tick now, std::uint32_t gpc)
{
    auto &blocked = l2_blocked_[gpc];
    while (!blocked.empty() && l2_mshr_[gpc].size() < cfg_.l2_mshr_entries) {
        const auto [tpc, key] = blocked.front();
        blocked.pop_front();
        on_l2_probe(now, tpc, key, true);
    }
}

void Hierarchy::wake_l1(Tick now, std::uint32_t tpc)
{
    auto &blocked = l1_blocked_[tpc];
    while (!blocked.empty() && l1_mshr_[tpc].size() < cfg_.l1_mshr_entries) {
        const std::uint64_t id = blocked.front();
        blocked.pop_front();
        on_issue(now, id, true);
    }
}

void Hierarchy::on_l1_fill(Tick now, std::uint32_t tpc, const PageKey &key)
{
    const std::uint32_t gpc = tpc_gpc_[tpc];
    const Instance &inst = instances_[gpc_instance_[gpc]];
    SubEntryTlb &l1 = l1_[tpc];
    const L1Miss &m = l1_mshr_[tpc].at(key);
    l1.insert(l1.decompose(m.vaddr), key.second, {inst.cfg.id, key.first}, now);
    complete_l1(now, tpc, key);
}

void Hierarchy::complete_l1(Tick now, std::uint32_t tpc, const PageKey &key)
{
    auto node = l1_mshr_[tpc].extract(key);
    expects(!node.empty(), "L1 fill without an outstanding miss");
    for (std::uint64_t id : node.mapped().waiting) {
        const Request &r = requests_[id];
        if (r.measured)
            tenant(r.rec.pid).latencies.push_back(static_cast<std::uint32_t>(now - r.rec.tick));
        raw_.last_completion = std::max(raw_.last_completion, now);
        if (record_completions_)
            completed_.push_back({id, {r.rec.instance, r.rec.pid}, r.rec.vaddr, r.rec.tick, now,
                                  r.measured});
    }
    wake_l1(now, tpc);
}

void Hierarchy::record_eviction(const EvictionSample &s)
{
    auto it = measuring_.find(s.pid);
    if (it != measuring_.end() && it->second)
        tenant(s.pid).evictions.add(s);
}

} // namespace migtlb
