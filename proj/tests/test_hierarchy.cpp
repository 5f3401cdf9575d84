#include "doctest.h"

#include <algorithm>

#include "migtlb/hierarchy.hpp"
#include "migtlb/workloads.hpp"

using namespace migtlb;

namespace {

constexpr std::uint64_t kPage = 65536;

TraceRecord req(Tick t, Pid pid, std::uint64_t page, InstanceId inst = 0)
{
    return {t, inst, pid, address_space_base(pid) + page * kPage, 1};
}

std::vector<std::uint32_t> latencies(const Hierarchy &h, Pid pid)
{
    return h.tenants().at(pid).latencies;
}

// L2 too small for the quiet tenant, L3 large enough for it alone.
HierarchyConfig contended(VariantKind k = VariantKind::Baseline)
{
    HierarchyConfig c;
    c.l2 = {2, 2, 16, 10};
    c.l3 = {8, 8, 16, 40};
    c.l3_variant.kind = k;
    c.gmmu.walkers_per_gpc = 64;
    return c;
}

HierarchyConfig single_tpc()
{
    HierarchyConfig c;
    c.tpcs_per_gpc = 1;
    return c;
}

std::vector<TraceRecord> pattern_trace(Pid pid, InstanceId inst, PatternKind kind, std::uint64_t f,
                                       std::uint64_t n, std::uint64_t seed, std::uint32_t rate = 2)
{
    PatternSpec p;
    p.kind = kind;
    p.footprint_pages = f;
    p.accesses = n;
    p.intensity = rate;
    p.stride_pages = 16;
    return generate({pid, 1, p, MpkiClass::Medium}, inst, seed);
}

} // namespace

TEST_CASE("a cold request pays every level plus a full walk")
{
    Hierarchy h(HierarchyConfig{}, {{0, 1, 1}});
    CHECK(h.walk_latency(false) == 400);
    CHECK(h.walk_latency(true) == 100);
    h.submit(req(0, 1, 5));
    const auto done = h.drain();
    REQUIRE(done.size() == 1);
    CHECK(done[0].completion_tick - done[0].issue_tick == 451);
    CHECK(latencies(h, 1) == std::vector<std::uint32_t>{451});
    CHECK(h.raw().walks_started == 1);
}

TEST_CASE("a repeat on the same TPC hits L1")
{
    Hierarchy h(single_tpc(), {{0, 1, 1}});
    h.submit(req(0, 1, 5));
    h.submit(req(1000, 1, 5));
    h.drain();
    CHECK(latencies(h, 1) == std::vector<std::uint32_t>{451, 1});
    CHECK(h.tenants().at(1).l1_hits == 1);
}

TEST_CASE("a neighbouring page hits the L2 sub-entry after a fill")
{
    Hierarchy h(single_tpc(), {{0, 1, 1}});
    h.submit(req(0, 1, 5));
    h.submit(req(1000, 1, 6));
    h.drain();
    // L2 filled only page 5, so page 6 is a sub-entry miss at L2 and at L3.
    CHECK(latencies(h, 1) == std::vector<std::uint32_t>{451, 451});
}

TEST_CASE("concurrent requests to one page coalesce into one walk")
{
    Hierarchy h(HierarchyConfig{}, {{0, 1, 1}});
    for (int i = 0; i < 6; ++i)
        h.submit(req(0, 1, 9));
    h.drain();
    CHECK(h.raw().walks_started == 1);
    CHECK(latencies(h, 1) == std::vector<std::uint32_t>(6, 451));
    const auto &t = h.tenants().at(1);
    CHECK(t.l3_hits + t.l3_misses == 1);
    CHECK(t.l2_coalesced + t.l1_coalesced == 5);
}

TEST_CASE("a page evicted from the TLBs re-walks through the walk cache")
{
    HierarchyConfig c = single_tpc();
    c.l1 = {1, 1, 1, 1};
    c.l2 = {1, 1, 16, 10};
    c.l3 = {1, 1, 16, 40};
    Hierarchy h(c, {{0, 1, 1}});
    h.submit(req(0, 1, 0));
    h.submit(req(1000, 1, 16)); // next region evicts the first everywhere
    h.submit(req(2000, 1, 0));
    h.drain();
    CHECK(latencies(h, 1) == std::vector<std::uint32_t>{451, 451, 151});
    CHECK(h.tenants().at(1).walk_cache_hits == 1);
}

TEST_CASE("the ninth concurrent walk waits for a walker")
{
    Hierarchy h(HierarchyConfig{}, {{0, 1, 1}});
    for (std::uint64_t p = 0; p < 9; ++p)
        h.submit(req(0, 1, p * 16));
    h.drain();
    CHECK(h.raw().walks_queued == 1);
    auto l = latencies(h, 1);
    std::sort(l.begin(), l.end());
    CHECK(std::count(l.begin(), l.end(), 451u) == 8);
    CHECK(l.back() == 851);
}

TEST_CASE("unknown instances and foreign pids are rejected")
{
    Hierarchy h(HierarchyConfig{}, {{0, 1, 1}});
    CHECK_THROWS_AS(h.submit(req(0, 1, 0, 3)), std::invalid_argument);
    CHECK_THROWS_AS(h.submit(req(0, 2, 0, 0)), std::invalid_argument);
    CHECK_THROWS_AS(Hierarchy(HierarchyConfig{}, {{0, 1, 1}, {0, 2, 1}}), std::invalid_argument);
    CHECK_THROWS_AS(Hierarchy(HierarchyConfig{}, {{0, 1, 1}, {1, 1, 1}}), std::invalid_argument);
}

TEST_CASE("walks, misses and probes reconcile")
{
    for (VariantKind k : {VariantKind::Baseline, VariantKind::Star2, VariantKind::Star4,
                          VariantKind::HalfSubDoubleWaySeq}) {
        HierarchyConfig c;
        c.l3_variant.kind = k;
        c.l3 = {8, 8, 16, 40};
        Hierarchy h(c, {{0, 1, 2}, {1, 2, 1}});
        const auto a = pattern_trace(1, 0, PatternKind::Dependent, 3000, 6000, 1);
        const auto b = pattern_trace(2, 1, PatternKind::Stream, 700, 6000, 2);
        const std::vector<std::vector<TraceRecord>> both{a, b};
        const std::vector<std::uint32_t> rates{1, 1};
        for (const auto &item : interleave(std::span<const std::vector<TraceRecord>>(both), rates))
            h.submit(item.rec);
        h.drain();
        const auto &r = h.raw();
        CHECK(r.walks_started == r.l3_misses);
        CHECK(r.walks_completed == r.walks_started);
        CHECK(r.l3_probes == r.l3_hits + r.l3_misses);
        std::uint64_t hits = 0, misses = 0, done = 0;
        for (const auto &[pid, t] : h.tenants()) {
            hits += t.l3_hits;
            misses += t.l3_misses;
            done += t.latencies.size();
            CHECK(t.l2_misses == t.l3_hits + t.l3_misses);
        }
        CHECK(hits + misses == r.l3_probes);
        CHECK(done == 12000);
        h.l3().check_invariants();
    }
}

TEST_CASE("runs are deterministic")
{
    auto run = [] {
        HierarchyConfig c;
        c.l3_variant.kind = VariantKind::Star2;
        Hierarchy h(c, {{0, 1, 3}, {1, 2, 2}});
        const auto a = pattern_trace(1, 0, PatternKind::Block, 4096, 5000, 3);
        const auto b = pattern_trace(2, 1, PatternKind::Dependent, 2000, 5000, 4);
        const std::vector<std::vector<TraceRecord>> both{a, b};
        const std::vector<std::uint32_t> rates{1, 3};
        for (const auto &item : interleave(std::span<const std::vector<TraceRecord>>(both), rates))
            h.submit(item.rec);
        return std::make_pair(h.drain(), h.raw().l3_hits);
    };
    const auto x = run();
    const auto y = run();
    CHECK(x.second == y.second);
    REQUIRE(x.first.size() == y.first.size());
    for (std::size_t i = 0; i < x.first.size(); ++i) {
        CHECK(x.first[i].id == y.first[i].id);
        CHECK(x.first[i].completion_tick == y.first[i].completion_tick);
    }
}

TEST_CASE("a statically partitioned tenant is unaffected by its co-runner")
{
    for (VariantKind k : {VariantKind::StaticPartition, VariantKind::Star2PlusStatic}) {
        const HierarchyConfig c = contended(k);
        const auto quiet = pattern_trace(1, 0, PatternKind::Dependent, 400, 40000, 5, 1);
        const auto noisy = pattern_trace(2, 1, PatternKind::Stride, 5008, 40000, 6, 1);

        Hierarchy alone(c, {{0, 1, 4}, {1, 2, 3}});
        for (const auto &r : quiet)
            alone.submit(r);
        alone.drain();

        Hierarchy mixed(c, {{0, 1, 4}, {1, 2, 3}});
        const std::vector<std::vector<TraceRecord>> both{quiet, noisy};
        const std::vector<std::uint32_t> rates{1, 1};
        for (const auto &item : interleave(std::span<const std::vector<TraceRecord>>(both), rates))
            mixed.submit(item.rec);
        mixed.drain();

        const auto &a = alone.tenants().at(1);
        const auto &m = mixed.tenants().at(1);
        CHECK(a.l3_hits == m.l3_hits);
        CHECK(a.l3_misses == m.l3_misses);
        CHECK(a.latencies == m.latencies);
        CHECK(a.l3_hits > 0);
        CHECK(mixed.tenants().at(2).l3_misses > 0);
    }
}

TEST_CASE("the shared baseline lets a co-runner disturb the quiet tenant")
{
    const HierarchyConfig c = contended();
    const auto quiet = pattern_trace(1, 0, PatternKind::Dependent, 400, 40000, 5, 1);
    const auto noisy = pattern_trace(2, 1, PatternKind::Stride, 5008, 40000, 6, 1);
    Hierarchy alone(c, {{0, 1, 4}, {1, 2, 3}});
    for (const auto &r : quiet)
        alone.submit(r);
    alone.drain();
    Hierarchy mixed(c, {{0, 1, 4}, {1, 2, 3}});
    const std::vector<std::vector<TraceRecord>> both{quiet, noisy};
    const std::vector<std::uint32_t> rates{1, 1};
    for (const auto &item : interleave(std::span<const std::vector<TraceRecord>>(both), rates))
        mixed.submit(item.rec);
    mixed.drain();
    CHECK(mixed.tenants().at(1).l3_hits < alone.tenants().at(1).l3_hits);
}

TEST_CASE("looped tails do not change first-pass statistics when the co-runner is silent")
{
    HierarchyConfig c;
    c.l3 = {8, 8, 16, 40};
    const auto a = pattern_trace(1, 0, PatternKind::Stream, 300, 3000, 1);

    Hierarchy single(c, {{0, 1, 1}, {1, 2, 1}});
    for (const auto &r : a)
        single.submit(r);
    single.drain();

    const std::vector<std::vector<TraceRecord>> traces{a, {}};
    const std::vector<std::uint32_t> rates{2, 1};
    const auto looped = rerun_until_longest(traces, rates);
    Hierarchy rerun(c, {{0, 1, 1}, {1, 2, 1}});
    for (const auto &item : interleave(std::span<const MeasuredTrace>(looped), rates))
        rerun.submit(item.rec, item.measured);
    rerun.drain();

    const auto &x = single.tenants().at(1);
    const auto &y = rerun.tenants().at(1);
    CHECK(x.l3_hits == y.l3_hits);
    CHECK(x.l3_misses == y.l3_misses);
    CHECK(x.latencies == y.latencies);
    CHECK(rerun.tenants().at(2).requests == 0);
}

TEST_CASE("unmeasured requests are excluded from tenant statistics")
{
    Hierarchy h(HierarchyConfig{}, {{0, 1, 1}});
    h.submit(req(0, 1, 5), true);
    h.submit(req(1000, 1, 1000), false);
    h.drain();
    CHECK(h.tenants().at(1).requests == 1);
    CHECK(h.tenants().at(1).latencies.size() == 1);
    CHECK(h.raw().requests == 2);
}
