#include "doctest.h"

#include <list>
#include <random>
#include <set>

#include "migtlb/subentry_tlb.hpp"

using namespace migtlb;

namespace {

const RequestIdentity kWho{0, 1};

DecomposedAddress at(std::uint32_t set, std::uint64_t vpb, std::uint32_t sub)
{
    return {0, sub, set, vpb};
}

// Recency list per set, most recent first.
class ListLru {
public:
    ListLru(std::uint32_t sets, std::uint32_t ways) : sets_(sets), ways_(ways) {}

    LookupKind lookup(const DecomposedAddress &d, Pid pid)
    {
        auto &l = sets_[d.set_index];
        for (auto it = l.begin(); it != l.end(); ++it) {
            if (it->vpb != d.vpb || it->pid != pid)
                continue;
            const bool hit = it->subs.count(d.sub_index) != 0;
            l.splice(l.begin(), l, it);
            return hit ? LookupKind::Hit : LookupKind::MissSubEntry;
        }
        return LookupKind::MissNoEntry;
    }

    // Returns the utilization of the evicted entry, or -1.
    int insert(const DecomposedAddress &d, Pid pid, Pid &evicted_pid)
    {
        auto &l = sets_[d.set_index];
        for (auto it = l.begin(); it != l.end(); ++it) {
            if (it->vpb == d.vpb && it->pid == pid) {
                it->subs.insert(d.sub_index);
                l.splice(l.begin(), l, it);
                return -1;
            }
        }
        int evicted = -1;
        if (l.size() == ways_) {
            evicted = static_cast<int>(l.back().subs.size());
            evicted_pid = l.back().pid;
            l.pop_back();
        }
        l.push_front({d.vpb, pid, {d.sub_index}});
        return evicted;
    }

    std::uint64_t valid() const
    {
        std::uint64_t n = 0;
        for (const auto &l : sets_)
            for (const auto &e : l)
                n += e.subs.size();
        return n;
    }

private:
    struct Line {
        std::uint64_t vpb;
        Pid pid;
        std::set<std::uint32_t> subs;
    };
    std::vector<std::list<Line>> sets_;
    std::uint32_t ways_;
};

} // namespace

TEST_CASE("lookup on an empty TLB misses")
{
    SubEntryTlb t({16, 8, 16, 10}, 65536);
    CHECK(t.lookup(at(3, 5, 0), kWho, 0).kind == LookupKind::MissNoEntry);
}

TEST_CASE("insert then lookup hits; neighbour page in the region is a sub-entry miss")
{
    SubEntryTlb t({16, 8, 16, 10}, 65536);
    const std::uint64_t v = 0x1230000;
    const auto d = t.decompose(v);
    CHECK(t.insert(d, 77, kWho, 0).kind == InsertKind::NewEntryVacant);
    const auto r = t.lookup(d, kWho, 1);
    CHECK(r.kind == LookupKind::Hit);
    CHECK(r.pfn == 77);
    CHECK(r.latency_cycles == 10);
    const auto n = t.decompose(v + 65536);
    REQUIRE(n.vpb == d.vpb);
    REQUIRE(n.set_index == d.set_index);
    CHECK(t.lookup(n, kWho, 2).kind == LookupKind::MissSubEntry);
}

TEST_CASE("process id is part of the tag")
{
    SubEntryTlb t({16, 8, 16, 10}, 65536);
    t.insert(at(0, 1, 0), 1, {0, 1}, 0);
    CHECK(t.lookup(at(0, 1, 0), {0, 2}, 1).kind == LookupKind::MissNoEntry);
}

TEST_CASE("ninth vpb in an 8-way set evicts the least recently used way")
{
    SubEntryTlb t({1, 8, 16, 10}, 65536);
    for (std::uint64_t v = 0; v < 8; ++v)
        t.insert(at(0, v, 0), v, kWho, v);
    // Touch everything except vpb 3.
    for (std::uint64_t v = 0; v < 8; ++v)
        if (v != 3)
            t.lookup(at(0, v, 0), kWho, 10 + v);
    const auto out = t.insert(at(0, 99, 2), 5, kWho, 20);
    CHECK(out.kind == InsertKind::NewEntryEvicted);
    REQUIRE(out.sample_count == 1);
    CHECK(out.samples[0].utilized == 1);
    CHECK(out.samples[0].capacity == 16);
    CHECK(t.entry(0, 3).base.vpb == 99);
    CHECK(t.entry(0, 3).utilized() == 1);
}

TEST_CASE("a sub-entry miss refreshes the entry's recency")
{
    SubEntryTlb t({1, 2, 16, 10}, 65536);
    t.insert(at(0, 1, 0), 1, kWho, 0);
    t.insert(at(0, 2, 0), 2, kWho, 1);
    CHECK(t.lookup(at(0, 1, 5), kWho, 2).kind == LookupKind::MissSubEntry);
    t.insert(at(0, 3, 0), 3, kWho, 3);
    CHECK(t.entry(0, 0).base.vpb == 1);
    CHECK(t.entry(0, 1).base.vpb == 3);
}

TEST_CASE("utilization counts distinct sub indices")
{
    SubEntryTlb t({1, 8, 16, 10}, 65536);
    t.insert(at(0, 1, 0), 1, kWho, 0);
    CHECK(t.entry(0, 0).utilized() == 1);
    t.insert(at(0, 1, 0), 1, kWho, 1);
    t.insert(at(0, 1, 5), 2, kWho, 2);
    CHECK(t.entry(0, 0).utilized() == 2);
    for (std::uint32_t s = 0; s < 16; ++s)
        t.insert(at(0, 1, s), s, kWho, 3 + s);
    CHECK(t.entry(0, 0).utilized() == 16);
    CHECK(t.valid_translations() == 16);
}

TEST_CASE("vacant ways fill lowest first")
{
    SubEntryTlb t({1, 4, 16, 10}, 65536);
    t.insert(at(0, 1, 0), 1, kWho, 0);
    t.insert(at(0, 2, 0), 1, kWho, 0);
    CHECK(t.entry(0, 0).base.vpb == 1);
    CHECK(t.entry(0, 1).base.vpb == 2);
    CHECK_FALSE(t.entry(0, 2).base.valid);
}

TEST_CASE("way windows confine lookups and allocation")
{
    SubEntryTlb t({1, 8, 16, 10}, 65536);
    const WayWindow a{0, 4}, b{4, 4};
    for (std::uint64_t v = 0; v < 10; ++v)
        t.insert(at(0, v, 0), v, {0, 1}, v, a);
    t.insert(at(0, 100, 0), 1, {1, 2}, 11, b);
    for (std::uint32_t w = 0; w < 4; ++w)
        CHECK(t.entry(0, w).base.owner_pid == 1);
    CHECK(t.entry(0, 4).base.owner_pid == 2);
    CHECK(t.lookup(at(0, 100, 0), {1, 2}, 12, a).kind == LookupKind::MissNoEntry);
    CHECK(t.lookup(at(0, 100, 0), {1, 2}, 12, b).kind == LookupKind::Hit);
}

TEST_CASE("two-phase probe charges double past the first half")
{
    SubEntryTlb t({1, 4, 8, 10}, 65536, ProbeModel::TwoPhaseWays);
    for (std::uint64_t v = 0; v < 4; ++v)
        t.insert(at(0, v, 0), v, kWho, v);
    CHECK(t.lookup(at(0, 0, 0), kWho, 5).latency_cycles == 10);
    CHECK(t.lookup(at(0, 1, 0), kWho, 5).latency_cycles == 10);
    CHECK(t.lookup(at(0, 2, 0), kWho, 5).latency_cycles == 20);
    CHECK(t.lookup(at(0, 3, 0), kWho, 5).latency_cycles == 20);
    CHECK(t.lookup(at(0, 9, 0), kWho, 5).latency_cycles == 20);
}

TEST_CASE("matches a list-based LRU over 1e5 random operations")
{
    const std::uint32_t sets = 4, ways = 4;
    SubEntryTlb t({sets, ways, 16, 10}, 65536);
    ListLru ref(sets, ways);
    std::mt19937_64 rng(2024);
    std::uint64_t capacity_max = 0;
    for (int i = 0; i < 100'000; ++i) {
        const DecomposedAddress d = at(rng() % sets, rng() % 9, rng() % 16);
        const Pid pid = 1 + rng() % 2;
        const RequestIdentity who{pid - 1, pid};
        const auto got = t.lookup(d, who, i);
        const auto want = ref.lookup(d, pid);
        REQUIRE(got.kind == want);
        if (got.hit())
            continue;
        Pid evicted_pid = 0;
        const int evicted = ref.insert(d, pid, evicted_pid);
        const auto out = t.insert(d, i, who, i);
        if (evicted < 0) {
            REQUIRE(out.sample_count == 0);
        } else {
            REQUIRE(out.kind == InsertKind::NewEntryEvicted);
            REQUIRE(out.samples[0].utilized == static_cast<std::uint32_t>(evicted));
            REQUIRE(out.samples[0].pid == evicted_pid);
            // The replacement holds only the triggering translation.
            std::uint32_t refilled = 0;
            for (std::uint32_t w = 0; w < ways; ++w) {
                const auto &e = t.entry(d.set_index, w);
                if (e.base.matches(d.vpb, pid))
                    refilled = e.utilized();
            }
            REQUIRE(refilled == 1);
        }
        REQUIRE(t.valid_translations() == ref.valid());
        capacity_max = std::max(capacity_max, t.valid_translations());
    }
    CHECK(capacity_max <= std::uint64_t{sets} * ways * 16);
}
