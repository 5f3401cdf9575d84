#include "doctest.h"

#include <bit>
#include <random>
#include <set>

#include "migtlb/star_tlb.hpp"
#include "star_oracle.hpp"

using namespace migtlb;

namespace {

DecomposedAddress at(std::uint32_t set, std::uint64_t vpb, std::uint32_t sub)
{
    return {0, sub, set, vpb};
}

RequestIdentity who(Pid pid) { return {pid, pid}; }

StarTlb make(std::uint32_t sets, std::uint32_t ways, unsigned max_bases = 2, bool sharing = true)
{
    return StarTlb(StarConfig{{sets, ways, 16, 40}, 65536, max_bases, sharing});
}

// Single-base entry holding the given sub indices.
StarEntry exclusive(std::uint16_t mask)
{
    StarEntry e;
    e.degree = 1;
    e.bases[0] = {true, false, 7, 1, 0, 0};
    for (unsigned i = 0; i < 16; ++i)
        if (mask & (1u << i))
            e.slots[i] = {true, 100 + i, 0, i + 1};
    return e;
}

BaseRecord base(std::uint64_t vpb, Pid pid) { return {true, false, vpb, pid, 0, 0}; }

} // namespace

TEST_CASE("slot mapping examples")
{
    CHECK(slot_map(Layout::Sequential, BaseRole::Joiner, 0) == SlotPosition{8, 0});
    CHECK(slot_map(Layout::Sequential, BaseRole::Incumbent, 0b1010) == SlotPosition{2, 1});
    CHECK(slot_map(Layout::Stride, BaseRole::Joiner, 0b0101) == SlotPosition{5, 1});
    CHECK(slot_map(Layout::Stride, BaseRole::Incumbent, 0b1111) == SlotPosition{14, 1});
    CHECK(slot_map(Layout::NonShared, 1, 0, 9) == SlotPosition{9, 0});
}

TEST_CASE("slot mapping round-trips and gives each base disjoint slots")
{
    for (Layout layout : {Layout::Sequential, Layout::Stride}) {
        for (unsigned degree : {2u, 4u}) {
            std::set<unsigned> seen;
            for (unsigned o = 0; o < degree; ++o) {
                std::set<unsigned> mine;
                for (unsigned i = 0; i < 16; ++i) {
                    const SlotPosition p = slot_map(layout, degree, o, i);
                    CHECK(reconstruct_index(layout, degree, p.phys, p.aib) == i);
                    CHECK(slot_owner(layout, degree, p.phys) == o);
                    CHECK(p.aib < degree);
                    mine.insert(p.phys);
                }
                CHECK(mine.size() == 16 / degree);
                for (unsigned s : mine)
                    CHECK(seen.insert(s).second);
            }
            CHECK(seen.size() == 16);
        }
    }
}

TEST_CASE("layout choice follows the occupancy pattern")
{
    CHECK(choose_layout(0b0111) == Layout::Sequential);
    CHECK(choose_layout(0b10101) == Layout::Stride);
    CHECK(choose_layout(1u << 5) == Layout::Sequential);
    CHECK(choose_layout(0xFF00) == Layout::Sequential);
    CHECK(choose_layout(0x8001) == Layout::Stride);
    CHECK_THROWS_AS(choose_layout(0), ContractViolation);
}

TEST_CASE("transition keeps every translation it can and drops only on collision")
{
    for (unsigned mask = 1; mask < (1u << 16); ++mask) {
        if (std::popcount(mask) >= 8)
            continue;
        StarEntry e = exclusive(static_cast<std::uint16_t>(mask));
        const unsigned dropped = star::transition_to_shared(e, base(9, 2));
        REQUIRE(e.degree == 2);
        REQUIRE(e.layout == choose_layout(static_cast<std::uint16_t>(mask)));
        REQUIRE(e.utilized_by(1) == 0);
        REQUIRE(e.utilized_by(0) + dropped == static_cast<unsigned>(std::popcount(mask)));
        // Survivors sit where a lookup for their index would find them, with the pfn intact.
        for (unsigned i = 0; i < 16; ++i) {
            if (!(mask & (1u << i)))
                continue;
            const SlotPosition p = slot_map(e.layout, 2, 0, i);
            const SubEntrySlot &s = e.slots[p.phys];
            if (s.valid && s.aib == p.aib)
                REQUIRE(s.pfn == 100 + i);
        }
        // Fewer than eight consecutive indices have distinct low bits.
        if (e.layout == Layout::Sequential)
            REQUIRE(dropped == 0);
    }
}

TEST_CASE("collisions during transition keep the more recently touched translation")
{
    // Indices 0 and 1 collide in the stride layout; index 1 was touched later.
    StarEntry e = exclusive(0b100011);
    const unsigned dropped = star::transition_to_shared(e, base(9, 2));
    CHECK(e.layout == Layout::Stride);
    CHECK(dropped == 1);
    const SlotPosition p = slot_map(Layout::Stride, BaseRole::Incumbent, 1);
    CHECK(e.slots[p.phys].pfn == 101);
}

TEST_CASE("share target prefers same process, then lowest utilization, then lowest way")
{
    auto t = make(1, 3);
    // way 0: pid 1 with 3 translations, way 1: pid 2 with 1, way 2: pid 1 with 3.
    for (unsigned i = 0; i < 3; ++i)
        t.insert(at(0, 10, i), i, who(1), 0);
    t.insert(at(0, 20, 0), 0, who(2), 0);
    for (unsigned i = 0; i < 3; ++i)
        t.insert(at(0, 30, i), i, who(1), 0);
    CHECK(t.select_share_target(0, 1) == 0u);
    CHECK(t.select_share_target(0, 2) == 1u);
    CHECK(t.select_share_target(0, 3) == 1u);
}

TEST_CASE("entries at half utilization are not shared")
{
    auto t = make(1, 2);
    for (std::uint64_t v : {1, 2})
        for (unsigned i = 0; i < 8; ++i)
            t.insert(at(0, v, i), i, who(1), 0);
    CHECK_FALSE(t.select_share_target(0, 1).has_value());
    const auto out = t.insert(at(0, 3, 0), 0, who(1), 0);
    CHECK(out.kind == InsertKind::NewEntryEvicted);
    REQUIRE(out.sample_count == 1);
    CHECK(out.samples[0].utilized == 8);
}

TEST_CASE("a full set shares instead of evicting; both bases then hit")
{
    auto t = make(1, 1);
    t.insert(at(0, 1, 3), 13, who(1), 0);
    const auto out = t.insert(at(0, 2, 4), 24, who(2), 1);
    CHECK(out.kind == InsertKind::JoinedShared);
    CHECK(out.sample_count == 0);
    const auto &e = t.entry(0, 0);
    CHECK(e.degree == 2);
    CHECK(e.layout == Layout::Sequential);

    const auto a = t.lookup(at(0, 1, 3), who(1), 2);
    CHECK(a.kind == LookupKind::Hit);
    CHECK(a.pfn == 13);
    CHECK(a.latency_cycles == 40);
    const auto b = t.lookup(at(0, 2, 4), who(2), 3);
    CHECK(b.kind == LookupKind::Hit);
    CHECK(b.pfn == 24);
    CHECK(b.latency_cycles == 80);
    // Index 12 shares slot 4 with index 4 in the joiner's half.
    CHECK(t.lookup(at(0, 2, 12), who(2), 4).kind == LookupKind::MissAib);
    CHECK(t.lookup(at(0, 2, 5), who(2), 4).kind == LookupKind::MissAib);
    t.check_invariants();
}

TEST_CASE("a base that fills its half reverts the entry to exclusive use")
{
    auto t = make(1, 1);
    t.insert(at(0, 1, 0), 1, who(1), 0);
    t.insert(at(0, 2, 0), 2, who(2), 0);
    for (unsigned i = 1; i < 8; ++i)
        t.insert(at(0, 2, i), 2, who(2), 0);
    CHECK(t.entry(0, 0).utilized_by(1) == 8);
    const auto out = t.insert(at(0, 2, 8), 2, who(2), 9);
    REQUIRE(out.sample_count == 1);
    CHECK(out.samples[0].pid == 1);
    CHECK(out.samples[0].utilized == 1);
    CHECK(out.samples[0].capacity == 8);
    CHECK(out.samples[0].shared);
    const auto &e = t.entry(0, 0);
    CHECK(e.degree == 1);
    CHECK(e.bases[0].vpb == 2);
    CHECK(e.utilized() == 9);
    for (unsigned i = 0; i < 9; ++i)
        CHECK(t.lookup(at(0, 2, i), who(2), 10).kind == LookupKind::Hit);
    CHECK(t.lookup(at(0, 1, 0), who(1), 11).kind == LookupKind::MissNoEntry);
    CHECK(t.stats().reverts == 1);
    t.check_invariants();
}

TEST_CASE("evicting a shared entry reports one sample per base")
{
    auto t = make(1, 1);
    t.insert(at(0, 1, 0), 1, who(1), 0);
    t.insert(at(0, 2, 0), 2, who(2), 0);
    t.insert(at(0, 2, 1), 2, who(2), 0);
    // Fill base 1 to 8 so the entry is no longer a share target.
    for (unsigned i = 1; i < 8; ++i)
        t.insert(at(0, 1, i), 1, who(1), 0);
    CHECK_FALSE(t.select_share_target(0, 3).has_value());
    const auto out = t.insert(at(0, 3, 0), 3, who(3), 5);
    CHECK(out.kind == InsertKind::NewEntryEvicted);
    REQUIRE(out.sample_count == 2);
    CHECK(out.samples[0] == EvictionSample{1, 8, 8, true, 5});
    CHECK(out.samples[1] == EvictionSample{2, 2, 8, true, 5});
}

TEST_CASE("sharing disabled behaves as the baseline sub-entry TLB")
{
    auto s = make(4, 4, 2, false);
    SubEntryTlb b({4, 4, 16, 40}, 65536);
    std::mt19937_64 rng(5);
    for (int i = 0; i < 50'000; ++i) {
        const auto d = at(rng() % 4, rng() % 8, rng() % 16);
        const Pid pid = 1 + rng() % 3;
        const auto x = s.lookup(d, who(pid), i);
        const auto y = b.lookup(d, who(pid), i);
        REQUIRE(x.kind == y.kind);
        REQUIRE(x.latency_cycles == y.latency_cycles);
        if (x.hit()) {
            REQUIRE(x.pfn == y.pfn);
            continue;
        }
        const auto xo = s.insert(d, i, who(pid), i);
        const auto yo = b.insert(d, i, who(pid), i);
        REQUIRE(xo.kind == yo.kind);
        REQUIRE(xo.sample_count == yo.sample_count);
        for (std::size_t k = 0; k < xo.sample_count; ++k) {
            REQUIRE(xo.samples[k].utilized == yo.samples[k].utilized);
            REQUIRE(xo.samples[k].pid == yo.samples[k].pid);
        }
    }
    CHECK(s.valid_translations() == b.valid_translations());
}

TEST_CASE("invariants hold over random two- and four-base runs")
{
    for (unsigned max_bases : {2u, 4u}) {
        auto t = make(2, 2, max_bases);
        std::mt19937_64 rng(max_bases);
        for (int i = 0; i < 50'000; ++i) {
            const auto d = at(rng() % 2, rng() % 4, rng() % 16);
            const Pid pid = 1 + rng() % 2;
            if (!t.lookup(d, who(pid), i).hit())
                t.insert(d, i, who(pid), i);
            if (i % 97 == 0)
                t.check_invariants();
            // Whatever was just inserted is immediately visible.
            REQUIRE(t.lookup(d, who(pid), i).kind == LookupKind::Hit);
        }
        t.check_invariants();
        if (max_bases == 4) {
            CHECK(t.stats().promotions > 0);
            CHECK(t.stats().demotions > 0);
        }
    }
}

TEST_CASE("four-base promotion and demotion")
{
    auto t = make(1, 1, 4);
    t.insert(at(0, 1, 0), 1, who(1), 0);
    t.insert(at(0, 2, 1), 2, who(2), 0); // share
    CHECK(t.entry(0, 0).degree == 2);
    t.insert(at(0, 3, 2), 3, who(3), 0); // promote
    CHECK(t.entry(0, 0).degree == 4);
    CHECK(t.entry(0, 0).layout == Layout::Sequential);
    t.insert(at(0, 4, 3), 4, who(4), 0); // free ordinal
    CHECK(t.entry(0, 0).base_count() == 4);
    for (Pid p = 1; p <= 4; ++p) {
        const auto r = t.lookup(at(0, p, p - 1), who(p), 1);
        CHECK(r.kind == LookupKind::Hit);
        CHECK(r.latency_cycles == 40 * p);
    }
    // Base 2 (pid 2) fills its quarter, then needs a fifth translation.
    for (unsigned i : {0u, 2u, 3u})
        t.insert(at(0, 2, i), 2, who(2), 2);
    CHECK(t.entry(0, 0).utilized_by(1) == 4);
    t.lookup(at(0, 4, 3), who(4), 3); // pid 4 becomes the most recent partner
    const auto out = t.insert(at(0, 2, 4), 2, who(2), 4);
    CHECK(out.sample_count == 2);
    const auto &e = t.entry(0, 0);
    CHECK(e.degree == 2);
    CHECK(e.bases[0].owner_pid == 2);
    CHECK(e.bases[1].owner_pid == 4);
    CHECK(t.lookup(at(0, 2, 4), who(2), 5).kind == LookupKind::Hit);
    CHECK(t.lookup(at(0, 4, 3), who(4), 5).kind == LookupKind::Hit);
    CHECK(t.stats().demotions == 1);
    t.check_invariants();
}

TEST_CASE("two-base STAR matches an independent reference model")
{
    const unsigned sets = 16, ways = 4;
    auto t = make(sets, ways);
    oracle::StarOracle ref(sets, ways, 40);
    std::mt19937_64 rng(77);
    for (int i = 0; i < 100'000; ++i) {
        const unsigned set = rng() % sets;
        const std::uint64_t vpb = rng() % 6;
        const unsigned pid = 1 + rng() % 2;
        // Sparse or clustered sub-entry use, so both layouts get exercised.
        const unsigned sub = (rng() % 2) ? rng() % 16 : (rng() % 4) * 4;
        const auto got = t.lookup(at(set, vpb, sub), who(pid), i);
        const auto want = ref.lookup(set, vpb, pid, sub);
        REQUIRE(static_cast<int>(got.kind) == static_cast<int>(want.kind));
        REQUIRE(got.latency_cycles == want.latency);
        if (!got.hit()) {
            t.insert(at(set, vpb, sub), i, who(pid), i);
            ref.insert(set, vpb, pid, sub, i);
        }
    }
    CHECK(t.stats().shares > 0);
    CHECK(t.stats().reverts > 0);
    CHECK(ref.relocations_attempted == 0);
}
