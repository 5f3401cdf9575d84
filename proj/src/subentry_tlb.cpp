#include "migtlb/subentry_tlb.hpp"

#include <algorithm>

namespace migtlb {

std::uint32_t TlbEntry::utilized() const
{
    std::uint32_t n = 0;
    for (const auto &s : slots)
        n += s.valid ? 1 : 0;
    return n;
}

SubEntryTlb::SubEntryTlb(const TlbGeometry &geom, std::uint64_t page_size_bytes, ProbeModel probe)
    : geom_(geom)
    , layout_(PageConfig{page_size_bytes, geom.subentries_per_entry}, geom.sets)
    , probe_(probe)
    , entries_(std::size_t{geom.sets} * geom.ways)
{
    expects(geom.ways > 0, "ways must be positive");
    expects(geom.subentries_per_entry <= kMaxSubentries, "at most 16 sub-entries per entry");
    expects(probe != ProbeModel::TwoPhaseWays || geom.ways % 2 == 0,
            "two-phase probing needs an even way count");
}

SubEntryTlb::Span SubEntryTlb::resolve(WayWindow w) const
{
    if (w.count == 0)
        return {0, geom_.ways};
    expects(w.first + w.count <= geom_.ways, "way window outside the set");
    return {w.first, w.count};
}

std::uint32_t SubEntryTlb::probe_latency(Span span, std::int64_t matched_way) const
{
    const std::uint32_t base = geom_.lookup_latency_cycles;
    if (probe_ == ProbeModel::Parallel)
        return base;
    const std::int64_t first_half_end = span.first + std::max<std::uint32_t>(1, span.count / 2);
    if (matched_way >= 0 && matched_way < first_half_end)
        return base;
    return 2 * base;
}

LookupResult SubEntryTlb::lookup(const DecomposedAddress &d, RequestIdentity who, Tick,
                                 WayWindow window)
{
    expects(d.set_index < geom_.sets, "set index out of range");
    const Span span = resolve(window);
    for (std::uint32_t w = span.first; w < span.first + span.count; ++w) {
        TlbEntry &e = at(d.set_index, w);
        if (!e.base.matches(d.vpb, who.process_id))
            continue;
        ++clock_;
        e.lru_stamp = clock_;
        e.base.last_access = clock_;
        LookupResult r;
        r.latency_cycles = probe_latency(span, w);
        SubEntrySlot &slot = e.slots[d.sub_index];
        if (slot.valid) {
            slot.last_touch = clock_;
            r.kind = LookupKind::Hit;
            r.pfn = slot.pfn;
        } else {
            r.kind = LookupKind::MissSubEntry;
        }
        return r;
    }
    return {LookupKind::MissNoEntry, 0, probe_latency(span, -1)};
}

InsertOutcome SubEntryTlb::insert(const DecomposedAddress &d, std::uint64_t pfn,
                                  RequestIdentity who, Tick tick, WayWindow window)
{
    expects(d.set_index < geom_.sets, "set index out of range");
    const Span span = resolve(window);
    ++clock_;
    InsertOutcome out;

    auto fill = [&](TlbEntry &e) {
        SubEntrySlot &slot = e.slots[d.sub_index];
        slot.valid = true;
        slot.pfn = pfn;
        slot.aib = 0;
        slot.last_touch = clock_;
        e.lru_stamp = clock_;
        e.base.last_access = clock_;
    };
    auto install = [&](TlbEntry &e) {
        e = TlbEntry{};
        e.base.valid = true;
        e.base.vpb = d.vpb;
        e.base.owner_pid = who.process_id;
        e.base.instance = who.instance_id;
        fill(e);
    };

    TlbEntry *vacant = nullptr;
    TlbEntry *victim = nullptr;
    for (std::uint32_t w = span.first; w < span.first + span.count; ++w) {
        TlbEntry &e = at(d.set_index, w);
        if (e.base.matches(d.vpb, who.process_id)) {
            fill(e);
            out.kind = InsertKind::FilledExisting;
            return out;
        }
        if (!e.base.valid) {
            if (vacant == nullptr)
                vacant = &e;
        } else if (victim == nullptr || e.lru_stamp < victim->lru_stamp) {
            victim = &e;
        }
    }

    if (vacant != nullptr) {
        install(*vacant);
        out.kind = InsertKind::NewEntryVacant;
        return out;
    }
    out.add_sample({victim->base.owner_pid, victim->utilized(), geom_.subentries_per_entry, false,
                    tick});
    ++evictions_;
    install(*victim);
    out.kind = InsertKind::NewEntryEvicted;
    return out;
}

const TlbEntry &SubEntryTlb::entry(std::uint32_t set, std::uint32_t way) const
{
    expects(set < geom_.sets && way < geom_.ways, "entry coordinates out of range");
    return entries_[set * geom_.ways + way];
}

std::uint64_t SubEntryTlb::valid_translations() const
{
    std::uint64_t n = 0;
    for (const auto &e : entries_)
        if (e.base.valid)
            n += e.utilized();
    return n;
}

} // namespace migtlb
