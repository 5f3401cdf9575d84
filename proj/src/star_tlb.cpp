#include "migtlb/star_tlb.hpp"

#include <algorithm>
#include <bit>

namespace migtlb {

const char *to_string(Layout layout)
{
    switch (layout) {
    case Layout::NonShared: return "non_shared";
    case Layout::Sequential: return "sequential";
    case Layout::Stride: return "stride";
    }
    return "?";
}

namespace {

// Bits of the 4-bit sub-entry index that address a slot within one base's share.
unsigned local_bits(unsigned degree)
{
    switch (degree) {
    case 1: return 4;
    case 2: return 3;
    case 4: return 2;
    default: throw ContractViolation("share degree must be 1, 2 or 4");
    }
}

} // namespace

SlotPosition slot_map(Layout layout, unsigned degree, unsigned ordinal, unsigned sub_index)
{
    expects(sub_index < 16, "sub-entry index is 4 bits");
    if (degree == 1)
        return {static_cast<std::uint8_t>(sub_index), 0};
    expects(layout != Layout::NonShared, "slot_map needs a shared layout");
    expects(ordinal < degree, "base ordinal out of range");
    const unsigned n = local_bits(degree);
    const unsigned share = 1u << n;
    unsigned local, aib, phys;
    if (layout == Layout::Sequential) {
        local = sub_index & (share - 1);
        aib = sub_index >> n;
        phys = ordinal * share + local;
    } else {
        local = sub_index >> (4 - n);
        aib = sub_index & ((1u << (4 - n)) - 1);
        phys = degree * local + ordinal;
    }
    return {static_cast<std::uint8_t>(phys), static_cast<std::uint8_t>(aib)};
}

SlotPosition slot_map(Layout layout, BaseRole role, unsigned sub_index)
{
    return slot_map(layout, 2, static_cast<unsigned>(role), sub_index);
}

unsigned slot_owner(Layout layout, unsigned degree, unsigned phys)
{
    expects(phys < 16, "physical slot out of range");
    if (degree == 1)
        return 0;
    expects(layout != Layout::NonShared, "shared entry needs a shared layout");
    const unsigned n = local_bits(degree);
    return layout == Layout::Sequential ? phys >> n : phys % degree;
}

unsigned reconstruct_index(Layout layout, unsigned degree, unsigned phys, unsigned aib)
{
    expects(phys < 16, "physical slot out of range");
    if (degree == 1)
        return phys;
    expects(layout != Layout::NonShared, "shared entry needs a shared layout");
    const unsigned n = local_bits(degree);
    expects(aib < (1u << (4 - n)), "aib wider than the dropped index bits");
    if (layout == Layout::Sequential)
        return (aib << n) | (phys & ((1u << n) - 1));
    return ((phys / degree) << (4 - n)) | aib;
}

unsigned reconstruct_index(Layout layout, SlotPosition pos)
{
    return reconstruct_index(layout, 2, pos.phys, pos.aib);
}

Layout choose_layout(std::uint16_t occupied_mask)
{
    expects(occupied_mask != 0, "an eligible entry has at least one valid sub-entry");
    const unsigned lo = static_cast<unsigned>(std::countr_zero(occupied_mask));
    const unsigned hi = 15u - static_cast<unsigned>(std::countl_zero(occupied_mask));
    const unsigned count = static_cast<unsigned>(std::popcount(occupied_mask));
    return hi - lo + 1 == count ? Layout::Sequential : Layout::Stride;
}

unsigned StarEntry::base_count() const
{
    unsigned n = 0;
    for (unsigned o = 0; o < 4; ++o)
        n += bases[o].valid ? 1 : 0;
    return n;
}

unsigned StarEntry::utilized() const
{
    unsigned n = 0;
    for (const auto &s : slots)
        n += s.valid ? 1 : 0;
    return n;
}

unsigned StarEntry::utilized_by(unsigned ordinal) const
{
    if (!shared())
        return ordinal == 0 ? utilized() : 0;
    unsigned n = 0;
    for (unsigned p = 0; p < 16; ++p)
        if (slots[p].valid && slot_owner(layout, degree, p) == ordinal)
            ++n;
    return n;
}

std::uint16_t StarEntry::occupancy_mask() const
{
    std::uint16_t mask = 0;
    for (unsigned p = 0; p < 16; ++p)
        if (slots[p].valid)
            mask |= static_cast<std::uint16_t>(1u << p);
    return mask;
}

namespace star {
namespace {

constexpr int kEvicted = -1;

// Move every translation to its slot under a new (layout, degree), renumbering
// base ordinals through `new_ordinal`. Slot collisions keep the most recently
// touched translation; the count of dropped translations is returned.
unsigned remap(StarEntry &e, Layout to_layout, unsigned to_degree,
               const std::array<int, 4> &new_ordinal)
{
    std::array<SubEntrySlot, 16> next{};
    unsigned dropped = 0;
    for (unsigned p = 0; p < 16; ++p) {
        const SubEntrySlot &s = e.slots[p];
        if (!s.valid)
            continue;
        const unsigned owner = slot_owner(e.layout, e.degree, p);
        if (new_ordinal[owner] == kEvicted)
            continue;
        const unsigned sub = reconstruct_index(e.layout, e.degree, p, s.aib);
        const SlotPosition pos =
            slot_map(to_layout, to_degree, static_cast<unsigned>(new_ordinal[owner]), sub);
        SubEntrySlot &dst = next[pos.phys];
        if (dst.valid) {
            ++dropped;
            if (dst.last_touch >= s.last_touch)
                continue;
        }
        dst = s;
        dst.aib = pos.aib;
    }
    e.slots = next;
    e.layout = to_layout;
    e.degree = static_cast<std::uint8_t>(to_degree);
    return dropped;
}

EvictionSample base_sample(const StarEntry &e, unsigned ordinal, Tick tick)
{
    return {e.bases[ordinal].owner_pid, e.utilized_by(ordinal), e.capacity_per_base(), true, tick};
}

} // namespace

unsigned transition_to_shared(StarEntry &e, const BaseRecord &joiner)
{
    expects(e.valid() && !e.shared(), "only a single-base entry can start sharing");
    const Layout layout = choose_layout(e.occupancy_mask());
    const unsigned dropped = remap(e, layout, 2, {0, kEvicted, kEvicted, kEvicted});
    e.bases[1] = joiner;
    e.bases[1].valid = true;
    return dropped;
}

unsigned promote_to_four(StarEntry &e, const BaseRecord &joiner)
{
    expects(e.degree == 2, "only a two-base entry can be promoted");
    const unsigned dropped = remap(e, e.layout, 4, {0, 1, kEvicted, kEvicted});
    e.bases[2] = joiner;
    e.bases[2].valid = true;
    return dropped;
}

EvictionSample revert_to_exclusive(StarEntry &e, unsigned surviving_ordinal, Tick tick)
{
    expects(e.degree == 2, "revert applies to a two-base entry");
    expects(surviving_ordinal < 2, "surviving base must be 0 or 1");
    const unsigned evicted = 1 - surviving_ordinal;
    const EvictionSample sample = base_sample(e, evicted, tick);
    std::array<int, 4> ordinals{kEvicted, kEvicted, kEvicted, kEvicted};
    ordinals[surviving_ordinal] = 0;
    remap(e, Layout::NonShared, 1, ordinals);
    e.bases[0] = e.bases[surviving_ordinal];
    e.bases[1] = BaseRecord{};
    return sample;
}

void demote_to_two(StarEntry &e, unsigned demanding_ordinal, Tick tick, InsertOutcome &out)
{
    expects(e.degree == 4, "demotion applies to a four-base entry");
    expects(e.bases[demanding_ordinal].valid, "demanding base must be resident");
    int partner = -1;
    for (unsigned o = 0; o < 4; ++o) {
        if (o == demanding_ordinal || !e.bases[o].valid)
            continue;
        if (partner < 0 || e.bases[o].last_access > e.bases[partner].last_access)
            partner = static_cast<int>(o);
    }
    expects(partner >= 0, "a four-base entry holds at least two bases");

    std::array<int, 4> ordinals{kEvicted, kEvicted, kEvicted, kEvicted};
    const unsigned lo = std::min<unsigned>(demanding_ordinal, static_cast<unsigned>(partner));
    const unsigned hi = std::max<unsigned>(demanding_ordinal, static_cast<unsigned>(partner));
    ordinals[lo] = 0;
    ordinals[hi] = 1;
    for (unsigned o = 0; o < 4; ++o)
        if (e.bases[o].valid && ordinals[o] == kEvicted)
            out.add_sample(base_sample(e, o, tick));

    remap(e, e.layout, 2, ordinals);
    const BaseRecord first = e.bases[lo];
    const BaseRecord second = e.bases[hi];
    e.bases = {};
    e.bases[0] = first;
    e.bases[1] = second;
}

} // namespace star

StarTlb::StarTlb(const StarConfig &cfg)
    : cfg_(cfg)
    , layout_(PageConfig{cfg.page_size_bytes, 16}, cfg.geometry.sets)
    , entries_(std::size_t{cfg.geometry.sets} * cfg.geometry.ways)
{
    expects(cfg.geometry.subentries_per_entry == 16, "sharing requires 16 sub-entries per entry");
    expects(cfg.geometry.ways > 0, "ways must be positive");
    expects(cfg.max_bases == 2 || cfg.max_bases == 4, "max_bases must be 2 or 4");
}

StarTlb::Span StarTlb::resolve(WayWindow w) const
{
    if (w.count == 0)
        return {0, cfg_.geometry.ways};
    expects(w.first + w.count <= cfg_.geometry.ways, "way window outside the set");
    return {w.first, w.count};
}

void StarTlb::touch(StarEntry &e, unsigned ordinal)
{
    e.lru_stamp = clock_;
    e.bases[ordinal].last_access = clock_;
}

void StarTlb::fill(StarEntry &e, SlotPosition pos, std::uint64_t pfn)
{
    SubEntrySlot &s = e.slots[pos.phys];
    s.valid = true;
    s.pfn = pfn;
    s.aib = pos.aib;
    s.last_touch = clock_;
}

LookupResult StarTlb::lookup(const DecomposedAddress &d, RequestIdentity who, Tick,
                             WayWindow window)
{
    expects(d.set_index < cfg_.geometry.sets, "set index out of range");
    const Span span = resolve(window);
    const std::uint32_t base_latency = cfg_.geometry.lookup_latency_cycles;
    for (std::uint32_t w = span.first; w < span.first + span.count; ++w) {
        StarEntry &e = at(d.set_index, w);
        if (!e.valid())
            continue;
        for (unsigned o = 0; o < e.degree; ++o) {
            if (!e.bases[o].matches(d.vpb, who.process_id))
                continue;
            ++clock_;
            touch(e, o);
            LookupResult r;
            // Bases of a shared entry are compared one after another.
            r.latency_cycles = base_latency * (e.shared() ? o + 1 : 1);
            const SlotPosition pos = slot_map(e.layout, e.degree, o, d.sub_index);
            SubEntrySlot &s = e.slots[pos.phys];
            if (s.valid && s.aib == pos.aib) {
                s.last_touch = clock_;
                r.kind = LookupKind::Hit;
                r.pfn = s.pfn;
            } else {
                r.kind = e.shared() ? LookupKind::MissAib : LookupKind::MissSubEntry;
            }
            return r;
        }
    }
    return {LookupKind::MissNoEntry, 0, base_latency};
}

InsertOutcome StarTlb::insert_into_base(StarEntry &e, unsigned ordinal, const DecomposedAddress &d,
                                        std::uint64_t pfn, Tick tick)
{
    InsertOutcome out;
    out.kind = InsertKind::FilledExisting;
    touch(e, ordinal);
    SlotPosition pos = slot_map(e.layout, e.degree, ordinal, d.sub_index);
    const SubEntrySlot &s = e.slots[pos.phys];
    if (!e.shared() || (s.valid && s.aib == pos.aib)) {
        fill(e, pos, pfn);
        return out;
    }

    if (e.utilized_by(ordinal) == e.capacity_per_base()) {
        // The base outgrew its share: hand it more of the entry.
        if (e.degree == 2) {
            out.add_sample(star::revert_to_exclusive(e, ordinal, tick));
            ++stats_.reverts;
            ++stats_.base_evictions;
            ordinal = 0;
        } else {
            const std::size_t before = out.sample_count;
            const std::uint64_t vpb = e.bases[ordinal].vpb;
            const Pid pid = e.bases[ordinal].owner_pid;
            star::demote_to_two(e, ordinal, tick, out);
            ++stats_.demotions;
            stats_.base_evictions += out.sample_count - before;
            ordinal = e.bases[0].matches(vpb, pid) ? 0 : 1;
        }
        pos = slot_map(e.layout, e.degree, ordinal, d.sub_index);
    }

    if (e.slots[pos.phys].valid && e.slots[pos.phys].aib != pos.aib)
        ++stats_.aib_replacements;
    fill(e, pos, pfn);
    return out;
}

void StarTlb::join(StarEntry &e, const BaseRecord &base, const DecomposedAddress &d,
                   std::uint64_t pfn)
{
    unsigned ordinal;
    if (e.degree == 1) {
        stats_.layout_conflict_drops += star::transition_to_shared(e, base);
        ++stats_.shares;
        ordinal = 1;
    } else if (e.degree == 2) {
        stats_.layout_conflict_drops += star::promote_to_four(e, base);
        ++stats_.promotions;
        ordinal = 2;
    } else {
        ordinal = 0;
        while (e.bases[ordinal].valid)
            ++ordinal;
        e.bases[ordinal] = base;
        ++stats_.joins_into_four;
    }
    // After the eager remap every slot owned by the new base is empty.
    const SlotPosition pos = slot_map(e.layout, e.degree, ordinal, d.sub_index);
    touch(e, ordinal);
    fill(e, pos, pfn);
}

void StarTlb::evict_whole(StarEntry &e, Tick tick, InsertOutcome &out)
{
    if (e.shared()) {
        for (unsigned o = 0; o < e.degree; ++o)
            if (e.bases[o].valid)
                out.add_sample({e.bases[o].owner_pid, e.utilized_by(o), e.capacity_per_base(),
                                true, tick});
    } else {
        out.add_sample({e.bases[0].owner_pid, e.utilized(), 16, false, tick});
    }
    ++stats_.entry_evictions;
    e = StarEntry{};
}

InsertOutcome StarTlb::insert(const DecomposedAddress &d, std::uint64_t pfn, RequestIdentity who,
                              Tick tick, WayWindow window)
{
    expects(d.set_index < cfg_.geometry.sets, "set index out of range");
    const Span span = resolve(window);
    ++clock_;

    StarEntry *vacant = nullptr;
    StarEntry *victim = nullptr;
    for (std::uint32_t w = span.first; w < span.first + span.count; ++w) {
        StarEntry &e = at(d.set_index, w);
        if (!e.valid()) {
            if (vacant == nullptr)
                vacant = &e;
            continue;
        }
        for (unsigned o = 0; o < e.degree; ++o)
            if (e.bases[o].matches(d.vpb, who.process_id))
                return insert_into_base(e, o, d, pfn, tick);
        if (victim == nullptr || e.lru_stamp < victim->lru_stamp)
            victim = &e;
    }

    BaseRecord base;
    base.valid = true;
    base.vpb = d.vpb;
    base.owner_pid = who.process_id;
    base.instance = who.instance_id;

    InsertOutcome out;
    if (vacant != nullptr) {
        *vacant = StarEntry{};
        vacant->degree = 1;
        vacant->bases[0] = base;
        touch(*vacant, 0);
        fill(*vacant, {static_cast<std::uint8_t>(d.sub_index), 0}, pfn);
        out.kind = InsertKind::NewEntryVacant;
        return out;
    }

    if (cfg_.sharing_enabled) {
        if (auto way = select_share_target(d.set_index, who.process_id, window)) {
            join(at(d.set_index, *way), base, d, pfn);
            out.kind = InsertKind::JoinedShared;
            return out;
        }
    }

    evict_whole(*victim, tick, out);
    victim->degree = 1;
    victim->bases[0] = base;
    touch(*victim, 0);
    fill(*victim, {static_cast<std::uint8_t>(d.sub_index), 0}, pfn);
    out.kind = InsertKind::NewEntryEvicted;
    return out;
}

std::optional<std::uint32_t> StarTlb::select_share_target(std::uint32_t set, Pid pid,
                                                          WayWindow window) const
{
    const Span span = resolve(window);

    struct Pick {
        std::optional<std::uint32_t> way;
        bool same_pid = false;
        unsigned utilized = 0;
        void offer(std::uint32_t w, bool same, unsigned util)
        {
            // Same process first, then lowest utilization, then lowest way.
            if (!way || (same && !same_pid) || (same == same_pid && util < utilized)) {
                way = w;
                same_pid = same;
                utilized = util;
            }
        }
    };

    Pick single;
    for (std::uint32_t w = span.first; w < span.first + span.count; ++w) {
        const StarEntry &e = at(set, w);
        if (e.degree == 1 && e.utilized() < 8)
            single.offer(w, e.bases[0].owner_pid == pid, e.utilized());
    }
    if (single.way || cfg_.max_bases < 4)
        return single.way;

    Pick multi;
    for (std::uint32_t w = span.first; w < span.first + span.count; ++w) {
        const StarEntry &e = at(set, w);
        bool eligible = false;
        if (e.degree == 2)
            eligible = e.utilized_by(0) < 4 && e.utilized_by(1) < 4;
        else if (e.degree == 4)
            eligible = e.base_count() < 4;
        if (!eligible)
            continue;
        bool same = false;
        for (const auto &b : e.bases)
            same = same || (b.valid && b.owner_pid == pid);
        multi.offer(w, same, e.utilized());
    }
    return multi.way;
}

const StarEntry &StarTlb::entry(std::uint32_t set, std::uint32_t way) const
{
    expects(set < cfg_.geometry.sets && way < cfg_.geometry.ways, "entry coordinates out of range");
    return at(set, way);
}

std::uint64_t StarTlb::valid_translations() const
{
    std::uint64_t n = 0;
    for (const auto &e : entries_)
        n += e.utilized();
    return n;
}

void StarTlb::check_invariants() const
{
    for (std::uint32_t set = 0; set < cfg_.geometry.sets; ++set) {
        for (std::uint32_t w = 0; w < cfg_.geometry.ways; ++w) {
            const StarEntry &e = at(set, w);
            if (!e.valid()) {
                expects(e.utilized() == 0 && e.base_count() == 0, "invalid entry holds state");
                continue;
            }
            expects(e.degree == 1 || e.degree == 2 || e.degree == 4, "bad share degree");
            expects((e.layout == Layout::NonShared) == (e.degree == 1),
                    "layout must be non-shared exactly when one base is resident");
            expects(e.bases[0].valid || e.degree == 4, "base 0 missing");
            if (e.degree == 1)
                expects(e.base_count() == 1, "single-base entry holds extra bases");
            if (e.degree == 2)
                expects(e.bases[0].valid && e.bases[1].valid && e.base_count() == 2,
                        "two-base entry must hold exactly bases 0 and 1");
            if (e.degree == 4)
                expects(e.base_count() >= 2, "four-base entry holds fewer than two bases");
            for (unsigned p = 0; p < 16; ++p) {
                const SubEntrySlot &s = e.slots[p];
                if (!s.valid)
                    continue;
                expects(e.bases[slot_owner(e.layout, e.degree, p)].valid,
                        "translation owned by an absent base");
                expects(s.aib < (e.degree == 1 ? 1u : e.degree == 2 ? 2u : 4u), "aib too wide");
            }
            for (unsigned o = 0; o < 4; ++o) {
                if (!e.bases[o].valid)
                    continue;
                expects(e.utilized_by(o) <= e.capacity_per_base(), "base over its capacity");
                for (std::uint32_t w2 = 0; w2 < cfg_.geometry.ways; ++w2) {
                    const StarEntry &f = at(set, w2);
                    for (unsigned o2 = 0; o2 < 4; ++o2) {
                        if ((w2 == w && o2 == o) || !f.valid() || !f.bases[o2].valid)
                            continue;
                        expects(!f.bases[o2].matches(e.bases[o].vpb, e.bases[o].owner_pid),
                                "duplicate base in a set");
                    }
                }
            }
        }
    }
}

} // namespace migtlb
