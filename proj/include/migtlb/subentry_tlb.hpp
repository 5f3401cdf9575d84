#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "migtlb/address.hpp"
#include "migtlb/types.hpp"

namespace migtlb {

inline constexpr std::uint32_t kMaxSubentries = 16;

struct SubEntrySlot {
    bool valid = false;
    std::uint64_t pfn = 0;
    std::uint8_t aib = 0;
    // Access-clock value of the last fill or hit on this slot.
    std::uint64_t last_touch = 0;
};

struct BaseRecord {
    bool valid = false;
    bool dirty = false; // stored for format fidelity; traces are read-only
    std::uint64_t vpb = 0;
    Pid owner_pid = 0;
    InstanceId instance = 0;
    std::uint64_t last_access = 0;

    bool matches(std::uint64_t v, Pid pid) const { return valid && vpb == v && owner_pid == pid; }
};

struct TlbEntry {
    BaseRecord base;
    std::array<SubEntrySlot, kMaxSubentries> slots{};
    std::uint64_t lru_stamp = 0;

    std::uint32_t utilized() const;
};

// Contiguous range of ways a request may probe or allocate into. count == 0
// selects every way of the set.
struct WayWindow {
    std::uint32_t first = 0;
    std::uint32_t count = 0;
};

enum class ProbeModel : std::uint8_t {
    Parallel,     // every way compared at once
    TwoPhaseWays, // first half of the ways, then the second half on a miss
};

/// Set-associative TLB whose entries each cover `subentries_per_entry`
/// consecutive pages. Replacement is LRU over entries; recency is refreshed
/// whenever a probe matches an entry's base, even if the sub-entry is empty.
/// Evicting an entry drops all of its sub-entries at once.
class SubEntryTlb {
public:
    SubEntryTlb(const TlbGeometry &geom, std::uint64_t page_size_bytes,
                ProbeModel probe = ProbeModel::Parallel);

    const TlbGeometry &geometry() const { return geom_; }
    const AddressLayout &layout() const { return layout_; }
    DecomposedAddress decompose(std::uint64_t vaddr) const { return layout_.decompose(vaddr); }

    LookupResult lookup(const DecomposedAddress &d, RequestIdentity who, Tick tick,
                        WayWindow window = {});
    InsertOutcome insert(const DecomposedAddress &d, std::uint64_t pfn, RequestIdentity who,
                         Tick tick, WayWindow window = {});

    const TlbEntry &entry(std::uint32_t set, std::uint32_t way) const;
    std::uint64_t valid_translations() const;
    std::uint64_t evictions() const { return evictions_; }

private:
    struct Span {
        std::uint32_t first;
        std::uint32_t count;
    };
    Span resolve(WayWindow w) const;
    TlbEntry &at(std::uint32_t set, std::uint32_t way) { return entries_[set * geom_.ways + way]; }
    std::uint32_t probe_latency(Span span, std::int64_t matched_way) const;

    TlbGeometry geom_;
    AddressLayout layout_;
    ProbeModel probe_;
    std::vector<TlbEntry> entries_;
    std::uint64_t clock_ = 0;
    std::uint64_t evictions_ = 0;
};

} // namespace migtlb
