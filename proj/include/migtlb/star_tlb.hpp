#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "migtlb/address.hpp"
#include "migtlb/subentry_tlb.hpp"
#include "migtlb/types.hpp"

namespace migtlb {

// Entry layout state. The numeric values are the hardware encoding.
enum class Layout : std::uint8_t {
    NonShared = 0b00,
    Sequential = 0b01, // bases own contiguous halves (quarters at degree 4)
    Stride = 0b10,     // bases own interleaved slots
};

const char *to_string(Layout layout);

// Role of a base inside a two-base entry: the incumbent is the entry's
// occupant before sharing, the joiner is the base admitted by sharing.
enum class BaseRole : std::uint8_t { Incumbent = 0, Joiner = 1 };

struct SlotPosition {
    std::uint8_t phys = 0; // physical sub-entry, 0..15
    std::uint8_t aib = 0;  // index bits dropped by the mapping

    friend bool operator==(const SlotPosition &, const SlotPosition &) = default;
};

/// Where a base's translation for a 4-bit sub-entry index lives when the
/// entry is shared by `degree` bases (2 or 4). Each base then owns 16/degree
/// slots addressed by a local index of log2(16/degree) bits; the remaining
/// bits of the sub-entry index become the AIB.
///
/// Sequential: local = low bits, aib = high bits, slot = ordinal * (16/degree) + local.
/// Stride:     local = high bits, aib = low bits, slot = degree * local + ordinal.
///
/// Degree 1 (non-shared) is the identity mapping with aib 0.
SlotPosition slot_map(Layout layout, unsigned degree, unsigned ordinal, unsigned sub_index);
SlotPosition slot_map(Layout layout, BaseRole role, unsigned sub_index);

// Base ordinal that owns a physical slot under a layout.
unsigned slot_owner(Layout layout, unsigned degree, unsigned phys);

// Inverse of slot_map: the 4-bit sub-entry index stored at (phys, aib).
unsigned reconstruct_index(Layout layout, unsigned degree, unsigned phys, unsigned aib);
unsigned reconstruct_index(Layout layout, SlotPosition pos);

// Sequential when the occupied indices form one gap-free run, Stride otherwise.
Layout choose_layout(std::uint16_t occupied_mask);

struct StarEntry {
    std::array<BaseRecord, 4> bases{};
    std::uint8_t degree = 0; // 0 = invalid entry, else 1, 2 or 4
    Layout layout = Layout::NonShared;
    std::array<SubEntrySlot, 16> slots{};
    std::uint64_t lru_stamp = 0;

    bool valid() const { return degree != 0; }
    bool shared() const { return degree > 1; }
    unsigned capacity_per_base() const { return 16u / degree; }
    unsigned base_count() const;
    unsigned utilized() const;
    unsigned utilized_by(unsigned ordinal) const;
    std::uint16_t occupancy_mask() const;
};

// Operations on a single entry. They are the building blocks of StarTlb::insert
// and are exposed for direct testing.
namespace star {

/// Turn a non-shared entry into a two-base entry. The incumbent's translations
/// are remapped to their incumbent-role slots under the layout chosen from the
/// current occupancy; when two land on the same slot the most recently touched
/// one is kept. Returns how many translations were dropped that way.
unsigned transition_to_shared(StarEntry &e, const BaseRecord &joiner);

/// Two-base entry to four-base entry (the existing layout strategy is kept).
unsigned promote_to_four(StarEntry &e, const BaseRecord &joiner);

/// Two-base entry back to a single base. The other base is evicted and its
/// sample returned; surviving translations return to their 4-bit positions.
EvictionSample revert_to_exclusive(StarEntry &e, unsigned surviving_ordinal, Tick tick);

/// Four-base entry down to two bases: `demanding` and the most recently used
/// other base survive, every other base is evicted into `out`.
void demote_to_two(StarEntry &e, unsigned demanding_ordinal, Tick tick, InsertOutcome &out);

} // namespace star

struct StarConfig {
    TlbGeometry geometry{128, 8, 16, 40};
    std::uint64_t page_size_bytes = 65536;
    unsigned max_bases = 2;    // 2, or 4 for the four-base extension
    bool sharing_enabled = true;
};

struct StarStats {
    std::uint64_t shares = 0;               // non-shared -> two bases
    std::uint64_t promotions = 0;           // two -> four bases
    std::uint64_t joins_into_four = 0;      // new base into a free four-base ordinal
    std::uint64_t reverts = 0;              // two bases -> one
    std::uint64_t demotions = 0;            // four bases -> two
    std::uint64_t layout_conflict_drops = 0;
    std::uint64_t aib_replacements = 0;
    std::uint64_t entry_evictions = 0;
    std::uint64_t base_evictions = 0;
};

/// Sharing-aware sub-entry TLB. Behaves as the baseline LRU sub-entry TLB
/// until a set has no vacant way; then a new base may share an
/// under-utilized entry instead of evicting one.
class StarTlb {
public:
    explicit StarTlb(const StarConfig &cfg);

    const StarConfig &config() const { return cfg_; }
    const TlbGeometry &geometry() const { return cfg_.geometry; }
    DecomposedAddress decompose(std::uint64_t vaddr) const { return layout_.decompose(vaddr); }

    LookupResult lookup(const DecomposedAddress &d, RequestIdentity who, Tick tick,
                        WayWindow window = {});
    InsertOutcome insert(const DecomposedAddress &d, std::uint64_t pfn, RequestIdentity who,
                         Tick tick, WayWindow window = {});

    /// Way that a new base would share, or nullopt when the set must fall
    /// back to LRU eviction. Single-base entries with fewer than eight valid
    /// sub-entries qualify; entries of the same process are preferred, then
    /// the lowest utilization. With four-base sharing enabled, two-base
    /// entries whose bases each use fewer than four sub-entries (and
    /// four-base entries with a free base) are considered when no
    /// single-base entry qualifies.
    std::optional<std::uint32_t> select_share_target(std::uint32_t set, Pid pid,
                                                     WayWindow window = {}) const;

    const StarEntry &entry(std::uint32_t set, std::uint32_t way) const;
    const StarStats &stats() const { return stats_; }
    std::uint64_t valid_translations() const;

    // Throws ContractViolation when any structural invariant is broken.
    void check_invariants() const;

private:
    struct Span {
        std::uint32_t first;
        std::uint32_t count;
    };
    Span resolve(WayWindow w) const;
    StarEntry &at(std::uint32_t set, std::uint32_t way)
    {
        return entries_[set * cfg_.geometry.ways + way];
    }
    const StarEntry &at(std::uint32_t set, std::uint32_t way) const
    {
        return entries_[set * cfg_.geometry.ways + way];
    }
    void touch(StarEntry &e, unsigned ordinal);
    void fill(StarEntry &e, SlotPosition pos, std::uint64_t pfn);
    InsertOutcome insert_into_base(StarEntry &e, unsigned ordinal, const DecomposedAddress &d,
                                   std::uint64_t pfn, Tick tick);
    void join(StarEntry &e, const BaseRecord &base, const DecomposedAddress &d, std::uint64_t pfn);
    void evict_whole(StarEntry &e, Tick tick, InsertOutcome &out);

    StarConfig cfg_;
    AddressLayout layout_;
    std::vector<StarEntry> entries_;
    std::uint64_t clock_ = 0;
    StarStats stats_;
};

} // namespace migtlb
