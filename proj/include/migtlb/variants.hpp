#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "migtlb/address.hpp"
#include "migtlb/star_tlb.hpp"
#include "migtlb/subentry_tlb.hpp"
#include "migtlb/types.hpp"

namespace migtlb {

enum class VariantKind : std::uint8_t {
    Baseline,
    Star2,
    Star4,
    HalfSubDoubleSet,
    HalfSubDoubleWaySeq,
    HalfSubDoubleWayPara,
    StaticPartition,
    Star2PlusStatic,
};

std::string_view to_string(VariantKind kind);
std::optional<VariantKind> parse_variant(std::string_view name);
std::span<const VariantKind> all_variants();

struct VariantConfig {
    VariantKind kind = VariantKind::Baseline;
    // Star4 only: when false the entry never goes beyond two bases.
    bool four_base_tier = true;
    // Forces the sharing search to fail; STAR then degenerates to the baseline.
    bool sharing_enabled = true;
};

struct VariantGeometry {
    TlbGeometry geometry;
    ProbeModel probe = ProbeModel::Parallel;
};

/// Geometry of a variant derived from the baseline L3 geometry. Half-sub
/// variants halve the sub-entries and double either sets or ways, keeping the
/// total sub-entry capacity. Throws std::invalid_argument when a result is
/// not a power of two.
VariantGeometry make_geometry(VariantKind kind, const TlbGeometry &base);

/// Ways given to each instance, proportional to its size with
/// largest-remainder rounding (ties go to the earlier instance). Every
/// instance gets at least one way.
std::vector<std::uint32_t> static_partition_map(std::span<const std::uint32_t> instance_sizes,
                                                std::uint32_t ways);

// 3-bit layout indicator of the four-base extension: bit 2 marks four-base
// sharing, bits 1..0 carry the layout (00 only when not shared).
struct Layout3 {
    static std::uint8_t encode(unsigned degree, Layout layout);
    static std::pair<unsigned, Layout> decode(std::uint8_t code);
};

/// L3 TLB as seen by the translation pipeline.
class L3Tlb {
public:
    virtual ~L3Tlb() = default;

    virtual LookupResult lookup(std::uint64_t vaddr, RequestIdentity who, Tick tick) = 0;
    virtual InsertOutcome insert(std::uint64_t vaddr, std::uint64_t pfn, RequestIdentity who,
                                 Tick tick) = 0;
    virtual const TlbGeometry &geometry() const = 0;
    virtual std::uint64_t valid_translations() const = 0;
    virtual const StarStats *star_stats() const { return nullptr; }
    virtual void check_invariants() const {}
};

struct InstanceShare {
    InstanceId instance = 0;
    std::uint32_t g_units = 1;
};

/// Builds the L3 model for a variant. `instances` is only consulted by the
/// static-partition variants.
std::unique_ptr<L3Tlb> make_l3(const VariantConfig &variant, const TlbGeometry &base,
                               std::uint64_t page_size_bytes,
                               std::span<const InstanceShare> instances = {});

} // namespace migtlb
