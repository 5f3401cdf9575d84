#pragma once

#include <bit>
#include <cstdint>

#include "migtlb/types.hpp"

namespace migtlb {

// Page size and the number of consecutive pages one sub-entry TLB entry covers.
// With the defaults an entry spans a 1 MB aligned region of 64 KB pages.
struct PageConfig {
    std::uint64_t page_size_bytes = 65536;
    std::uint32_t region_pages = 16;

    std::uint64_t region_bytes() const { return page_size_bytes * region_pages; }
};

struct TlbGeometry {
    std::uint32_t sets = 1;
    std::uint32_t ways = 1;
    std::uint32_t subentries_per_entry = 1;
    std::uint32_t lookup_latency_cycles = 0;

    std::uint32_t entries() const { return sets * ways; }
    std::uint64_t total_subentries() const
    {
        return std::uint64_t{sets} * ways * subentries_per_entry;
    }
    friend bool operator==(const TlbGeometry &, const TlbGeometry &) = default;
};

// VPN = [vpb | set_index | sub_index], followed by the page offset.
struct DecomposedAddress {
    std::uint64_t offset = 0;
    std::uint32_t sub_index = 0;
    std::uint32_t set_index = 0;
    std::uint64_t vpb = 0;

    friend bool operator==(const DecomposedAddress &, const DecomposedAddress &) = default;
};

inline bool is_pow2(std::uint64_t v) { return v != 0 && std::has_single_bit(v); }

inline unsigned log2_exact(std::uint64_t v)
{
    expects(is_pow2(v), "value must be a power of two");
    return static_cast<unsigned>(std::countr_zero(v));
}

// Bit widths of one address layout, precomputed so hot paths avoid re-deriving them.
class AddressLayout {
public:
    AddressLayout() = default;
    AddressLayout(const PageConfig &page, std::uint32_t sets);

    DecomposedAddress decompose(std::uint64_t vaddr) const;
    std::uint64_t recompose(const DecomposedAddress &d) const;

    std::uint64_t page_number(std::uint64_t vaddr) const { return vaddr >> offset_bits_; }
    unsigned offset_bits() const { return offset_bits_; }
    unsigned sub_bits() const { return sub_bits_; }
    unsigned set_bits() const { return set_bits_; }

private:
    unsigned offset_bits_ = 16;
    unsigned sub_bits_ = 4;
    unsigned set_bits_ = 0;
};

DecomposedAddress decompose(std::uint64_t vaddr, const PageConfig &page, const TlbGeometry &geom);
std::uint64_t recompose(const DecomposedAddress &d, const PageConfig &page, const TlbGeometry &geom);

} // namespace migtlb
