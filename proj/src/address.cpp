#include "migtlb/address.hpp"

namespace migtlb {

const char *to_string(LookupKind kind)
{
    switch (kind) {
    case LookupKind::Hit: return "hit";
    case LookupKind::MissNoEntry: return "miss_no_entry";
    case LookupKind::MissSubEntry: return "miss_sub_entry";
    case LookupKind::MissAib: return "miss_aib";
    }
    return "?";
}

const char *to_string(InsertKind kind)
{
    switch (kind) {
    case InsertKind::FilledExisting: return "filled_existing";
    case InsertKind::NewEntryVacant: return "new_entry_vacant";
    case InsertKind::NewEntryEvicted: return "new_entry_evicted";
    case InsertKind::JoinedShared: return "joined_shared";
    }
    return "?";
}

AddressLayout::AddressLayout(const PageConfig &page, std::uint32_t sets)
    : offset_bits_(log2_exact(page.page_size_bytes))
    , sub_bits_(log2_exact(page.region_pages))
    , set_bits_(log2_exact(sets))
{
    expects(offset_bits_ + sub_bits_ + set_bits_ < 64, "address layout wider than 64 bits");
}

DecomposedAddress AddressLayout::decompose(std::uint64_t vaddr) const
{
    DecomposedAddress d;
    d.offset = vaddr & ((std::uint64_t{1} << offset_bits_) - 1);
    const std::uint64_t vpn = vaddr >> offset_bits_;
    d.sub_index = static_cast<std::uint32_t>(vpn & ((std::uint64_t{1} << sub_bits_) - 1));
    d.set_index = static_cast<std::uint32_t>((vpn >> sub_bits_) & ((std::uint64_t{1} << set_bits_) - 1));
    d.vpb = vpn >> (sub_bits_ + set_bits_);
    return d;
}

std::uint64_t AddressLayout::recompose(const DecomposedAddress &d) const
{
    expects(d.offset >> offset_bits_ == 0, "offset exceeds page offset width");
    expects(std::uint64_t{d.sub_index} >> sub_bits_ == 0, "sub_index exceeds its width");
    expects(std::uint64_t{d.set_index} >> set_bits_ == 0, "set_index exceeds its width");
    const unsigned low = offset_bits_ + sub_bits_ + set_bits_;
    expects(low == 0 || d.vpb >> (64 - low) == 0, "vpb exceeds remaining address width");
    return (d.vpb << low) | (std::uint64_t{d.set_index} << (offset_bits_ + sub_bits_)) |
           (std::uint64_t{d.sub_index} << offset_bits_) | d.offset;
}

DecomposedAddress decompose(std::uint64_t vaddr, const PageConfig &page, const TlbGeometry &geom)
{
    return AddressLayout(page, geom.sets).decompose(vaddr);
}

std::uint64_t recompose(const DecomposedAddress &d, const PageConfig &page, const TlbGeometry &geom)
{
    return AddressLayout(page, geom.sets).recompose(d);
}

} // namespace migtlb
