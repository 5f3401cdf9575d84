#include "migtlb/variants.hpp"

#include <array>
#include <numeric>
#include <stdexcept>
#include <string>

namespace migtlb {

namespace {

constexpr std::array kVariants{
    std::pair{VariantKind::Baseline, std::string_view{"baseline"}},
    std::pair{VariantKind::Star2, std::string_view{"star2"}},
    std::pair{VariantKind::Star4, std::string_view{"star4"}},
    std::pair{VariantKind::HalfSubDoubleSet, std::string_view{"half_sub_double_set"}},
    std::pair{VariantKind::HalfSubDoubleWaySeq, std::string_view{"half_sub_double_way_seq"}},
    std::pair{VariantKind::HalfSubDoubleWayPara, std::string_view{"half_sub_double_way_para"}},
    std::pair{VariantKind::StaticPartition, std::string_view{"static_partition"}},
    std::pair{VariantKind::Star2PlusStatic, std::string_view{"star2_static"}},
};

constexpr std::array kVariantKinds{
    VariantKind::Baseline,           VariantKind::Star2,
    VariantKind::Star4,              VariantKind::HalfSubDoubleSet,
    VariantKind::HalfSubDoubleWaySeq, VariantKind::HalfSubDoubleWayPara,
    VariantKind::StaticPartition,    VariantKind::Star2PlusStatic,
};

using PartitionWindows = std::map<InstanceId, WayWindow>;

PartitionWindows partition_windows(std::span<const InstanceShare> instances, std::uint32_t ways)
{
    if (instances.empty())
        throw std::invalid_argument("static partitioning needs at least one instance");
    std::vector<std::uint32_t> sizes;
    for (const auto &i : instances)
        sizes.push_back(i.g_units);
    const auto alloc = static_partition_map(sizes, ways);
    PartitionWindows windows;
    std::uint32_t first = 0;
    for (std::size_t i = 0; i < instances.size(); ++i) {
        windows[instances[i].instance] = WayWindow{first, alloc[i]};
        first += alloc[i];
    }
    return windows;
}

WayWindow window_for(const std::optional<PartitionWindows> &windows, InstanceId instance)
{
    if (!windows)
        return {};
    auto it = windows->find(instance);
    expects(it != windows->end(), "request from an instance without a partition");
    return it->second;
}

class SubEntryL3 final : public L3Tlb {
public:
    SubEntryL3(const VariantGeometry &vg, std::uint64_t page_size,
               std::optional<PartitionWindows> windows)
        : tlb_(vg.geometry, page_size, vg.probe)
        , windows_(std::move(windows))
    {
    }

    LookupResult lookup(std::uint64_t vaddr, RequestIdentity who, Tick tick) override
    {
        return tlb_.lookup(tlb_.decompose(vaddr), who, tick, window_for(windows_, who.instance_id));
    }
    InsertOutcome insert(std::uint64_t vaddr, std::uint64_t pfn, RequestIdentity who,
                         Tick tick) override
    {
        return tlb_.insert(tlb_.decompose(vaddr), pfn, who, tick,
                           window_for(windows_, who.instance_id));
    }
    const TlbGeometry &geometry() const override { return tlb_.geometry(); }
    std::uint64_t valid_translations() const override { return tlb_.valid_translations(); }

private:
    SubEntryTlb tlb_;
    std::optional<PartitionWindows> windows_;
};

class StarL3 final : public L3Tlb {
public:
    StarL3(const StarConfig &cfg, std::optional<PartitionWindows> windows)
        : tlb_(cfg)
        , windows_(std::move(windows))
    {
    }

    LookupResult lookup(std::uint64_t vaddr, RequestIdentity who, Tick tick) override
    {
        return tlb_.lookup(tlb_.decompose(vaddr), who, tick, window_for(windows_, who.instance_id));
    }
    InsertOutcome insert(std::uint64_t vaddr, std::uint64_t pfn, RequestIdentity who,
                         Tick tick) override
    {
        return tlb_.insert(tlb_.decompose(vaddr), pfn, who, tick,
                           window_for(windows_, who.instance_id));
    }
    const TlbGeometry &geometry() const override { return tlb_.geometry(); }
    std::uint64_t valid_translations() const override { return tlb_.valid_translations(); }
    const StarStats *star_stats() const override { return &tlb_.stats(); }
    void check_invariants() const override { tlb_.check_invariants(); }

private:
    StarTlb tlb_;
    std::optional<PartitionWindows> windows_;
};

} // namespace

std::string_view to_string(VariantKind kind)
{
    for (const auto &[k, name] : kVariants)
        if (k == kind)
            return name;
    return "?";
}

std::optional<VariantKind> parse_variant(std::string_view name)
{
    for (const auto &[k, n] : kVariants)
        if (n == name)
            return k;
    return std::nullopt;
}

std::span<const VariantKind> all_variants() { return kVariantKinds; }

VariantGeometry make_geometry(VariantKind kind, const TlbGeometry &base)
{
    VariantGeometry vg{base, ProbeModel::Parallel};
    switch (kind) {
    case VariantKind::HalfSubDoubleSet:
        vg.geometry.sets = base.sets * 2;
        vg.geometry.subentries_per_entry = base.subentries_per_entry / 2;
        break;
    case VariantKind::HalfSubDoubleWaySeq:
        vg.geometry.ways = base.ways * 2;
        vg.geometry.subentries_per_entry = base.subentries_per_entry / 2;
        vg.probe = ProbeModel::TwoPhaseWays;
        break;
    case VariantKind::HalfSubDoubleWayPara:
        vg.geometry.ways = base.ways * 2;
        vg.geometry.subentries_per_entry = base.subentries_per_entry / 2;
        break;
    default:
        break;
    }
    const TlbGeometry &g = vg.geometry;
    if (!is_pow2(g.sets) || !is_pow2(g.ways) || !is_pow2(g.subentries_per_entry))
        throw std::invalid_argument("variant geometry for " + std::string(to_string(kind)) +
                                    " is not a power of two");
    return vg;
}

std::vector<std::uint32_t> static_partition_map(std::span<const std::uint32_t> instance_sizes,
                                                std::uint32_t ways)
{
    if (instance_sizes.empty())
        throw std::invalid_argument("no instances to partition");
    if (instance_sizes.size() > ways)
        throw std::invalid_argument("more instances than ways");
    std::uint64_t total = 0;
    for (auto g : instance_sizes) {
        if (g == 0)
            throw std::invalid_argument("instance size must be positive");
        total += g;
    }

    const std::size_t n = instance_sizes.size();
    std::vector<std::uint32_t> alloc(n);
    std::vector<std::uint64_t> remainder(n);
    std::uint32_t assigned = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint64_t scaled = std::uint64_t{ways} * instance_sizes[i];
        alloc[i] = static_cast<std::uint32_t>(scaled / total);
        remainder[i] = scaled % total;
        assigned += alloc[i];
    }
    for (std::uint32_t left = ways - assigned; left > 0; --left) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < n; ++i)
            if (remainder[i] > remainder[best])
                best = i;
        ++alloc[best];
        remainder[best] = 0;
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (alloc[i] != 0)
            continue;
        std::size_t donor = 0;
        for (std::size_t j = 1; j < n; ++j)
            if (alloc[j] >= alloc[donor])
                donor = j;
        --alloc[donor];
        alloc[i] = 1;
    }
    return alloc;
}

std::uint8_t Layout3::encode(unsigned degree, Layout layout)
{
    if (degree == 1) {
        expects(layout == Layout::NonShared, "a single base has no sharing layout");
        return 0b000;
    }
    expects(degree == 2 || degree == 4, "share degree must be 1, 2 or 4");
    expects(layout != Layout::NonShared, "a shared entry needs a layout");
    return static_cast<std::uint8_t>((degree == 4 ? 0b100 : 0) | static_cast<unsigned>(layout));
}

std::pair<unsigned, Layout> Layout3::decode(std::uint8_t code)
{
    const unsigned strategy = code & 0b11u;
    const bool four = (code & 0b100u) != 0;
    if (code > 0b111 || strategy == 0b11 || (four && strategy == 0))
        throw std::invalid_argument("invalid 3-bit layout code " + std::to_string(code));
    if (strategy == 0)
        return {1, Layout::NonShared};
    return {four ? 4u : 2u, static_cast<Layout>(strategy)};
}

std::unique_ptr<L3Tlb> make_l3(const VariantConfig &variant, const TlbGeometry &base,
                               std::uint64_t page_size_bytes,
                               std::span<const InstanceShare> instances)
{
    const VariantGeometry vg = make_geometry(variant.kind, base);
    std::optional<PartitionWindows> windows;
    if (variant.kind == VariantKind::StaticPartition || variant.kind == VariantKind::Star2PlusStatic)
        windows = partition_windows(instances, vg.geometry.ways);

    switch (variant.kind) {
    case VariantKind::Star2:
    case VariantKind::Star4:
    case VariantKind::Star2PlusStatic: {
        StarConfig cfg;
        cfg.geometry = vg.geometry;
        cfg.page_size_bytes = page_size_bytes;
        cfg.max_bases = variant.kind == VariantKind::Star4 && variant.four_base_tier ? 4 : 2;
        cfg.sharing_enabled = variant.sharing_enabled;
        return std::make_unique<StarL3>(cfg, std::move(windows));
    }
    default:
        return std::make_unique<SubEntryL3>(vg, page_size_bytes, std::move(windows));
    }
}

} // namespace migtlb
