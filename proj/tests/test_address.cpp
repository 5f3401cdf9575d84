#include "doctest.h"

#include <random>
#include <set>

#include "migtlb/address.hpp"

using namespace migtlb;

namespace {

const PageConfig kPage{};
const TlbGeometry kL3{128, 8, 16, 40};

// Field extraction written out by hand for 64 KB pages, 16-page regions and 128 sets.
DecomposedAddress by_hand(std::uint64_t v)
{
    return {v & 0xFFFF, static_cast<std::uint32_t>((v >> 16) & 0xF),
            static_cast<std::uint32_t>((v >> 20) & 0x7F), v >> 27};
}

} // namespace

TEST_CASE("decompose examples")
{
    CHECK(decompose(0x0, kPage, kL3) == DecomposedAddress{0, 0, 0, 0});
    CHECK(decompose(0x0009'0000, kPage, kL3) == DecomposedAddress{0, 9, 0, 0});
    CHECK(decompose(0x1234'5678, kPage, kL3) == DecomposedAddress{0x5678, 0x4, 0x23, 0x2});
}

TEST_CASE("recompose examples")
{
    CHECK(recompose({0, 0, 0, 0}, kPage, kL3) == 0x0);
    CHECK(recompose(decompose(0x1234'5678, kPage, kL3), kPage, kL3) == 0x1234'5678);
    CHECK(recompose({0, 15, 0, 0}, kPage, kL3) == 0x000F'0000);
}

TEST_CASE("recompose rejects fields wider than the layout")
{
    CHECK_THROWS_AS(recompose({0x10000, 0, 0, 0}, kPage, kL3), ContractViolation);
    CHECK_THROWS_AS(recompose({0, 16, 0, 0}, kPage, kL3), ContractViolation);
    CHECK_THROWS_AS(recompose({0, 0, 128, 0}, kPage, kL3), ContractViolation);
    CHECK_THROWS_AS(recompose({0, 0, 0, std::uint64_t{1} << 37}, kPage, kL3), ContractViolation);
}

TEST_CASE("round trip over a million random addresses")
{
    std::mt19937_64 rng(7);
    const AddressLayout layout(kPage, kL3.sets);
    for (int i = 0; i < 1'000'000; ++i) {
        const std::uint64_t v = rng();
        const DecomposedAddress d = layout.decompose(v);
        REQUIRE(d == by_hand(v));
        REQUIRE(layout.recompose(d) == v);
    }
}

TEST_CASE("two addresses share vpb and set exactly when they share a 1 MB region")
{
    std::mt19937_64 rng(11);
    const AddressLayout layout(kPage, kL3.sets);
    for (int i = 0; i < 100'000; ++i) {
        const std::uint64_t a = rng();
        // Half the time pick a neighbour within a couple of regions.
        const std::uint64_t b = (i % 2) ? a + (rng() % (std::uint64_t{3} << 20)) : rng();
        const auto da = layout.decompose(a), db = layout.decompose(b);
        const bool same_entry = da.vpb == db.vpb && da.set_index == db.set_index;
        REQUIRE(same_entry == ((a >> 20) == (b >> 20)));
    }
}

TEST_CASE("sub index covers exactly region_pages values")
{
    const AddressLayout layout(kPage, kL3.sets);
    std::set<std::uint32_t> seen;
    for (std::uint64_t p = 0; p < 64; ++p)
        seen.insert(layout.decompose(p << 16).sub_index);
    CHECK(seen.size() == kPage.region_pages);
    CHECK(*seen.rbegin() == 15);
}

TEST_CASE("other page sizes and geometries")
{
    const PageConfig two_mb{std::uint64_t{1} << 21, 16};
    const TlbGeometry g{256, 8, 16, 40};
    const std::uint64_t v = 0xDEAD'BEEF'1234;
    const auto d = decompose(v, two_mb, g);
    CHECK(d.offset == (v & ((1u << 21) - 1)));
    CHECK(d.sub_index == ((v >> 21) & 0xF));
    CHECK(d.set_index == ((v >> 25) & 0xFF));
    CHECK(d.vpb == (v >> 33));
    CHECK(recompose(d, two_mb, g) == v);

    CHECK_THROWS_AS(AddressLayout(PageConfig{3000, 16}, 128), ContractViolation);
    CHECK_THROWS_AS(AddressLayout(kPage, 100), ContractViolation);
}
