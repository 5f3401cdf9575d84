#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "migtlb/types.hpp"
#include "migtlb/variants.hpp"

namespace migtlb {

// ---------------------------------------------------------------------------
// Reuse distance

struct ReuseEvent {
    Pid pid = 0;
    std::uint64_t page = 0;
    std::uint64_t distance = 0;

    friend bool operator==(const ReuseEvent &, const ReuseEvent &) = default;
};

/// Exact reuse-distance tracker: the distance of an access is the number of
/// distinct (pid, key) translations touched since the previous access to the
/// same (pid, key). Uses a Fenwick tree over access timestamps that is
/// compacted whenever it fills up, so memory stays proportional to the
/// number of distinct keys.
class ReuseDistanceTracker {
public:
    ReuseDistanceTracker();

    // nullopt on the first access to a key.
    std::optional<std::uint64_t> access(Pid pid, std::uint64_t key);
    std::size_t distinct_keys() const { return last_.size(); }

private:
    struct Key {
        Pid pid;
        std::uint64_t key;
        bool operator==(const Key &) const = default;
    };
    struct KeyHash {
        std::size_t operator()(const Key &k) const
        {
            return std::hash<std::uint64_t>{}(k.key * 0x9E3779B97F4A7C15ull ^ k.pid);
        }
    };

    void add(std::size_t pos, int delta);
    std::int64_t prefix(std::size_t pos) const; // sum over [0, pos)
    void compact();

    std::vector<std::int64_t> tree_;
    std::unordered_map<Key, std::size_t, KeyHash> last_;
    std::size_t now_ = 0;
};

std::vector<ReuseEvent> reuse_distance_stream(std::span<const std::pair<Pid, std::uint64_t>> events);

// ---------------------------------------------------------------------------
// Distributions

struct CdfPoint {
    double x = 0;
    double cumulative = 0;
};

/// Histogram over exact integer values, exported as a staircase CDF.
class Histogram {
public:
    void add(std::uint64_t value, std::uint64_t count = 1);
    std::uint64_t total() const { return total_; }
    const std::map<std::uint64_t, std::uint64_t> &buckets() const { return buckets_; }
    std::vector<CdfPoint> cdf() const;
    // Fraction of samples with value <= x.
    double fraction_at_or_below(std::uint64_t x) const;
    void merge(const Histogram &other);

private:
    std::map<std::uint64_t, std::uint64_t> buckets_;
    std::uint64_t total_ = 0;
};

struct UtilizationStats {
    std::uint64_t samples = 0;
    // (utilized, capacity) -> count
    std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint64_t> histogram;
    // CDF over the utilized/capacity fraction; terminal value 1.0.
    std::vector<CdfPoint> cdf;
    // Mean utilization fraction over all evictions; absent with no samples.
    std::optional<double> average;
};

UtilizationStats utilization_stats(std::span<const EvictionSample> samples);

// Streaming form used by the simulator.
class UtilizationAccumulator {
public:
    void add(const EvictionSample &s);
    void merge(const UtilizationAccumulator &other);
    UtilizationStats stats() const;
    std::uint64_t count() const { return count_; }

private:
    std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint64_t> histogram_;
    std::uint64_t count_ = 0;
};

// ---------------------------------------------------------------------------
// MPKI

enum class MpkiClass : std::uint8_t { Low, Medium, High };

const char *to_string(MpkiClass c);

struct Mpki {
    double value = 0;
    MpkiClass cls = MpkiClass::Low;
};

// L below 1, H above 100, M in between (boundaries fall in M).
// Throws std::invalid_argument for zero instructions.
Mpki mpki(std::uint64_t misses, std::uint64_t instructions);

// ---------------------------------------------------------------------------
// Storage accounting

struct EntryBitWidths {
    unsigned valid_dirty = 2;
    unsigned vpb = 30;
    unsigned pfn = 52;
};

/// Bits stored per L3 entry for a variant.
///
///   baseline / half-sub:  v/d + VPB + S x PFN               (S sub-entries)
///   star2:                baseline + 2 layout + 16 AIB + (VPB + v/d)
///   star4:                baseline + 3 layout + 16 x 2 AIB + 3 x (VPB + v/d)
///   static partitioning does not change the entry format.
unsigned bits_per_entry(VariantKind kind, const EntryBitWidths &w = {});

// ---------------------------------------------------------------------------
// Latency

struct LatencyReport {
    std::uint64_t count = 0;
    double mean = 0;
    std::uint64_t p50 = 0;
    std::uint64_t p95 = 0;
    std::uint64_t p99 = 0;
    std::uint64_t max = 0;
    // Sum of all per-request latencies; each coalesced request counts in full.
    std::uint64_t stall_proxy = 0;
};

LatencyReport latency_report(std::span<const std::uint32_t> latencies);

} // namespace migtlb
