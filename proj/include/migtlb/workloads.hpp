#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "migtlb/metrics.hpp"
#include "migtlb/types.hpp"

namespace migtlb {

enum class PatternKind : std::uint8_t { Stream, Stride, Block, Dependent };

const char *to_string(PatternKind kind);
PatternKind parse_pattern_kind(std::string_view name);

struct PatternSpec {
    PatternKind kind = PatternKind::Stream;
    std::uint64_t footprint_pages = 1;
    std::uint64_t accesses = 0;
    std::uint64_t stride_pages = 16;       // Stride
    std::uint64_t block_pages = 4;         // Block: pages per block
    std::uint64_t block_spacing_pages = 0; // Block: distance between block starts, 0 = packed
    std::uint32_t intensity = 1;           // probes issued per tick
    std::uint32_t instructions_per_access = 1;

    void validate() const;
};

struct TenantSpec {
    Pid pid = 1;
    std::uint32_t g_units = 1;
    PatternSpec pattern;
    MpkiClass nominal = MpkiClass::Medium;
};

struct TraceRecord {
    Tick tick = 0;
    InstanceId instance = 0;
    Pid pid = 0;
    std::uint64_t vaddr = 0;
    std::uint32_t weight_instructions = 1;

    friend bool operator==(const TraceRecord &, const TraceRecord &) = default;
};

// Tenant address spaces are disjoint: the pid sits above bit 40.
inline std::uint64_t address_space_base(Pid pid) { return std::uint64_t{pid} << 40; }

/// Page sequence of a pattern; a pure function of (spec, seed).
///   Stream:    0, 1, ..., F-1, 0, 1, ...
///   Stride(k): column-major sweep 0, k, 2k, ... then 1, k+1, ...; every page once per lap
///   Block:     pages of each block in order, blocks visited in a seeded order
///   Dependent: pointer chase around one seeded random cycle through all F pages
std::vector<std::uint64_t> generate_pages(const PatternSpec &spec, std::uint64_t seed);

std::vector<TraceRecord> generate(const TenantSpec &spec, InstanceId instance, std::uint64_t seed,
                                  std::uint64_t page_size_bytes = 65536);

struct StreamItem {
    TraceRecord rec;
    bool measured = true;
};

struct MeasuredTrace {
    std::vector<TraceRecord> records;
    std::size_t measured_prefix = 0;
};

/// Loops every tenant that would finish early so all tenants keep issuing
/// until the longest one completes. Only each tenant's first full pass is
/// marked for measurement.
std::vector<MeasuredTrace> rerun_until_longest(std::span<const std::vector<TraceRecord>> traces,
                                               std::span<const std::uint32_t> rates);

/// Weighted round-robin merge: in round r every tenant i issues up to
/// rates[i] records, all stamped with tick r. Per-tenant order is preserved.
std::vector<StreamItem> interleave(std::span<const MeasuredTrace> traces,
                                   std::span<const std::uint32_t> rates);
std::vector<StreamItem> interleave(std::span<const std::vector<TraceRecord>> traces,
                                   std::span<const std::uint32_t> rates);

class TraceParseError : public std::runtime_error {
public:
    TraceParseError(std::size_t line, const std::string &what)
        : std::runtime_error("line " + std::to_string(line) + ": " + what)
        , line_(line)
    {
    }
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

// Text format, one record per line: `tick instance pid vaddr_hex weight`.
// Blank lines and lines starting with '#' are ignored. Paths ending in .gz
// are read and written gzip-compressed.
std::vector<TraceRecord> parse_trace(std::istream &in);
std::vector<TraceRecord> parse_trace(const std::filesystem::path &path);
void write_trace(std::ostream &out, std::span<const TraceRecord> records);
void write_trace(const std::filesystem::path &path, std::span<const TraceRecord> records);

} // namespace migtlb
