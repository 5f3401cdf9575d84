#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace migtlb {

using Tick = std::uint64_t;
using Pid = std::uint32_t;
using InstanceId = std::uint32_t;

// Thrown when a caller breaks an operation's documented precondition.
class ContractViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

inline void expects(bool cond, const char *what)
{
    if (!cond)
        throw ContractViolation(what);
}

struct RequestIdentity {
    InstanceId instance_id = 0;
    Pid process_id = 0;

    friend bool operator==(const RequestIdentity &, const RequestIdentity &) = default;
};

enum class LookupKind : std::uint8_t { Hit, MissNoEntry, MissSubEntry, MissAib };

const char *to_string(LookupKind kind);

struct LookupResult {
    LookupKind kind = LookupKind::MissNoEntry;
    std::uint64_t pfn = 0;
    std::uint32_t latency_cycles = 0;

    bool hit() const { return kind == LookupKind::Hit; }
};

// One record per entry (or per base, for shared entries) leaving the TLB.
struct EvictionSample {
    Pid pid = 0;
    std::uint32_t utilized = 0;
    std::uint32_t capacity = 0;
    bool shared = false;
    Tick tick = 0;

    double fraction() const
    {
        return capacity == 0 ? 0.0 : static_cast<double>(utilized) / capacity;
    }
    friend bool operator==(const EvictionSample &, const EvictionSample &) = default;
};

enum class InsertKind : std::uint8_t {
    FilledExisting,
    NewEntryVacant,
    NewEntryEvicted,
    JoinedShared,
};

const char *to_string(InsertKind kind);

struct InsertOutcome {
    static constexpr std::size_t kMaxSamples = 4;

    InsertKind kind = InsertKind::FilledExisting;
    std::array<EvictionSample, kMaxSamples> samples{};
    std::size_t sample_count = 0;

    void add_sample(const EvictionSample &s)
    {
        expects(sample_count < kMaxSamples, "too many eviction samples for one insert");
        samples[sample_count++] = s;
    }
    const EvictionSample *begin() const { return samples.data(); }
    const EvictionSample *end() const { return samples.data() + sample_count; }
};

} // namespace migtlb
