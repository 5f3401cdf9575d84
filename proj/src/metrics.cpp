#include "migtlb/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace migtlb {

ReuseDistanceTracker::ReuseDistanceTracker()
    : tree_(1024 + 1, 0)
{
}

void ReuseDistanceTracker::add(std::size_t pos, int delta)
{
    for (std::size_t i = pos + 1; i < tree_.size(); i += i & (~i + 1))
        tree_[i] += delta;
}

std::int64_t ReuseDistanceTracker::prefix(std::size_t pos) const
{
    std::int64_t sum = 0;
    for (std::size_t i = pos; i > 0; i -= i & (~i + 1))
        sum += tree_[i];
    return sum;
}

void ReuseDistanceTracker::compact()
{
    std::vector<std::pair<std::size_t, Key>> live;
    live.reserve(last_.size());
    for (const auto &[k, pos] : last_)
        live.emplace_back(pos, k);
    std::sort(live.begin(), live.end(),
              [](const auto &a, const auto &b) { return a.first < b.first; });

    const std::size_t capacity = std::max<std::size_t>(1024, 2 * live.size());
    tree_.assign(capacity + 1, 0);
    for (std::size_t i = 0; i < live.size(); ++i) {
        last_[live[i].second] = i;
        add(i, 1);
    }
    now_ = live.size();
}

std::optional<std::uint64_t> ReuseDistanceTracker::access(Pid pid, std::uint64_t key)
{
    if (now_ + 1 >= tree_.size())
        compact();
    std::optional<std::uint64_t> distance;
    const Key k{pid, key};
    auto it = last_.find(k);
    if (it != last_.end()) {
        const std::size_t prev = it->second;
        distance = static_cast<std::uint64_t>(prefix(now_) - prefix(prev + 1));
        add(prev, -1);
        it->second = now_;
    } else {
        last_.emplace(k, now_);
    }
    add(now_, 1);
    ++now_;
    return distance;
}

std::vector<ReuseEvent> reuse_distance_stream(std::span<const std::pair<Pid, std::uint64_t>> events)
{
    ReuseDistanceTracker tracker;
    std::vector<ReuseEvent> out;
    for (const auto &[pid, page] : events)
        if (auto d = tracker.access(pid, page))
            out.push_back({pid, page, *d});
    return out;
}

void Histogram::add(std::uint64_t value, std::uint64_t count)
{
    buckets_[value] += count;
    total_ += count;
}

void Histogram::merge(const Histogram &other)
{
    for (const auto &[v, c] : other.buckets_)
        add(v, c);
}

std::vector<CdfPoint> Histogram::cdf() const
{
    std::vector<CdfPoint> points;
    if (total_ == 0)
        return points;
    std::uint64_t running = 0;
    for (const auto &[v, c] : buckets_) {
        running += c;
        points.push_back({static_cast<double>(v),
                          running == total_ ? 1.0 : static_cast<double>(running) / total_});
    }
    return points;
}

double Histogram::fraction_at_or_below(std::uint64_t x) const
{
    if (total_ == 0)
        return 0.0;
    std::uint64_t running = 0;
    for (auto it = buckets_.begin(); it != buckets_.end() && it->first <= x; ++it)
        running += it->second;
    return static_cast<double>(running) / total_;
}

void UtilizationAccumulator::add(const EvictionSample &s)
{
    ++histogram_[{s.utilized, s.capacity}];
    ++count_;
}

void UtilizationAccumulator::merge(const UtilizationAccumulator &other)
{
    for (const auto &[k, c] : other.histogram_)
        histogram_[k] += c;
    count_ += other.count_;
}

UtilizationStats UtilizationAccumulator::stats() const
{
    UtilizationStats st;
    st.samples = count_;
    st.histogram = histogram_;
    if (count_ == 0)
        return st;

    // Group by exact fraction so 4/8 and 8/16 share a CDF step.
    std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint64_t> by_fraction;
    double weighted = 0;
    for (const auto &[k, c] : histogram_) {
        const auto [u, cap] = k;
        weighted += (cap == 0 ? 0.0 : static_cast<double>(u) / cap) * static_cast<double>(c);
        const std::uint32_t g = std::max<std::uint32_t>(1, std::gcd(u, cap));
        by_fraction[{u / g, cap / g}] += c;
    }
    std::vector<std::pair<double, std::uint64_t>> steps;
    for (const auto &[f, c] : by_fraction)
        steps.emplace_back(f.second == 0 ? 0.0 : static_cast<double>(f.first) / f.second, c);
    std::sort(steps.begin(), steps.end());
    std::uint64_t running = 0;
    for (const auto &[x, c] : steps) {
        running += c;
        st.cdf.push_back({x, running == count_ ? 1.0 : static_cast<double>(running) / count_});
    }
    st.average = weighted / static_cast<double>(count_);
    return st;
}

UtilizationStats utilization_stats(std::span<const EvictionSample> samples)
{
    UtilizationAccumulator acc;
    for (const auto &s : samples)
        acc.add(s);
    return acc.stats();
}

const char *to_string(MpkiClass c)
{
    switch (c) {
    case MpkiClass::Low: return "L";
    case MpkiClass::Medium: return "M";
    case MpkiClass::High: return "H";
    }
    return "?";
}

Mpki mpki(std::uint64_t misses, std::uint64_t instructions)
{
    if (instructions == 0)
        throw std::invalid_argument("MPKI needs a nonzero instruction count");
    Mpki m;
    m.value = 1000.0 * static_cast<double>(misses) / static_cast<double>(instructions);
    m.cls = m.value < 1.0 ? MpkiClass::Low : m.value > 100.0 ? MpkiClass::High : MpkiClass::Medium;
    return m;
}

unsigned bits_per_entry(VariantKind kind, const EntryBitWidths &w)
{
    const unsigned base_meta = w.valid_dirty + w.vpb;
    const unsigned full = base_meta + 16 * w.pfn;
    switch (kind) {
    case VariantKind::Baseline:
    case VariantKind::StaticPartition:
        return full;
    case VariantKind::Star2:
    case VariantKind::Star2PlusStatic:
        return full + 2 + 16 * 1 + base_meta;
    case VariantKind::Star4:
        return full + 3 + 16 * 2 + 3 * base_meta;
    case VariantKind::HalfSubDoubleSet:
    case VariantKind::HalfSubDoubleWaySeq:
    case VariantKind::HalfSubDoubleWayPara:
        return base_meta + 8 * w.pfn;
    }
    return 0;
}

LatencyReport latency_report(std::span<const std::uint32_t> latencies)
{
    LatencyReport r;
    r.count = latencies.size();
    if (latencies.empty())
        return r;
    std::vector<std::uint32_t> sorted(latencies.begin(), latencies.end());
    std::sort(sorted.begin(), sorted.end());
    for (auto l : sorted)
        r.stall_proxy += l;
    r.mean = static_cast<double>(r.stall_proxy) / static_cast<double>(r.count);
    // Nearest-rank percentiles.
    auto rank = [&](double p) {
        const auto idx = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(r.count)));
        return sorted[std::max<std::size_t>(idx, 1) - 1];
    };
    r.p50 = rank(50);
    r.p95 = rank(95);
    r.p99 = rank(99);
    r.max = sorted.back();
    return r;
}

} // namespace migtlb
