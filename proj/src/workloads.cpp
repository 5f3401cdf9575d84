#include "migtlb/workloads.hpp"

#include <zlib.h>

#include <algorithm>
#include <charconv>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace migtlb {

namespace {

// Unbiased draw in [0, n); the standard distributions are implementation
// defined, and traces must not change between standard libraries.
std::uint64_t bounded(std::mt19937_64 &rng, std::uint64_t n)
{
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
        const std::uint64_t r = rng();
        if (r >= threshold)
            return r % n;
    }
}

std::vector<std::uint64_t> shuffled_identity(std::uint64_t n, std::mt19937_64 &rng)
{
    std::vector<std::uint64_t> v(n);
    std::iota(v.begin(), v.end(), 0);
    for (std::uint64_t i = n; i > 1; --i)
        std::swap(v[i - 1], v[bounded(rng, i)]);
    return v;
}

// Sattolo's algorithm: a uniformly random permutation with a single cycle.
std::vector<std::uint64_t> single_cycle(std::uint64_t n, std::mt19937_64 &rng)
{
    std::vector<std::uint64_t> next(n);
    std::iota(next.begin(), next.end(), 0);
    for (std::uint64_t i = n; i > 1; --i)
        std::swap(next[i - 1], next[bounded(rng, i - 1)]);
    return next;
}

} // namespace

const char *to_string(PatternKind kind)
{
    switch (kind) {
    case PatternKind::Stream: return "stream";
    case PatternKind::Stride: return "stride";
    case PatternKind::Block: return "block";
    case PatternKind::Dependent: return "dependent";
    }
    return "?";
}

PatternKind parse_pattern_kind(std::string_view name)
{
    for (auto k : {PatternKind::Stream, PatternKind::Stride, PatternKind::Block,
                   PatternKind::Dependent})
        if (name == to_string(k))
            return k;
    throw std::invalid_argument("unknown pattern kind '" + std::string(name) + "'");
}

void PatternSpec::validate() const
{
    if (footprint_pages == 0)
        throw std::invalid_argument("footprint_pages must be at least 1");
    if (intensity == 0)
        throw std::invalid_argument("intensity must be at least 1");
    if (kind == PatternKind::Stride && stride_pages == 0)
        throw std::invalid_argument("stride_pages must be at least 1");
    if (kind == PatternKind::Block) {
        if (block_pages == 0 || footprint_pages % block_pages != 0)
            throw std::invalid_argument("block_pages must divide footprint_pages");
        if (block_spacing_pages != 0 && block_spacing_pages < block_pages)
            throw std::invalid_argument("block_spacing_pages smaller than block_pages");
    }
}

std::vector<std::uint64_t> generate_pages(const PatternSpec &spec, std::uint64_t seed)
{
    spec.validate();
    const std::uint64_t f = spec.footprint_pages;
    std::vector<std::uint64_t> pages;
    pages.reserve(spec.accesses);
    std::mt19937_64 rng(seed);

    switch (spec.kind) {
    case PatternKind::Stream:
        for (std::uint64_t i = 0; i < spec.accesses; ++i)
            pages.push_back(i % f);
        break;
    case PatternKind::Stride: {
        // Visit multiples of k first, then shift by one page per sweep.
        const std::uint64_t k = spec.stride_pages % f == 0 ? spec.stride_pages : spec.stride_pages % f;
        const std::uint64_t g = std::gcd(k, f);
        const std::uint64_t per_sweep = f / g;
        for (std::uint64_t i = 0; i < spec.accesses; ++i) {
            const std::uint64_t j = i % f;
            pages.push_back(((j % per_sweep) * k) % f + j / per_sweep);
        }
        break;
    }
    case PatternKind::Block: {
        const std::uint64_t blocks = f / spec.block_pages;
        const std::uint64_t spacing = spec.block_spacing_pages == 0 ? spec.block_pages
                                                                     : spec.block_spacing_pages;
        const auto order = shuffled_identity(blocks, rng);
        for (std::uint64_t i = 0; i < spec.accesses; ++i) {
            const std::uint64_t j = i % f;
            pages.push_back(order[j / spec.block_pages] * spacing + j % spec.block_pages);
        }
        break;
    }
    case PatternKind::Dependent: {
        const auto next = single_cycle(f, rng);
        std::uint64_t p = 0;
        for (std::uint64_t i = 0; i < spec.accesses; ++i) {
            pages.push_back(p);
            p = next[p];
        }
        break;
    }
    }
    return pages;
}

std::vector<TraceRecord> generate(const TenantSpec &spec, InstanceId instance, std::uint64_t seed,
                                  std::uint64_t page_size_bytes)
{
    const auto pages = generate_pages(spec.pattern, seed);
    const std::uint64_t base = address_space_base(spec.pid);
    std::vector<TraceRecord> out;
    out.reserve(pages.size());
    for (std::size_t i = 0; i < pages.size(); ++i)
        out.push_back({i / spec.pattern.intensity, instance, spec.pid,
                       base + pages[i] * page_size_bytes, spec.pattern.instructions_per_access});
    return out;
}

std::vector<MeasuredTrace> rerun_until_longest(std::span<const std::vector<TraceRecord>> traces,
                                               std::span<const std::uint32_t> rates)
{
    expects(traces.size() == rates.size(), "one issue rate per trace");
    std::vector<std::uint64_t> rounds(traces.size());
    std::uint64_t longest = 0;
    for (std::size_t i = 0; i < traces.size(); ++i) {
        expects(rates[i] > 0, "issue rates must be positive");
        rounds[i] = (traces[i].size() + rates[i] - 1) / rates[i];
        longest = std::max(longest, rounds[i]);
    }

    std::vector<MeasuredTrace> out(traces.size());
    for (std::size_t i = 0; i < traces.size(); ++i) {
        const auto &src = traces[i];
        MeasuredTrace &mt = out[i];
        mt.measured_prefix = src.size();
        mt.records = src;
        if (src.empty() || rounds[i] == longest)
            continue;
        const std::uint64_t target = longest * rates[i];
        for (std::uint64_t k = src.size(); k < target; ++k)
            mt.records.push_back(src[k % src.size()]);
    }
    return out;
}

std::vector<StreamItem> interleave(std::span<const MeasuredTrace> traces,
                                   std::span<const std::uint32_t> rates)
{
    expects(traces.size() == rates.size(), "one issue rate per trace");
    std::size_t total = 0;
    for (const auto &t : traces)
        total += t.records.size();
    std::vector<StreamItem> out;
    out.reserve(total);
    std::vector<std::size_t> cursor(traces.size(), 0);
    for (Tick round = 0; out.size() < total; ++round) {
        for (std::size_t i = 0; i < traces.size(); ++i) {
            expects(rates[i] > 0, "issue rates must be positive");
            const auto &recs = traces[i].records;
            for (std::uint32_t k = 0; k < rates[i] && cursor[i] < recs.size(); ++k, ++cursor[i]) {
                StreamItem item{recs[cursor[i]], cursor[i] < traces[i].measured_prefix};
                item.rec.tick = round;
                out.push_back(item);
            }
        }
    }
    return out;
}

std::vector<StreamItem> interleave(std::span<const std::vector<TraceRecord>> traces,
                                   std::span<const std::uint32_t> rates)
{
    std::vector<MeasuredTrace> wrapped;
    wrapped.reserve(traces.size());
    for (const auto &t : traces)
        wrapped.push_back({t, t.size()});
    return interleave(std::span<const MeasuredTrace>(wrapped), rates);
}

// ---------------------------------------------------------------------------
// Trace files

namespace {

template <typename T>
bool parse_number(std::string_view tok, T &out, int base = 10)
{
    if (base == 16 && (tok.starts_with("0x") || tok.starts_with("0X")))
        tok.remove_prefix(2);
    if (tok.empty())
        return false;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), out, base);
    return ec == std::errc{} && ptr == tok.data() + tok.size();
}

TraceRecord parse_line(std::string_view line, std::size_t lineno)
{
    std::vector<std::string_view> toks;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r'))
            ++i;
        std::size_t j = i;
        while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r')
            ++j;
        if (j > i)
            toks.push_back(line.substr(i, j - i));
        i = j;
    }
    if (toks.size() != 5)
        throw TraceParseError(lineno, "expected 5 fields, found " + std::to_string(toks.size()));
    TraceRecord r;
    if (!parse_number(toks[0], r.tick))
        throw TraceParseError(lineno, "bad tick '" + std::string(toks[0]) + "'");
    if (!parse_number(toks[1], r.instance))
        throw TraceParseError(lineno, "bad instance '" + std::string(toks[1]) + "'");
    if (!parse_number(toks[2], r.pid))
        throw TraceParseError(lineno, "bad pid '" + std::string(toks[2]) + "'");
    if (!parse_number(toks[3], r.vaddr, 16))
        throw TraceParseError(lineno, "bad vaddr '" + std::string(toks[3]) + "'");
    if (!parse_number(toks[4], r.weight_instructions))
        throw TraceParseError(lineno, "bad weight '" + std::string(toks[4]) + "'");
    return r;
}

bool is_gzip_path(const std::filesystem::path &p) { return p.extension() == ".gz"; }

void format_record(std::string &buf, const TraceRecord &r)
{
    char line[128];
    const int n = std::snprintf(line, sizeof(line), "%" PRIu64 " %" PRIu32 " %" PRIu32
                                " 0x%" PRIx64 " %" PRIu32 "\n",
                                r.tick, r.instance, r.pid, r.vaddr, r.weight_instructions);
    buf.append(line, static_cast<std::size_t>(n));
}

} // namespace

std::vector<TraceRecord> parse_trace(std::istream &in)
{
    std::vector<TraceRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#')
            continue;
        out.push_back(parse_line(line, lineno));
    }
    return out;
}

std::vector<TraceRecord> parse_trace(const std::filesystem::path &path)
{
    if (!is_gzip_path(path)) {
        std::ifstream in(path);
        if (!in)
            throw std::runtime_error("cannot open trace " + path.string());
        return parse_trace(in);
    }
    gzFile gz = gzopen(path.c_str(), "rb");
    if (gz == nullptr)
        throw std::runtime_error("cannot open trace " + path.string());
    std::string text;
    char buf[1 << 16];
    int n;
    while ((n = gzread(gz, buf, sizeof(buf))) > 0)
        text.append(buf, static_cast<std::size_t>(n));
    const bool failed = n < 0;
    gzclose(gz);
    if (failed)
        throw std::runtime_error("corrupt gzip trace " + path.string());
    std::istringstream in(text);
    return parse_trace(in);
}

void write_trace(std::ostream &out, std::span<const TraceRecord> records)
{
    std::string buf = "# tick instance pid vaddr weight\n";
    for (const auto &r : records)
        format_record(buf, r);
    out << buf;
}

void write_trace(const std::filesystem::path &path, std::span<const TraceRecord> records)
{
    if (!is_gzip_path(path)) {
        std::ofstream out(path);
        if (!out)
            throw std::runtime_error("cannot write trace " + path.string());
        write_trace(out, records);
        return;
    }
    std::ostringstream text;
    write_trace(text, records);
    const std::string s = text.str();
    gzFile gz = gzopen(path.c_str(), "wb");
    if (gz == nullptr)
        throw std::runtime_error("cannot write trace " + path.string());
    const int written = s.empty() ? 0 : gzwrite(gz, s.data(), static_cast<unsigned>(s.size()));
    gzclose(gz);
    if (static_cast<std::size_t>(written) != s.size())
        throw std::runtime_error("short write to " + path.string());
}

} // namespace migtlb
