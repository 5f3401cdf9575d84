#include "migtlb/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <thread>

namespace migtlb {

using nlohmann::json;

namespace {

// Reads the members of one JSON object and rejects anything left unread.
class Fields {
public:
    Fields(const json &j, std::string path)
        : j_(j)
        , path_(std::move(path))
    {
        if (!j_.is_object())
            throw ConfigError("'" + display(path_) + "' must be an object");
    }

    std::string where(const std::string &key) const
    {
        return path_.empty() ? key : path_ + "." + key;
    }

    const json *find(const std::string &key)
    {
        used_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    template <typename T>
    void uint(const std::string &key, T &out, std::uint64_t min = 0)
    {
        const json *v = find(key);
        if (v == nullptr)
            return;
        if (!v->is_number_unsigned())
            throw ConfigError("key '" + where(key) + "' must be a non-negative integer");
        const auto raw = v->get<std::uint64_t>();
        if (raw > std::numeric_limits<T>::max() || raw < min)
            throw ConfigError("key '" + where(key) + "' is out of range");
        out = static_cast<T>(raw);
    }

    void boolean(const std::string &key, bool &out)
    {
        const json *v = find(key);
        if (v == nullptr)
            return;
        if (!v->is_boolean())
            throw ConfigError("key '" + where(key) + "' must be true or false");
        out = v->get<bool>();
    }

    bool string(const std::string &key, std::string &out)
    {
        const json *v = find(key);
        if (v == nullptr)
            return false;
        if (!v->is_string())
            throw ConfigError("key '" + where(key) + "' must be a string");
        out = v->get<std::string>();
        return true;
    }

    void finish() const
    {
        for (const auto &[k, _] : j_.items())
            if (!used_.count(k))
                throw ConfigError("unknown key '" + where(k) + "'");
    }

private:
    static std::string display(const std::string &p) { return p.empty() ? "<root>" : p; }

    const json &j_;
    std::string path_;
    std::set<std::string> used_;
};

TlbGeometry parse_geometry(const json &j, const std::string &path, TlbGeometry g)
{
    Fields f(j, path);
    f.uint("sets", g.sets, 1);
    f.uint("ways", g.ways, 1);
    f.uint("subentries_per_entry", g.subentries_per_entry, 1);
    f.uint("latency_cycles", g.lookup_latency_cycles);
    f.finish();
    return g;
}

json geometry_json(const TlbGeometry &g)
{
    return {{"sets", g.sets},
            {"ways", g.ways},
            {"subentries_per_entry", g.subentries_per_entry},
            {"latency_cycles", g.lookup_latency_cycles}};
}

MpkiClass parse_class(const std::string &s, const std::string &key)
{
    if (s == "L")
        return MpkiClass::Low;
    if (s == "M")
        return MpkiClass::Medium;
    if (s == "H")
        return MpkiClass::High;
    throw ConfigError("key '" + key + "' must be one of L, M, H");
}

PatternSpec parse_pattern(const json &j, const std::string &path)
{
    Fields f(j, path);
    PatternSpec p;
    std::string kind;
    if (!f.string("kind", kind))
        throw ConfigError("key '" + f.where("kind") + "' is required");
    try {
        p.kind = parse_pattern_kind(kind);
    } catch (const std::invalid_argument &e) {
        throw ConfigError("key '" + f.where("kind") + "': " + e.what());
    }
    f.uint("footprint_pages", p.footprint_pages, 1);
    f.uint("accesses", p.accesses);
    f.uint("stride_pages", p.stride_pages, 1);
    f.uint("block_pages", p.block_pages, 1);
    f.uint("block_spacing_pages", p.block_spacing_pages);
    f.uint("instructions_per_access", p.instructions_per_access, 1);
    f.finish();
    return p;
}

json pattern_json(const PatternSpec &p)
{
    return {{"kind", to_string(p.kind)},
            {"footprint_pages", p.footprint_pages},
            {"accesses", p.accesses},
            {"stride_pages", p.stride_pages},
            {"block_pages", p.block_pages},
            {"block_spacing_pages", p.block_spacing_pages},
            {"instructions_per_access", p.instructions_per_access}};
}

VariantConfig parse_policy(const json &j)
{
    VariantConfig v;
    std::string kind;
    if (j.is_string()) {
        kind = j.get<std::string>();
    } else {
        Fields f(j, "policy");
        if (!f.string("kind", kind))
            throw ConfigError("key 'policy.kind' is required");
        f.boolean("four_base_tier", v.four_base_tier);
        f.boolean("sharing_enabled", v.sharing_enabled);
        f.finish();
    }
    const auto parsed = parse_variant(kind);
    if (!parsed)
        throw ConfigError("key 'policy' names unknown policy '" + kind + "'");
    v.kind = *parsed;
    return v;
}

TenantConfig parse_tenant(const json &j, const std::string &path)
{
    Fields f(j, path);
    TenantConfig t;
    if (!f.find("pid"))
        throw ConfigError("key '" + f.where("pid") + "' is required");
    f.uint("pid", t.pid);
    f.uint("g_units", t.g_units, 1);
    std::string cls;
    if (f.string("class", cls))
        t.nominal = parse_class(cls, f.where("class"));
    f.uint("issue_rate", t.issue_rate, 1);
    if (const json *p = f.find("pattern"))
        t.pattern = parse_pattern(*p, f.where("pattern"));
    std::string trace;
    if (f.string("trace", trace))
        t.trace_file = trace;
    if (t.pattern.has_value() == t.trace_file.has_value())
        throw ConfigError("tenant '" + path + "' needs exactly one of 'pattern' or 'trace'");
    if (t.pattern)
        t.pattern->intensity = t.issue_rate;
    f.finish();
    return t;
}

std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

json optional_number(std::optional<double> v)
{
    return v ? json(*v) : json(nullptr);
}

json rate(std::uint64_t hits, std::uint64_t misses)
{
    const std::uint64_t n = hits + misses;
    return n == 0 ? json(nullptr) : json(static_cast<double>(hits) / static_cast<double>(n));
}

json cdf_json(const std::vector<CdfPoint> &cdf)
{
    json out = json::array();
    for (const auto &p : cdf)
        out.push_back({p.x, p.cumulative});
    return out;
}

json utilization_json(const UtilizationStats &u)
{
    json hist = json::array();
    for (const auto &[k, c] : u.histogram)
        hist.push_back({{"utilized", k.first}, {"capacity", k.second}, {"count", c}});
    return {{"samples", u.samples},
            {"average", optional_number(u.average)},
            {"histogram", hist},
            {"cdf", cdf_json(u.cdf)}};
}

json star_json(const StarStats &s)
{
    return {{"shares", s.shares},
            {"promotions", s.promotions},
            {"joins_into_four", s.joins_into_four},
            {"reverts", s.reverts},
            {"demotions", s.demotions},
            {"layout_conflict_drops", s.layout_conflict_drops},
            {"aib_replacements", s.aib_replacements},
            {"entry_evictions", s.entry_evictions},
            {"base_evictions", s.base_evictions}};
}

json tenant_json(const TenantResult &t)
{
    const TenantStats &s = t.stats;
    json l2 = {{"hits", s.l2_hits},
               {"misses", s.l2_misses},
               {"coalesced", s.l2_coalesced},
               {"hit_rate", rate(s.l2_hits, s.l2_misses)},
               {"mpki", nullptr},
               {"class", nullptr}};
    if (s.instructions > 0) {
        const Mpki m = mpki(s.l2_misses, s.instructions);
        l2["mpki"] = m.value;
        l2["class"] = to_string(m.cls);
    }
    return {{"pid", s.pid},
            {"instance", s.instance},
            {"g_units", t.config.g_units},
            {"nominal_class", to_string(t.config.nominal)},
            {"requests", s.requests},
            {"instructions", s.instructions},
            {"l1", {{"hits", s.l1_hits},
                    {"misses", s.l1_misses},
                    {"coalesced", s.l1_coalesced},
                    {"hit_rate", rate(s.l1_hits, s.l1_misses)}}},
            {"l2", l2},
            {"l3", {{"hits", s.l3_hits}, {"misses", s.l3_misses}, {"hit_rate", rate(s.l3_hits, s.l3_misses)}}},
            {"walks", s.walks},
            {"walk_cache_hits", s.walk_cache_hits},
            {"mshr_stalls", s.mshr_stalls},
            {"latency", {{"count", t.latency.count},
                         {"mean", t.latency.mean},
                         {"p50", t.latency.p50},
                         {"p95", t.latency.p95},
                         {"p99", t.latency.p99},
                         {"max", t.latency.max},
                         {"stall_proxy", t.latency.stall_proxy}}},
            {"eviction_utilization", utilization_json(t.utilization)},
            {"reuse_distance", {{"samples", s.reuse.total()}, {"cdf", cdf_json(s.reuse.cdf())}}}};
}

const json &member(const json &j, const char *key)
{
    static const json null_value;
    auto it = j.find(key);
    return it == j.end() ? null_value : *it;
}

std::string scalar(const json &v)
{
    if (v.is_string())
        return v.get<std::string>();
    return v.dump();
}

std::optional<double> as_double(const json &v)
{
    if (v.is_number())
        return v.get<double>();
    return std::nullopt;
}

json delta(const json &a, const json &b)
{
    const auto x = as_double(a);
    const auto y = as_double(b);
    return x && y ? json(*y - *x) : json(nullptr);
}

std::map<Pid, const json *> tenants_by_pid(const json &report, const char *which)
{
    std::map<Pid, const json *> out;
    const json &tenants = member(report, "tenants");
    if (!tenants.is_array())
        throw ConfigError(std::string(which) + " report has no tenant list");
    for (const auto &t : tenants)
        out[member(t, "pid").get<Pid>()] = &t;
    return out;
}

} // namespace

// ---------------------------------------------------------------------------
// Configuration

void ExperimentConfig::validate() const
{
    if (tenants.empty())
        throw ConfigError("key 'tenants' must list at least one tenant");
    std::set<Pid> pids;
    std::uint32_t g_total = 0;
    for (std::size_t i = 0; i < tenants.size(); ++i) {
        const auto &t = tenants[i];
        const std::string key = "tenants[" + std::to_string(i) + "]";
        if (!pids.insert(t.pid).second)
            throw ConfigError("key '" + key + ".pid' repeats pid " + std::to_string(t.pid));
        if (t.g_units == 0)
            throw ConfigError("key '" + key + ".g_units' must be at least 1");
        g_total += t.g_units;
        if (t.pattern) {
            try {
                t.pattern->validate();
            } catch (const std::invalid_argument &e) {
                throw ConfigError("key '" + key + ".pattern': " + e.what());
            }
        }
    }
    if (g_total > kMaxGUnits)
        throw ConfigError("key 'tenants': g_units sum to " + std::to_string(g_total) +
                          ", more than the " + std::to_string(kMaxGUnits) + " available");

    const HierarchyConfig &h = hierarchy;
    if (!is_pow2(h.page_size_bytes))
        throw ConfigError("key 'page_size_bytes' must be a power of two");
    const std::pair<const char *, const TlbGeometry *> levels[] = {
        {"l1_tlb", &h.l1}, {"l2_tlb", &h.l2}, {"l3_tlb", &h.l3}};
    for (const auto &[name, g] : levels) {
        if (!is_pow2(g->sets) || !is_pow2(g->subentries_per_entry))
            throw ConfigError(std::string("key '") + name +
                              "': sets and subentries_per_entry must be powers of two");
        if (g->subentries_per_entry > kMaxSubentries)
            throw ConfigError(std::string("key '") + name + ".subentries_per_entry' exceeds 16");
    }
    if (h.l3_variant.kind != VariantKind::Baseline && h.l3_variant.kind != VariantKind::StaticPartition &&
        h.l3.subentries_per_entry != 16)
        throw ConfigError("key 'l3_tlb.subentries_per_entry' must be 16 for this policy");
    try {
        make_geometry(h.l3_variant.kind, h.l3);
    } catch (const std::invalid_argument &e) {
        throw ConfigError(std::string("key 'l3_tlb': ") + e.what());
    }
    const bool partitioned = h.l3_variant.kind == VariantKind::StaticPartition ||
                             h.l3_variant.kind == VariantKind::Star2PlusStatic;
    if (partitioned && tenants.size() > h.l3.ways)
        throw ConfigError("key 'tenants': more tenants than L3 ways to partition");
    if (h.tpcs_per_gpc == 0)
        throw ConfigError("key 'tpcs_per_gpc' must be at least 1");
    if (h.l1_mshr_entries == 0 || h.l2_mshr_entries == 0)
        throw ConfigError("key 'mshr' capacities must be at least 1");
    if (h.gmmu.walkers_per_gpc == 0 || h.gmmu.levels == 0)
        throw ConfigError("key 'gmmu': walkers_per_gpc and levels must be at least 1");
}

ExperimentConfig parse_config(const json &doc)
{
    ExperimentConfig c;
    Fields f(doc, "");
    f.string("name", c.name);
    f.uint("seed", c.seed);
    if (const json *p = f.find("policy"))
        c.hierarchy.l3_variant = parse_policy(*p);
    f.uint("page_size_bytes", c.hierarchy.page_size_bytes, 1);
    if (const json *g = f.find("l1_tlb"))
        c.hierarchy.l1 = parse_geometry(*g, "l1_tlb", c.hierarchy.l1);
    if (const json *g = f.find("l2_tlb"))
        c.hierarchy.l2 = parse_geometry(*g, "l2_tlb", c.hierarchy.l2);
    if (const json *g = f.find("l3_tlb"))
        c.hierarchy.l3 = parse_geometry(*g, "l3_tlb", c.hierarchy.l3);
    f.uint("tpcs_per_gpc", c.hierarchy.tpcs_per_gpc);
    if (const json *m = f.find("mshr")) {
        Fields mf(*m, "mshr");
        mf.uint("l1_entries", c.hierarchy.l1_mshr_entries);
        mf.uint("l2_entries", c.hierarchy.l2_mshr_entries);
        mf.finish();
    }
    if (const json *g = f.find("gmmu")) {
        Fields gf(*g, "gmmu");
        gf.uint("walkers_per_gpc", c.hierarchy.gmmu.walkers_per_gpc);
        gf.uint("walk_cache_entries", c.hierarchy.gmmu.walk_cache_entries);
        gf.uint("levels", c.hierarchy.gmmu.levels);
        gf.uint("level_latency", c.hierarchy.gmmu.level_latency);
        gf.finish();
    }
    std::string gran;
    if (f.string("reuse_granularity", gran)) {
        if (gran != "page" && gran != "region")
            throw ConfigError("key 'reuse_granularity' must be 'page' or 'region'");
        c.hierarchy.region_reuse = gran == "region";
    }
    const json *tenants = f.find("tenants");
    if (tenants == nullptr)
        throw ConfigError("key 'tenants' is required");
    if (!tenants->is_array())
        throw ConfigError("key 'tenants' must be an array");
    for (std::size_t i = 0; i < tenants->size(); ++i)
        c.tenants.push_back(parse_tenant((*tenants)[i], "tenants[" + std::to_string(i) + "]"));
    f.finish();
    c.validate();
    return c;
}

ExperimentConfig load_config(const std::filesystem::path &path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open config " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error &e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    ExperimentConfig c = parse_config(doc);
    if (!doc.contains("name"))
        c.name = path.stem().string();
    return c;
}

json to_json(const ExperimentConfig &c)
{
    const HierarchyConfig &h = c.hierarchy;
    json tenants = json::array();
    for (const auto &t : c.tenants) {
        json tj = {{"pid", t.pid},
                   {"g_units", t.g_units},
                   {"class", to_string(t.nominal)},
                   {"issue_rate", t.issue_rate}};
        if (t.pattern)
            tj["pattern"] = pattern_json(*t.pattern);
        else
            tj["trace"] = *t.trace_file;
        tenants.push_back(tj);
    }
    return {{"name", c.name},
            {"seed", c.seed},
            {"policy", {{"kind", std::string(to_string(h.l3_variant.kind))},
                        {"four_base_tier", h.l3_variant.four_base_tier},
                        {"sharing_enabled", h.l3_variant.sharing_enabled}}},
            {"page_size_bytes", h.page_size_bytes},
            {"l1_tlb", geometry_json(h.l1)},
            {"l2_tlb", geometry_json(h.l2)},
            {"l3_tlb", geometry_json(h.l3)},
            {"tpcs_per_gpc", h.tpcs_per_gpc},
            {"mshr", {{"l1_entries", h.l1_mshr_entries}, {"l2_entries", h.l2_mshr_entries}}},
            {"gmmu", {{"walkers_per_gpc", h.gmmu.walkers_per_gpc},
                      {"walk_cache_entries", h.gmmu.walk_cache_entries},
                      {"levels", h.gmmu.levels},
                      {"level_latency", h.gmmu.level_latency}}},
            {"reuse_granularity", h.region_reuse ? "region" : "page"},
            {"tenants", tenants}};
}

ExperimentConfig default_config()
{
    ExperimentConfig c;
    c.name = "default";
    TenantConfig h;
    h.pid = 1;
    h.g_units = 4;
    h.nominal = MpkiClass::High;
    h.pattern = PatternSpec{};
    h.pattern->kind = PatternKind::Stride;
    h.pattern->footprint_pages = 32768;
    h.pattern->accesses = 65536;
    h.pattern->stride_pages = 16;
    TenantConfig m;
    m.pid = 2;
    m.g_units = 3;
    m.nominal = MpkiClass::Medium;
    m.pattern = PatternSpec{};
    m.pattern->kind = PatternKind::Stream;
    m.pattern->footprint_pages = 8192;
    m.pattern->accesses = 32768;
    c.tenants = {h, m};
    return c;
}

// ---------------------------------------------------------------------------
// Running

std::uint64_t tenant_seed(std::uint64_t seed, Pid pid)
{
    return splitmix64(seed ^ splitmix64(pid));
}

std::vector<std::vector<TraceRecord>> build_traces(const ExperimentConfig &c)
{
    std::vector<std::vector<TraceRecord>> traces;
    for (std::size_t i = 0; i < c.tenants.size(); ++i) {
        const TenantConfig &t = c.tenants[i];
        const auto instance = static_cast<InstanceId>(i);
        if (t.pattern) {
            TenantSpec spec{t.pid, t.g_units, *t.pattern, t.nominal};
            traces.push_back(generate(spec, instance, tenant_seed(c.seed, t.pid),
                                      c.hierarchy.page_size_bytes));
            continue;
        }
        std::vector<TraceRecord> mine;
        for (auto r : parse_trace(std::filesystem::path(*t.trace_file))) {
            if (r.pid != t.pid)
                continue;
            r.instance = instance;
            mine.push_back(r);
        }
        if (mine.empty())
            throw ConfigError("trace " + *t.trace_file + " has no records for pid " +
                              std::to_string(t.pid));
        traces.push_back(std::move(mine));
    }
    return traces;
}

static std::vector<std::uint32_t> issue_rates(const ExperimentConfig &c)
{
    std::vector<std::uint32_t> rates;
    for (const auto &t : c.tenants)
        rates.push_back(t.issue_rate);
    return rates;
}

std::vector<TraceRecord> build_stream(const ExperimentConfig &c)
{
    const auto traces = build_traces(c);
    const auto rates = issue_rates(c);
    std::vector<TraceRecord> out;
    for (const auto &item : interleave(std::span<const std::vector<TraceRecord>>(traces), rates))
        out.push_back(item.rec);
    return out;
}

double RunReport::l3_hit_rate() const
{
    std::uint64_t hits = 0, misses = 0;
    for (const auto &t : tenants) {
        hits += t.stats.l3_hits;
        misses += t.stats.l3_misses;
    }
    return hits + misses == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(hits + misses);
}

UtilizationStats RunReport::utilization() const
{
    UtilizationAccumulator all;
    for (const auto &t : tenants)
        all.merge(t.stats.evictions);
    return all.stats();
}

RunReport run_experiment(const ExperimentConfig &c)
{
    c.validate();
    const auto traces = build_traces(c);
    const auto rates = issue_rates(c);
    const auto measured = rerun_until_longest(traces, rates);
    const auto stream = interleave(std::span<const MeasuredTrace>(measured), rates);

    std::vector<InstanceConfig> instances;
    for (std::size_t i = 0; i < c.tenants.size(); ++i)
        instances.push_back({static_cast<InstanceId>(i), c.tenants[i].pid, c.tenants[i].g_units, 0});
    Hierarchy h(c.hierarchy, instances);
    h.set_record_completions(false);
    for (const auto &item : stream)
        h.submit(item.rec, item.measured);
    h.drain();

    RunReport r;
    r.config = c;
    r.raw = h.raw();
    r.l3_geometry = h.l3().geometry();
    if (const StarStats *s = h.l3().star_stats())
        r.star = *s;
    for (const auto &t : c.tenants) {
        TenantResult tr;
        tr.config = t;
        tr.stats = h.tenants().at(t.pid);
        tr.latency = latency_report(tr.stats.latencies);
        tr.utilization = tr.stats.evictions.stats();
        tr.stats.latencies.clear();
        tr.stats.latencies.shrink_to_fit();
        r.tenants.push_back(std::move(tr));
    }
    return r;
}

std::vector<RunReport> run_experiments(const std::vector<ExperimentConfig> &configs, unsigned jobs)
{
    std::vector<RunReport> out(configs.size());
    std::vector<std::exception_ptr> errors(configs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < configs.size(); i = next++) {
            try {
                out[i] = run_experiment(configs[i]);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const unsigned n = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(configs.size())));
    std::vector<std::thread> pool;
    for (unsigned i = 1; i < n; ++i)
        pool.emplace_back(worker);
    worker();
    for (auto &t : pool)
        t.join();
    for (const auto &e : errors)
        if (e)
            std::rethrow_exception(e);
    return out;
}

// ---------------------------------------------------------------------------
// Reports

json to_json(const RunReport &r)
{
    json tenants = json::array();
    for (const auto &t : r.tenants)
        tenants.push_back(tenant_json(t));
    const UtilizationStats util = r.utilization();
    const VariantKind kind = r.config.hierarchy.l3_variant.kind;
    return {{"schema_version", kReportSchemaVersion},
            {"seed", r.config.seed},
            {"config", to_json(r.config)},
            {"l3", {{"policy", std::string(to_string(kind))},
                    {"sets", r.l3_geometry.sets},
                    {"ways", r.l3_geometry.ways},
                    {"subentries_per_entry", r.l3_geometry.subentries_per_entry},
                    {"total_subentries", r.l3_geometry.total_subentries()},
                    {"bits_per_entry", bits_per_entry(kind)},
                    {"star", r.star ? star_json(*r.star) : json(nullptr)}}},
            {"counters", {{"requests", r.raw.requests},
                          {"l3_probes", r.raw.l3_probes},
                          {"l3_hits", r.raw.l3_hits},
                          {"l3_misses", r.raw.l3_misses},
                          {"walks_started", r.raw.walks_started},
                          {"walks_completed", r.raw.walks_completed},
                          {"walks_queued", r.raw.walks_queued},
                          {"l3_evictions", r.raw.l3_evictions},
                          {"l1_mshr_stalls", r.raw.l1_mshr_stalls},
                          {"l2_mshr_stalls", r.raw.l2_mshr_stalls},
                          {"last_completion_tick", r.raw.last_completion}}},
            {"aggregate", {{"l3_hit_rate", r.l3_hit_rate()},
                           {"eviction_samples", util.samples},
                           {"eviction_utilization_average", optional_number(util.average)}}},
            {"tenants", tenants}};
}

std::string report_csv(const json &report)
{
    std::ostringstream out;
    out << "pid,metric,value\n";
    auto row = [&](const std::string &pid, const std::string &metric, const json &v) {
        out << pid << ',' << metric << ',' << scalar(v) << '\n';
    };
    for (const auto &t : member(report, "tenants")) {
        const std::string pid = scalar(member(t, "pid"));
        row(pid, "requests", t["requests"]);
        row(pid, "instructions", t["instructions"]);
        for (const char *level : {"l1", "l2", "l3"}) {
            const json &l = t[level];
            row(pid, std::string(level) + "_hits", l["hits"]);
            row(pid, std::string(level) + "_misses", l["misses"]);
            row(pid, std::string(level) + "_hit_rate", l["hit_rate"]);
        }
        row(pid, "l2_mpki", t["l2"]["mpki"]);
        row(pid, "l2_mpki_class", t["l2"]["class"]);
        row(pid, "walks", t["walks"]);
        row(pid, "walk_cache_hits", t["walk_cache_hits"]);
        row(pid, "mshr_stalls", t["mshr_stalls"]);
        for (const char *k : {"mean", "p50", "p95", "p99", "max", "stall_proxy"})
            row(pid, std::string("latency_") + k, t["latency"][k]);
        row(pid, "eviction_samples", t["eviction_utilization"]["samples"]);
        row(pid, "eviction_utilization_average", t["eviction_utilization"]["average"]);
        row(pid, "reuse_samples", t["reuse_distance"]["samples"]);
    }
    const json &agg = member(report, "aggregate");
    for (const auto &[k, v] : agg.items())
        row("all", k, v);
    for (const auto &[k, v] : member(report, "counters").items())
        row("all", k, v);
    row("all", "bits_per_entry", report["l3"]["bits_per_entry"]);
    return out.str();
}

std::string report_text(const json &report)
{
    std::ostringstream out;
    const json &l3 = member(report, "l3");
    out << "policy " << scalar(l3["policy"]) << ", seed " << scalar(report["seed"]) << ", L3 "
        << scalar(l3["sets"]) << "x" << scalar(l3["ways"]) << "x" << scalar(l3["subentries_per_entry"])
        << " (" << scalar(l3["bits_per_entry"]) << " bits/entry)\n";
    out << "pid   requests    L1 hit    L2 hit    L3 hit   L2 MPKI cls  util avg  lat mean\n";
    auto pct = [](const json &v) {
        char buf[32];
        if (!v.is_number())
            return std::string("       -");
        std::snprintf(buf, sizeof(buf), "%7.2f%%", 100.0 * v.get<double>());
        return std::string(buf);
    };
    for (const auto &t : member(report, "tenants")) {
        char line[256];
        const json &mp = t["l2"]["mpki"];
        std::snprintf(line, sizeof(line), "%-5s %8s  %s  %s  %s  %8.2f %3s  %s  %8.1f\n",
                      scalar(t["pid"]).c_str(), scalar(t["requests"]).c_str(),
                      pct(t["l1"]["hit_rate"]).c_str(), pct(t["l2"]["hit_rate"]).c_str(),
                      pct(t["l3"]["hit_rate"]).c_str(), mp.is_number() ? mp.get<double>() : 0.0,
                      scalar(t["l2"]["class"]).c_str(),
                      pct(t["eviction_utilization"]["average"]).c_str(),
                      t["latency"]["mean"].get<double>());
        out << line;
    }
    const json &agg = member(report, "aggregate");
    out << "shared L3 hit rate " << pct(agg["l3_hit_rate"]) << ", mean eviction utilization "
        << pct(agg["eviction_utilization_average"]) << " over " << scalar(agg["eviction_samples"])
        << " evictions\n";
    return out.str();
}

double harmonic_mean(const std::vector<double> &values)
{
    if (values.empty())
        return 0.0;
    double inv = 0;
    for (double v : values) {
        if (v <= 0)
            return 0.0;
        inv += 1.0 / v;
    }
    return static_cast<double>(values.size()) / inv;
}

json compare_reports(const json &a, const json &b, const CompareOptions &opt)
{
    if (member(a, "seed") != member(b, "seed") && !opt.force)
        throw ConfigError("reports were produced with different seeds (" + scalar(member(a, "seed")) +
                          " vs " + scalar(member(b, "seed")) + "); pass --force to compare anyway");
    const auto ta = tenants_by_pid(a, "first");
    const auto tb = tenants_by_pid(b, "second");
    std::set<Pid> pa, pb;
    for (const auto &[p, _] : ta)
        pa.insert(p);
    for (const auto &[p, _] : tb)
        pb.insert(p);
    if (pa != pb)
        throw ConfigError("reports cover different pid sets");

    json rows = json::array();
    std::vector<double> hit_a, hit_b, normalized;
    for (const auto &[pid, x] : ta) {
        const json &y = *tb.at(pid);
        const json &ha = (*x)["l3"]["hit_rate"];
        const json &hb = y["l3"]["hit_rate"];
        rows.push_back({{"pid", pid},
                        {"l1_hit_rate", delta((*x)["l1"]["hit_rate"], y["l1"]["hit_rate"])},
                        {"l2_hit_rate", delta((*x)["l2"]["hit_rate"], y["l2"]["hit_rate"])},
                        {"l3_hit_rate", delta(ha, hb)},
                        {"eviction_utilization_average",
                         delta((*x)["eviction_utilization"]["average"], y["eviction_utilization"]["average"])},
                        {"latency_mean", delta((*x)["latency"]["mean"], y["latency"]["mean"])}});
        if (ha.is_number() && hb.is_number()) {
            hit_a.push_back(ha.get<double>());
            hit_b.push_back(hb.get<double>());
            if (ha.get<double>() > 0)
                normalized.push_back(hb.get<double>() / ha.get<double>());
        }
    }
    return {{"baseline_policy", a["l3"]["policy"]},
            {"candidate_policy", b["l3"]["policy"]},
            {"tenants", rows},
            {"aggregate", {{"l3_hit_rate", delta(a["aggregate"]["l3_hit_rate"], b["aggregate"]["l3_hit_rate"])},
                           {"eviction_utilization_average",
                            delta(a["aggregate"]["eviction_utilization_average"],
                                  b["aggregate"]["eviction_utilization_average"])}}},
            {"harmonic_mean", {{"l3_hit_rate_a", harmonic_mean(hit_a)},
                               {"l3_hit_rate_b", harmonic_mean(hit_b)},
                               {"normalized_l3_hit_rate", harmonic_mean(normalized)}}}};
}

} // namespace migtlb
