#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "migtlb/hierarchy.hpp"
#include "migtlb/metrics.hpp"
#include "migtlb/variants.hpp"
#include "migtlb/workloads.hpp"

namespace migtlb {

inline constexpr int kReportSchemaVersion = 1;
inline constexpr std::uint32_t kMaxGUnits = 7;

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct TenantConfig {
    Pid pid = 1;
    std::uint32_t g_units = 1;
    MpkiClass nominal = MpkiClass::Medium;
    std::uint32_t issue_rate = 1; // requests per tick
    // Exactly one of the two sources is set.
    std::optional<PatternSpec> pattern;
    std::optional<std::string> trace_file;
};

struct ExperimentConfig {
    std::string name = "experiment";
    std::uint64_t seed = 42;
    HierarchyConfig hierarchy;
    std::vector<TenantConfig> tenants;

    void validate() const; // throws ConfigError
};

/// Parses a config document. Unknown keys, wrong types and out-of-range
/// values raise ConfigError naming the offending key path.
ExperimentConfig parse_config(const nlohmann::json &doc);
ExperimentConfig load_config(const std::filesystem::path &path);
// Canonical echo; parse_config(to_json(c)) reproduces c.
nlohmann::json to_json(const ExperimentConfig &c);

// Default geometry with a two-tenant stride + stream mix.
ExperimentConfig default_config();

std::uint64_t tenant_seed(std::uint64_t seed, Pid pid);

/// Per-tenant traces of a config, in tenant order, with instance ids
/// assigned by position.
std::vector<std::vector<TraceRecord>> build_traces(const ExperimentConfig &c);
// Single-pass interleaving of build_traces, as written by gen-trace.
std::vector<TraceRecord> build_stream(const ExperimentConfig &c);

struct TenantResult {
    TenantConfig config;
    TenantStats stats;
    LatencyReport latency;
    UtilizationStats utilization;
};

struct RunReport {
    ExperimentConfig config;
    std::vector<TenantResult> tenants;
    RawCounters raw;
    std::optional<StarStats> star;
    TlbGeometry l3_geometry;

    // Over the measured L3 probes of all tenants.
    double l3_hit_rate() const;
    UtilizationStats utilization() const;
};

RunReport run_experiment(const ExperimentConfig &c);
// Runs independent configs on up to `jobs` threads; results keep input order.
std::vector<RunReport> run_experiments(const std::vector<ExperimentConfig> &configs, unsigned jobs);

nlohmann::json to_json(const RunReport &r);
// One `pid,metric,value` row per scalar metric; aggregate rows use pid "all".
std::string report_csv(const nlohmann::json &report);
std::string report_text(const nlohmann::json &report);

struct CompareOptions {
    bool force = false; // allow reports produced with different seeds
};

/// Per-pid deltas (b - a) of hit rates and utilization plus harmonic-mean
/// summaries. Throws ConfigError when the pid sets differ, or the seeds
/// differ without `force`.
nlohmann::json compare_reports(const nlohmann::json &a, const nlohmann::json &b,
                               const CompareOptions &opt = {});

double harmonic_mean(const std::vector<double> &values);

} // namespace migtlb
