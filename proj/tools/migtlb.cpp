#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "migtlb/experiment.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace migtlb;

namespace {

json read_json(const fs::path &p)
{
    std::ifstream in(p);
    if (!in)
        throw ConfigError("cannot open " + p.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error &e) {
        throw ConfigError(p.string() + ": " + e.what());
    }
}

void write_file(const fs::path &p, const std::string &text)
{
    if (p.has_parent_path())
        fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot write " + p.string());
    out << text;
}

std::vector<std::string> split_commas(const std::string &s)
{
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty())
            out.push_back(item);
    return out;
}

struct RunArgs {
    std::vector<std::string> configs;
    std::optional<std::uint64_t> seed;
    std::string policy;
    std::string out;
    unsigned jobs = 1;
};

int cmd_run(const RunArgs &a)
{
    std::vector<ExperimentConfig> base;
    if (a.configs.empty())
        base.push_back(default_config());
    for (const auto &p : a.configs)
        base.push_back(load_config(p));

    std::vector<ExperimentConfig> runs;
    for (auto c : base) {
        if (a.seed)
            c.seed = *a.seed;
        if (a.policy.empty()) {
            runs.push_back(c);
            continue;
        }
        for (const auto &name : split_commas(a.policy)) {
            const auto kind = parse_variant(name);
            if (!kind)
                throw ConfigError("--policy names unknown policy '" + name + "'");
            ExperimentConfig v = c;
            v.hierarchy.l3_variant.kind = *kind;
            v.validate();
            runs.push_back(v);
        }
    }

    const auto reports = run_experiments(runs, a.jobs);
    if (a.out.empty()) {
        if (reports.size() != 1)
            throw ConfigError("several runs need --out DIR");
        std::cout << to_json(reports.front()).dump(2) << '\n';
        return 0;
    }
    for (const auto &r : reports) {
        const json doc = to_json(r);
        const std::string stem = r.config.name + "-" +
                                 std::string(to_string(r.config.hierarchy.l3_variant.kind));
        write_file(fs::path(a.out) / (stem + ".json"), doc.dump(2) + "\n");
        write_file(fs::path(a.out) / (stem + ".csv"), report_csv(doc));
        std::cout << stem << ": L3 hit rate " << r.l3_hit_rate() << '\n';
    }
    return 0;
}

} // namespace

int main(int argc, char **argv)
{
    CLI::App app{"Multi-tenant GPU TLB hierarchy simulator"};
    app.require_subcommand(1);

    RunArgs run;
    auto *run_cmd = app.add_subcommand("run", "Simulate one or more experiment configs");
    run_cmd->add_option("--config", run.configs, "Experiment config (JSON); default mix if omitted");
    run_cmd->add_option("--seed", run.seed, "Override the config seed");
    run_cmd->add_option("--policy", run.policy, "L3 policy, or a comma-separated list of policies");
    run_cmd->add_option("--out", run.out, "Directory for <name>-<policy>.json/.csv");
    run_cmd->add_option("--jobs", run.jobs, "Worker threads")->check(CLI::PositiveNumber);

    std::string gen_config, gen_out;
    std::optional<std::uint64_t> gen_seed;
    auto *gen_cmd = app.add_subcommand("gen-trace", "Write the interleaved trace of a config");
    gen_cmd->add_option("--config", gen_config, "Experiment config (JSON)");
    gen_cmd->add_option("--seed", gen_seed, "Override the config seed");
    gen_cmd->add_option("--out", gen_out, "Trace path (.gz for gzip)")->required();

    std::string report_in, report_format = "text";
    auto *report_cmd = app.add_subcommand("report", "Render a saved JSON report");
    report_cmd->add_option("report", report_in, "Report JSON")->required();
    report_cmd->add_option("--format", report_format, "text or csv")
        ->check(CLI::IsMember({"text", "csv"}));

    std::string cmp_a, cmp_b, cmp_out;
    bool cmp_force = false;
    auto *cmp_cmd = app.add_subcommand("compare", "Per-pid deltas from report A to report B");
    cmp_cmd->add_option("a", cmp_a, "Reference report")->required();
    cmp_cmd->add_option("b", cmp_b, "Candidate report")->required();
    cmp_cmd->add_flag("--force", cmp_force, "Compare reports with different seeds");
    cmp_cmd->add_option("--out", cmp_out, "Write the comparison JSON here instead of stdout");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run_cmd)
            return cmd_run(run);
        if (*gen_cmd) {
            ExperimentConfig c = gen_config.empty() ? default_config() : load_config(gen_config);
            if (gen_seed)
                c.seed = *gen_seed;
            c.validate();
            const auto stream = build_stream(c);
            write_trace(fs::path(gen_out), stream);
            std::cout << "wrote " << stream.size() << " records to " << gen_out << '\n';
            return 0;
        }
        if (*report_cmd) {
            const json doc = read_json(report_in);
            std::cout << (report_format == "csv" ? report_csv(doc) : report_text(doc));
            return 0;
        }
        if (*cmp_cmd) {
            const json delta = compare_reports(read_json(cmp_a), read_json(cmp_b), {cmp_force});
            if (cmp_out.empty())
                std::cout << delta.dump(2) << '\n';
            else
                write_file(cmp_out, delta.dump(2) + "\n");
            return 0;
        }
    } catch (const ConfigError &e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const TraceParseError &e) {
        std::cerr << "trace error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
