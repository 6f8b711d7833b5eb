#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "autoselect/commands.hpp"
#include "autoselect/errors.hpp"

using namespace autoselect;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitNumeric = 2;
constexpr int kExitOracle = 3;

struct CommonOpts {
    std::string config_path;
    std::string out;
    std::vector<std::string> arms;
    std::vector<double> fractions;
    uint64_t seed = 0;
    bool seed_set = false;
    int jobs = 0;
};

RunConfig resolve_config(const CommonOpts& o) {
    RunConfig cfg;
    if (!o.config_path.empty()) cfg = RunConfig::load(o.config_path);
    if (!o.out.empty()) cfg.out = o.out;
    if (!o.arms.empty()) cfg.arms = o.arms;
    if (!o.fractions.empty()) cfg.fractions = o.fractions;
    if (o.seed_set) cfg.seed = o.seed;
    if (o.jobs > 0) cfg.jobs = o.jobs;
    cfg.validate();
    return cfg;
}

void add_common(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--config", o.config_path, "Path to a JSON run config");
    cmd->add_option("--out", o.out, "Output directory (overrides config)");
    cmd->add_option("--arm", o.arms, "Arm to run; repeatable")->take_all();
    cmd->add_option("--fraction", o.fractions, "Data fraction; repeatable")->take_all();
    cmd->add_option("--seed", o.seed, "Training seed (overrides config)")
        ->each([&o](const std::string&) { o.seed_set = true; });
    cmd->add_option("--jobs", o.jobs, "Concurrent folds/arms (inner training is "
                                      "always single-threaded)");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Auxiliary-task selection experiments"};
    app.require_subcommand(1);

    CommonOpts synth_opts, run_opts;
    std::string report_dir;
    bool check_corrupt = false;

    CLI::App* synth = app.add_subcommand("synth", "Write a synthetic cohort as CSV");
    add_common(synth, synth_opts);

    CLI::App* run = app.add_subcommand("run", "Run experiment arms and write metrics");
    add_common(run, run_opts);

    CLI::App* check = app.add_subcommand("check", "Run the gradient/metric oracle suite");
    check->add_flag("--corrupt", check_corrupt,
                    "Deliberately corrupt one gradient (fault-injection hook)");

    CLI::App* report = app.add_subcommand("report", "Summarize metrics.csv as tables");
    report->add_option("dir", report_dir, "Results directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) {
            const int n = cmd_synth(resolve_config(synth_opts));
            std::printf("wrote %d patients to %s\n", n,
                        resolve_config(synth_opts).out.c_str());
            return kExitOk;
        }
        if (run->parsed()) {
            RunOutcome oc = cmd_run(resolve_config(run_opts));
            std::printf("%zu metric rows, %d failed runs\n", oc.rows.size(),
                        oc.n_failed);
            return oc.n_failed > 0 ? kExitNumeric : kExitOk;
        }
        if (check->parsed()) {
            return cmd_check(check_corrupt) ? kExitOk : kExitOracle;
        }
        if (report->parsed()) {
            cmd_report(report_dir);
            return kExitOk;
        }
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "numeric error: %s\n", e.what());
        return kExitNumeric;
    } catch (const OracleError& e) {
        std::fprintf(stderr, "oracle error: %s\n", e.what());
        return kExitOracle;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitConfig;
    }
    return kExitConfig;
}
