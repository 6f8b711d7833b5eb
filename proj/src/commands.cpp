#include "autoselect/commands.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <sstream>

#include <json.hpp>

#include "autoselect/baselines.hpp"
#include "autoselect/checkpoint.hpp"
#include "autoselect/errors.hpp"
#include "autoselect/evalkit.hpp"
#include "autoselect/oracle_fixtures.hpp"

namespace autoselect {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v, const char* spec = "%.17g") {
    char buf[64];
    std::snprintf(buf, sizeof(buf), spec, v);
    return buf;
}

std::string frac_tag(double f) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", f);
    return buf;
}

} // namespace

int cmd_synth(const RunConfig& cfg) {
    cfg.validate();
    if (!cfg.cohort_is_synthetic)
        throw ConfigError("synth: config selects a CSV cohort");
    fs::create_directories(cfg.out);
    Cohort cohort = generate_cohort(cfg.synth, cfg.window);
    write_cohort_csv(cohort, cfg.out + "/events.csv", cfg.out + "/labels.csv");

    nlohmann::json man{
        {"seed", cfg.synth.seed},
        {"n_patients", cfg.synth.n_patients},
        {"n_features", cfg.synth.n_features},
        {"relevant", cfg.synth.relevant},
        {"relevant_alt", cfg.synth.relevant_alt},
        {"n_excluded", cohort.manifest->n_excluded},
        {"task_positive_counts", cohort.manifest->task_positive_counts},
        {"n_events", 0},
    };
    long n_events = 0;
    for (const auto& r : cohort.records) n_events += static_cast<long>(r.events.size());
    man["n_events"] = n_events;
    std::ofstream mf(cfg.out + "/manifest.json");
    if (!mf) throw ConfigError("synth: cannot write manifest");
    mf << man.dump(2) << "\n";
    return cfg.synth.n_patients;
}

void write_training_log_csv(const std::string& path,
                            const std::vector<TrainLogRow>& rows, Index n_tasks) {
    std::ofstream f(path);
    if (!f) throw ConfigError("cannot write " + path);
    f << "outer_step,pretrain_loss,val_auc";
    for (Index k = 0; k < n_tasks; ++k) f << ",lambda_" << k;
    f << "\n";
    for (const TrainLogRow& r : rows) {
        f << r.outer_step << ',' << fmt(r.pretrain_loss) << ',' << fmt(r.val_auc);
        for (Index k = 0; k < r.lambda.size(); ++k) f << ',' << fmt(r.lambda[k]);
        f << "\n";
    }
}

namespace {

void write_dynamics_csv(const std::string& path, const std::vector<DynRow>& rows) {
    std::ofstream f(path);
    if (!f) throw ConfigError("cannot write " + path);
    f << "step,split,metric,value\n";
    for (const DynRow& r : rows)
        f << r.step << ',' << r.split << ',' << r.metric << ',' << fmt(r.value)
          << "\n";
}

struct PlannedRun {
    std::string arm;
    double fraction;
    int fold;
};

RunContext context_for(const RunConfig& cfg, const PreparedCohort& pc,
                       double fraction, int fold, const std::string& task) {
    RunContext ctx;
    ctx.cohort = &pc;
    ctx.task = task;
    ctx.fold = fold;
    ctx.n_folds = cfg.folds;
    ctx.fraction = fraction;
    ctx.seed = cfg.seed;
    ctx.hidden = cfg.hidden;
    ctx.batch = cfg.batch;
    ctx.sched = cfg.schedule;
    ctx.warm_start = cfg.warm_start;
    ctx.reinit_classifier = cfg.reinit_classifier;
    ctx.reading = cfg.reading();
    ctx.eval_every = cfg.eval_every;
    ctx.patience = cfg.patience;
    for (const auto& [dst, src] : cfg.synth.duplicate_of)
        if (cfg.cohort_is_synthetic) ctx.pairs[dst] = src;
    return ctx;
}

/// All requested arms for one (fraction, fold) cell, run in dependency
/// order: selection runs come first so ablations and transfer can reuse
/// their weights and encoders.
std::vector<ArmResult> run_cell(const RunConfig& cfg, const PreparedCohort& pc,
                                double fraction, int fold) {
    std::vector<ArmResult> results;
    std::optional<ArmResult> autoselect_res;
    std::optional<ArmResult> source_res;

    auto need = [&](ArmKind k) {
        for (const auto& a : cfg.arms)
            if (arm_kind_from_name(a) == k) return true;
        return false;
    };
    const bool need_select = need(ArmKind::AutoSelect) || need(ArmKind::PretrainTop) ||
                             need(ArmKind::PretrainDown);

    if (need_select) {
        RunContext ctx = context_for(cfg, pc, fraction, fold, cfg.task);
        autoselect_res = run_autoselect(ctx);
    }
    if (need(ArmKind::Transfer)) {
        RunContext src_ctx =
            context_for(cfg, pc, fraction, fold, cfg.transfer_source_task);
        source_res = run_autoselect(src_ctx);
    }

    for (const auto& name : cfg.arms) {
        const ArmKind kind = arm_kind_from_name(name);
        RunContext ctx = context_for(cfg, pc, fraction, fold, cfg.task);
        switch (kind) {
            case ArmKind::Supervised:
                results.push_back(run_supervised(ctx));
                break;
            case ArmKind::PretrainAll:
                results.push_back(run_pretrain_all(ctx));
                break;
            case ArmKind::CoTrain:
                results.push_back(run_cotrain(ctx, cfg.cotrain_target_weight,
                                              cfg.cotrain_aux_weight));
                break;
            case ArmKind::AutoSelect:
                results.push_back(*autoselect_res);
                break;
            case ArmKind::PretrainTop:
                results.push_back(
                    run_ablation(ctx, autoselect_res->lambda_weights, true, cfg.top_k));
                break;
            case ArmKind::PretrainDown:
                results.push_back(
                    run_ablation(ctx, autoselect_res->lambda_weights, false, cfg.top_k));
                break;
            case ArmKind::Transfer:
                results.push_back(
                    run_transfer(ctx, source_res->model, source_res->lambda_weights));
                break;
        }
    }
    return results;
}

void write_run_outputs(const RunConfig& cfg, const ArmResult& res, double fraction,
                       int fold, Index n_tasks) {
    const std::string dir = cfg.out + "/" + res.arm + "_frac" + frac_tag(fraction) +
                            "_fold" + std::to_string(fold);
    fs::create_directories(dir);
    const std::string suffix = res.aborted ? ".partial" : "";
    write_training_log_csv(dir + "/training_log.csv" + suffix, res.log, n_tasks);
    write_dynamics_csv(dir + "/dynamics.csv" + suffix, res.dynamics);
    checkpoint_of(res.model, res.lambda_weights).save(dir + "/checkpoint.bin" + suffix);
    if (res.aborted) {
        std::ofstream f(dir + "/error.txt");
        f << res.abort_reason << "\n";
    }
}

void write_metrics_csv(const std::string& path, std::vector<MetricsRow> rows) {
    std::sort(rows.begin(), rows.end(), [](const MetricsRow& a, const MetricsRow& b) {
        return std::tie(a.arm, a.task, a.fraction, a.fold) <
               std::tie(b.arm, b.task, b.fraction, b.fold);
    });
    std::ofstream f(path);
    if (!f) throw ConfigError("cannot write " + path);
    f << "arm,task,fraction,fold,auc_roc,auc_pr,sem\n";
    for (const MetricsRow& r : rows) {
        f << r.arm << ',' << r.task << ',' << frac_tag(r.fraction) << ',' << r.fold
          << ',' << fmt(r.auc_roc, "%.6f") << ',' << fmt(r.auc_pr, "%.6f") << ',';
        if (r.has_sem) f << fmt(r.sem, "%.6f");
        f << "\n";
    }
}

} // namespace

RunOutcome cmd_run(const RunConfig& cfg) {
    cfg.validate();
    fs::create_directories(cfg.out);
    cfg.save(cfg.out + "/config.json");

    Cohort cohort;
    int n_features;
    if (cfg.cohort_is_synthetic) {
        cohort = generate_cohort(cfg.synth, cfg.window);
        n_features = cfg.synth.n_features;
    } else {
        cohort = ingest_csv(cfg.events_csv, cfg.labels_csv);
        int max_feature = -1;
        for (const auto& r : cohort.records)
            for (const auto& e : r.events) max_feature = std::max(max_feature, e.feature);
        n_features = max_feature + 1;
        if (n_features < 1) throw ConfigError("run: cohort has no events");
    }
    PreparedCohort pc = preprocess(cohort, n_features, cfg.window);

    std::vector<std::pair<double, int>> cells;
    for (double fr : cfg.fractions)
        for (int fold = 0; fold < cfg.folds; ++fold) cells.emplace_back(fr, fold);

    int jobs = cfg.jobs;
    if (const char* det = std::getenv("AUTOSELECT_DETERMINISTIC");
        det && std::string(det) == "1")
        jobs = 1;

    std::vector<std::vector<ArmResult>> cell_results(cells.size());
    if (jobs <= 1) {
        for (size_t i = 0; i < cells.size(); ++i)
            cell_results[i] = run_cell(cfg, pc, cells[i].first, cells[i].second);
    } else {
        std::atomic<size_t> next{0};
        auto worker = [&]() {
            for (;;) {
                const size_t i = next.fetch_add(1);
                if (i >= cells.size()) return;
                cell_results[i] = run_cell(cfg, pc, cells[i].first, cells[i].second);
            }
        };
        std::vector<std::future<void>> pool;
        for (int w = 0; w < jobs; ++w)
            pool.push_back(std::async(std::launch::async, worker));
        for (auto& fjob : pool) fjob.get();
    }

    RunOutcome outcome;
    const Index n_tasks = static_cast<Index>(pc.n_features);
    for (size_t i = 0; i < cells.size(); ++i) {
        for (const ArmResult& res : cell_results[i]) {
            write_run_outputs(cfg, res, cells[i].first, cells[i].second, n_tasks);
            if (res.aborted) {
                outcome.n_failed++;
                continue;
            }
            MetricsRow row;
            row.arm = res.arm;
            row.task = cfg.task;
            row.fraction = cells[i].first;
            row.fold = cells[i].second;
            row.auc_roc = res.auc_roc;
            row.auc_pr = res.auc_pr;
            outcome.rows.push_back(row);
        }
    }

    // fill the per-group sem column
    std::map<std::tuple<std::string, std::string, double>, std::vector<size_t>> groups;
    for (size_t i = 0; i < outcome.rows.size(); ++i)
        groups[{outcome.rows[i].arm, outcome.rows[i].task, outcome.rows[i].fraction}]
            .push_back(i);
    for (const auto& [key, idx] : groups) {
        if (idx.size() < 2) continue;
        std::vector<double> vals;
        vals.reserve(idx.size());
        for (size_t i : idx) vals.push_back(outcome.rows[i].auc_roc);
        MetricSummary s = summarize(vals);
        for (size_t i : idx) {
            outcome.rows[i].sem = s.sem;
            outcome.rows[i].has_sem = true;
        }
    }

    write_metrics_csv(cfg.out + "/metrics.csv" +
                          (outcome.n_failed > 0 ? ".partial" : ""),
                      outcome.rows);
    return outcome;
}

bool cmd_check(bool corrupt) {
    std::vector<FixtureResult> results = run_oracle_fixtures(corrupt);
    std::printf("%-42s %12s %10s  %s\n", "fixture", "max_rel_err", "tolerance",
                "status");
    bool ok = true;
    for (const FixtureResult& r : results) {
        std::printf("%-42s %12.3e %10.1e  %s\n", r.name.c_str(), r.max_err,
                    r.tolerance, r.pass ? "PASS" : "FAIL");
        ok &= r.pass;
    }
    std::printf("%zu fixtures, %s\n", results.size(), ok ? "all passed" : "FAILURES");
    return ok;
}

std::vector<std::vector<std::string>> read_csv_table(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open " + path);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::string cur;
        for (char ch : line) {
            if (ch == ',') {
                cells.push_back(cur);
                cur.clear();
            } else if (ch != '\r') {
                cur.push_back(ch);
            }
        }
        cells.push_back(cur);
        rows.push_back(std::move(cells));
    }
    return rows;
}

std::vector<MetricsRow> read_metrics_csv(const std::string& path) {
    auto table = read_csv_table(path);
    if (table.empty() ||
        table[0] != std::vector<std::string>{"arm", "task", "fraction", "fold",
                                             "auc_roc", "auc_pr", "sem"})
        throw ConfigError("metrics csv: bad header in " + path);
    std::vector<MetricsRow> rows;
    for (size_t i = 1; i < table.size(); ++i) {
        const auto& c = table[i];
        if (c.size() != 7) throw ConfigError("metrics csv: bad row in " + path);
        MetricsRow r;
        r.arm = c[0];
        r.task = c[1];
        r.fraction = std::stod(c[2]);
        r.fold = std::stoi(c[3]);
        r.auc_roc = std::stod(c[4]);
        r.auc_pr = std::stod(c[5]);
        if (!c[6].empty()) {
            r.sem = std::stod(c[6]);
            r.has_sem = true;
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

int cmd_report(const std::string& results_dir) {
    std::vector<MetricsRow> rows = read_metrics_csv(results_dir + "/metrics.csv");
    std::vector<std::string> arms;
    std::map<std::pair<std::string, double>, std::map<std::string, std::vector<double>>>
        table;  // (task, fraction) -> arm -> fold values
    for (const MetricsRow& r : rows) {
        if (std::find(arms.begin(), arms.end(), r.arm) == arms.end())
            arms.push_back(r.arm);
        table[{r.task, r.fraction}][r.arm].push_back(r.auc_roc);
    }
    std::sort(arms.begin(), arms.end());

    std::ofstream rf(results_dir + "/report.csv");
    if (!rf) throw ConfigError("cannot write report.csv");
    rf << "task,fraction";
    for (const auto& a : arms) rf << ',' << a;
    rf << "\n";

    std::printf("%-14s %-9s", "task", "fraction");
    for (const auto& a : arms) std::printf(" %-16s", a.c_str());
    std::printf("\n");
    for (const auto& [key, by_arm] : table) {
        std::printf("%-14s %-9s", key.first.c_str(), frac_tag(key.second).c_str());
        rf << key.first << ',' << frac_tag(key.second);
        for (const auto& a : arms) {
            auto it = by_arm.find(a);
            if (it == by_arm.end()) {
                std::printf(" %-16s", "");
                rf << ',';
                continue;
            }
            const std::string cell = summarize(it->second).format();
            std::printf(" %-16s", cell.c_str());
            rf << ',' << cell;
        }
        std::printf("\n");
        rf << "\n";
    }
    return static_cast<int>(table.size());
}

} // namespace autoselect
