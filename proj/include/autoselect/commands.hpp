#pragma once

#include <string>
#include <vector>

#include "autoselect/runconfig.hpp"
#include "autoselect/trainer.hpp"

namespace autoselect {

/// Generate the synthetic cohort and write events.csv, labels.csv and
/// manifest.json into cfg.out. Returns the number of patients written.
int cmd_synth(const RunConfig& cfg);

/// One metrics row per (arm, fraction, fold). `sem` is shared across the
/// rows of an (arm, task, fraction) group and blank for single-fold runs.
struct MetricsRow {
    std::string arm;
    std::string task;
    double fraction = 1.0;
    int fold = 0;
    double auc_roc = 0.0;
    double auc_pr = 0.0;
    double sem = 0.0;
    bool has_sem = false;
};

struct RunOutcome {
    std::vector<MetricsRow> rows;
    int n_failed = 0;
};

/// Run every requested arm for every fraction and fold; write metrics.csv,
/// per-run training logs, dynamics and checkpoints under cfg.out. Failed
/// runs keep their outputs with a .partial suffix. Returns the outcome;
/// callers map n_failed > 0 to exit code 2.
RunOutcome cmd_run(const RunConfig& cfg);

/// Run the gradient/hyper-gradient/metric oracle suite, print a pass/fail
/// table, return false if any fixture exceeded its tolerance. `corrupt`
/// is the documented fault-injection hook.
bool cmd_check(bool corrupt = false);

/// Read <dir>/metrics.csv and print mean (sem) tables per task x fraction
/// with one column per arm; also writes <dir>/report.csv.
int cmd_report(const std::string& results_dir);

// exposed for tests
std::vector<MetricsRow> read_metrics_csv(const std::string& path);
void write_training_log_csv(const std::string& path,
                            const std::vector<TrainLogRow>& rows, Index n_tasks);
std::vector<std::vector<std::string>> read_csv_table(const std::string& path);

} // namespace autoselect
