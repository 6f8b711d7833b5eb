#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "autoselect/tensor.hpp"

namespace autoselect {

/// Probability that a random positive outranks a random negative, ties
/// counted 1/2 (Mann-Whitney). Throws ConfigError if only one class is
/// present.
double auc_roc(const std::vector<double>& scores, const std::vector<int>& labels);

/// Average precision: sum over descending distinct score thresholds of
/// precision times the recall increment (step-wise, no trapezoid).
/// Throws ConfigError if there are no positives.
double auc_pr(const std::vector<double>& scores, const std::vector<int>& labels);

enum class Role { Train, Val, Test };

struct SplitSpec {
    double train = 0.8, val = 0.1, test = 0.1;
};

/// Role of a patient in fold `fold` of `n_folds`. Pure function of the
/// patient id: the 64-bit FNV-1a hash, passed through the splitmix64
/// finalizer for avalanche, maps to u in [0,1); fold f shifts the role
/// boundaries by f/n_folds (mod 1).
Role role_of(const std::string& patient_id, int fold, int n_folds,
             const SplitSpec& spec = {});

/// Validation is further halved into a meta half (drives the task-weight
/// updates) and a stop half (early stopping / model selection).
bool in_meta_val_half(const std::string& patient_id, int fold, int n_folds,
                      const SplitSpec& spec = {});

struct SplitAssignment {
    int n_folds = 0;
    std::vector<std::string> ids;
    std::vector<std::vector<Role>> roles;  // [fold][patient]
};

/// Throws ConfigError on duplicate ids or invalid proportions.
SplitAssignment assign_splits(const std::vector<std::string>& patient_ids,
                              int n_folds, const SplitSpec& spec = {});

struct MetricSummary {
    std::vector<double> per_fold;
    double mean = 0.0;
    double sem = 0.0;   // sample stdev / sqrt(n); 0 when absent
    bool has_sem = false;
    std::string format() const;  // "0.833 (0.017)", sem omitted when absent
};

MetricSummary summarize(const std::vector<double>& per_fold);

} // namespace autoselect
