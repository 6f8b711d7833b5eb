#include "autoselect/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>

#include "autoselect/errors.hpp"
#include "autoselect/rng.hpp"

namespace autoselect {

double auc_roc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size() || scores.empty())
        throw ConfigError("auc_roc: size mismatch or empty input");
    const size_t n = scores.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return scores[a] < scores[b]; });

    // Mann-Whitney via tie-averaged ranks, accumulated in half-units so the
    // statistic stays an exact integer before the final division.
    long long n_pos = 0, n_neg = 0;
    long long two_u = 0;  // 2 * (rank sum of positives - n1(n1+1)/2)
    size_t i = 0;
    long long pos_seen = 0;
    while (i < n) {
        size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const long long two_rank = static_cast<long long>(i + j + 1);  // 2*avg rank, 1-based
        for (size_t k = i; k < j; ++k) {
            if (labels[order[k]] == 1) {
                two_u += two_rank;
                ++pos_seen;
            }
        }
        i = j;
    }
    for (int y : labels) (y == 1 ? n_pos : n_neg)++;
    if (n_pos == 0 || n_neg == 0)
        throw ConfigError("auc_roc: needs both classes present");
    (void)pos_seen;
    two_u -= n_pos * (n_pos + 1);
    return static_cast<double>(two_u) / (2.0 * static_cast<double>(n_pos * n_neg));
}

double auc_pr(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size() || scores.empty())
        throw ConfigError("auc_pr: size mismatch or empty input");
    const size_t n = scores.size();
    long long n_pos = 0;
    for (int y : labels) n_pos += (y == 1);
    if (n_pos == 0) throw ConfigError("auc_pr: needs at least one positive");

    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return scores[a] > scores[b]; });

    double ap = 0.0;
    long long tp = 0, seen = 0;
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        long long block_tp = 0;
        while (j < n && scores[order[j]] == scores[order[i]]) {
            block_tp += (labels[order[j]] == 1);
            ++j;
        }
        tp += block_tp;
        seen += static_cast<long long>(j - i);
        if (block_tp > 0) {
            const double precision =
                static_cast<double>(tp) / static_cast<double>(seen);
            ap += precision * static_cast<double>(block_tp);
        }
        i = j;
    }
    return ap / static_cast<double>(n_pos);
}

namespace {

// FNV-1a has weak avalanche in its high bits on short ids, so the split
// hash finishes with the splitmix64 mixer before mapping to [0,1). The
// exact composition is part of the split contract.
uint64_t split_mix(uint64_t h) {
    h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ULL;
    h = (h ^ (h >> 27)) * 0x94d049bb133111ebULL;
    return h ^ (h >> 31);
}

double unit_interval(const std::string& id) {
    return static_cast<double>(split_mix(fnv1a64(id)) >> 11) * 0x1.0p-53;
}

Role role_from_u(double u, int fold, int n_folds, const SplitSpec& spec) {
    double v = u + static_cast<double>(fold) / static_cast<double>(n_folds);
    v -= std::floor(v);
    if (v < spec.train) return Role::Train;
    if (v < spec.train + spec.val) return Role::Val;
    return Role::Test;
}

void check_spec(int n_folds, const SplitSpec& spec) {
    if (n_folds < 1) throw ConfigError("splits: n_folds must be >= 1");
    if (spec.train <= 0 || spec.val <= 0 || spec.test <= 0 ||
        std::abs(spec.train + spec.val + spec.test - 1.0) > 1e-9)
        throw ConfigError("splits: proportions must be positive and sum to 1");
}

} // namespace

Role role_of(const std::string& patient_id, int fold, int n_folds,
             const SplitSpec& spec) {
    check_spec(n_folds, spec);
    return role_from_u(unit_interval(patient_id), fold, n_folds, spec);
}

bool in_meta_val_half(const std::string& patient_id, int fold, int n_folds,
                      const SplitSpec& spec) {
    check_spec(n_folds, spec);
    double v = unit_interval(patient_id) +
               static_cast<double>(fold) / static_cast<double>(n_folds);
    v -= std::floor(v);
    return v >= spec.train && v < spec.train + 0.5 * spec.val;
}

SplitAssignment assign_splits(const std::vector<std::string>& patient_ids,
                              int n_folds, const SplitSpec& spec) {
    check_spec(n_folds, spec);
    std::set<std::string> uniq(patient_ids.begin(), patient_ids.end());
    if (uniq.size() != patient_ids.size())
        throw ConfigError("splits: duplicate patient ids");
    SplitAssignment a;
    a.n_folds = n_folds;
    a.ids = patient_ids;
    a.roles.assign(static_cast<size_t>(n_folds), {});
    for (int f = 0; f < n_folds; ++f) {
        a.roles[static_cast<size_t>(f)].reserve(patient_ids.size());
        for (const auto& id : patient_ids)
            a.roles[static_cast<size_t>(f)].push_back(role_of(id, f, n_folds, spec));
    }
    return a;
}

MetricSummary summarize(const std::vector<double>& per_fold) {
    if (per_fold.empty()) throw ConfigError("summarize: no folds");
    MetricSummary s;
    s.per_fold = per_fold;
    const double n = static_cast<double>(per_fold.size());
    s.mean = std::accumulate(per_fold.begin(), per_fold.end(), 0.0) / n;
    if (per_fold.size() >= 2) {
        s.has_sem = true;
        const bool all_equal =
            std::all_of(per_fold.begin(), per_fold.end(),
                        [&](double v) { return v == per_fold.front(); });
        if (all_equal) {
            s.mean = per_fold.front();
            s.sem = 0.0;
            return s;
        }
        double ss = 0.0;
        for (double v : per_fold) ss += (v - s.mean) * (v - s.mean);
        s.sem = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
    }
    return s;
}

std::string MetricSummary::format() const {
    char buf[64];
    if (has_sem)
        std::snprintf(buf, sizeof(buf), "%.3f (%.3f)", mean, sem);
    else
        std::snprintf(buf, sizeof(buf), "%.3f", mean);
    return buf;
}

} // namespace autoselect
