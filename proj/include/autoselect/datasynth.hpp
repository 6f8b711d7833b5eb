#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "autoselect/seqmodel.hpp"
#include "autoselect/tensor.hpp"

namespace autoselect {

struct Event {
    double time_h = 0.0;
    int feature = 0;
    double value = 0.0;
};

enum class Label : int { Negative = 0, Positive = 1, Excluded = 2 };

struct PatientRecord {
    std::string id;
    double length_h = 0.0;
    std::vector<Event> events;                 // sorted by time
    std::map<std::string, Label> labels;       // per task
};

/// Observation window, forecast horizon and label window, all in hours.
/// The label window starts gap_hours after the observation window ends.
struct WindowSpec {
    double observe_hours = 16;
    double horizon_hours = 8;
    double gap_hours = 0;
    double label_hours = 16;

    double prediction_time() const { return observe_hours; }
    double label_start() const { return observe_hours + gap_hours; }
    double label_end() const { return label_start() + label_hours; }
    void validate() const;
};

struct SynthConfig {
    int n_patients = 2000;
    int n_features = 16;
    std::vector<int> relevant;       // channels driven by the label latent
    std::vector<int> relevant_alt;   // optional second latent ("altmean" task)
    uint64_t seed = 1;

    double obs_prob = 0.6;           // P(channel observed in an hour)
    double extra_reading_prob = 0.2; // P(second reading in the same hour)
    double drift_sd = 0.06;          // per-patient latent drift
    double latent_step_sd = 0.10;    // latent innovation
    double obs_noise_sd = 0.25;      // reading noise on relevant channels
    double ar_coeff = 0.3;           // AR(1) coefficient of irrelevant channels
    double ar_noise_sd = 1.0;
    double spike_prob = 0.0;         // rare large-multiple outlier readings
    double spike_factor = 80.0;
    double short_record_fraction = 0.0;  // records too short to score
    std::map<int, int> duplicate_of;     // channel -> source channel to copy

    void validate() const;
};

struct Manifest {
    SynthConfig config;
    WindowSpec window;
    std::map<std::string, int> task_positive_counts;
    int n_excluded = 0;
};

struct Cohort {
    std::vector<PatientRecord> records;
    std::optional<Manifest> manifest;  // synthetic cohorts only
};

/// Synthetic EMR-like cohort with known ground-truth task relevance.
/// Channels in `relevant` track a per-patient latent random walk whose
/// label-window statistics define the supervised tasks ("latentmean",
/// "latentend", and "altmean" when relevant_alt is set); all other
/// channels are independent AR(1) noise. Labels are thresholded at the
/// cohort median of the latent statistic, so classes are balanced by
/// construction.
Cohort generate_cohort(const SynthConfig& cfg, const WindowSpec& ws);

// ---- preprocessing --------------------------------------------------------

struct FeatureStats {
    std::vector<long> counts;        // raw event counts
    std::vector<double> p1, p99;     // raw percentiles (linear interpolation)
    std::vector<double> mean, stdev; // post-outlier-removal, population stdev
    std::vector<bool> filtered;      // outlier rule applied to this feature
    std::vector<long> dropped;       // outliers dropped per feature
};

/// p in [0,100]; linear interpolation between order statistics
/// (rank = p/100 * (n-1)). `sorted` must be ascending and non-empty.
double percentile(const std::vector<double>& sorted, double p);

/// Outlier rule: keep values in [0.1*p1, 10*p99]. Features with fewer
/// than two values, or with p1 <= 0 (rule is meaningless there), are
/// skipped and reported via stats.filtered. When `dropped` is given it
/// receives per-feature drop counts.
std::vector<Event> remove_outliers(const std::vector<Event>& events,
                                   const FeatureStats& stats,
                                   std::vector<long>* dropped = nullptr);

/// value <- (value - mean) / stdev; constant features map to 0.
std::vector<Event> zscore(const std::vector<Event>& events,
                          const FeatureStats& stats);

struct BucketedSeries {
    Matrix input_values;  // [obs_hours, F], LOCF-imputed, zero before first obs
    Matrix input_mask;    // 1 where the hour bucket holds >= 1 real reading
    Matrix target_values; // [horizon_hours, F], true values only, 0 elsewhere
    Matrix target_mask;
};

/// Hourly bucketing: readings within the same (hour, feature) are
/// averaged. Input gaps are filled by last observation carried forward;
/// hours before the first observation are 0 (the feature mean after
/// z-scoring). Targets are never imputed.
BucketedSeries bucket_and_impute(const std::vector<Event>& events, int n_features,
                                 const WindowSpec& ws);

struct TaskCriterion {
    int feature = 0;
    double threshold = 0.0;  // fires when value >= threshold
};

/// Positive if the criterion fires inside the label window; excluded if it
/// fires before prediction time or the record is shorter than the
/// observation window; negative otherwise. Keyed by patient id.
std::map<std::string, Label> make_labels(const std::vector<PatientRecord>& records,
                                         const TaskCriterion& criterion,
                                         const WindowSpec& ws);

// ---- prepared cohort (model-ready) -----------------------------------------

struct PreparedPatient {
    std::string id;
    BucketedSeries series;
    std::map<std::string, Label> labels;
};

struct PreprocessReport {
    long total_dropped_outliers = 0;
    std::vector<int> skipped_features;  // <2 values or p1 <= 0
    std::vector<int> empty_features;
};

struct PreparedCohort {
    std::vector<PreparedPatient> patients;
    FeatureStats stats;
    PreprocessReport report;
    int n_features = 0;
    WindowSpec window;

    /// Stack the given patients into a batch; with_targets appends the
    /// horizon tail. Task may be empty for unlabeled batches.
    SeqBatch make_batch(const std::vector<int>& patient_idx, bool with_targets,
                        const std::string& task = {}) const;
};

/// Full pipeline: percentiles -> outlier removal -> z-score -> bucketing.
PreparedCohort preprocess(const Cohort& cohort, int n_features, const WindowSpec& ws);

// ---- CSV interchange --------------------------------------------------------

/// events CSV: header `patient_id,time_hours,feature_id,value`
/// labels CSV: header `patient_id,task,label`, label in {0,1,excluded}
Cohort ingest_csv(const std::string& events_path, const std::string& labels_path);
void write_cohort_csv(const Cohort& cohort, const std::string& events_path,
                      const std::string& labels_path);

} // namespace autoselect
