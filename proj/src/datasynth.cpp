#include "autoselect/datasynth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "autoselect/errors.hpp"
#include "autoselect/rng.hpp"

namespace autoselect {

void WindowSpec::validate() const {
    if (observe_hours <= 0 || horizon_hours <= 0 || label_hours <= 0 || gap_hours < 0)
        throw ConfigError("window: hours must be positive (gap may be 0)");
}

void SynthConfig::validate() const {
    if (n_patients < 1 || n_features < 1)
        throw ConfigError("synth: need at least one patient and one feature");
    if (relevant.empty())
        throw ConfigError("synth: relevant task set must be non-empty");
    for (int f : relevant)
        if (f < 0 || f >= n_features)
            throw ConfigError("synth: relevant channel out of range");
    for (int f : relevant_alt)
        if (f < 0 || f >= n_features)
            throw ConfigError("synth: relevant_alt channel out of range");
    for (const auto& [dst, src] : duplicate_of)
        if (dst < 0 || dst >= n_features || src < 0 || src >= n_features || dst == src)
            throw ConfigError("synth: bad duplicate mapping");
}

namespace {

bool contains(const std::vector<int>& v, int x) {
    return std::find(v.begin(), v.end(), x) != v.end();
}

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

} // namespace

Cohort generate_cohort(const SynthConfig& cfg, const WindowSpec& ws) {
    cfg.validate();
    ws.validate();
    const int total_hours = static_cast<int>(std::llround(
        std::max(ws.label_end(), ws.observe_hours + ws.horizon_hours)));
    const int F = cfg.n_features;

    // Per-feature raw offset/scale, fixed by the seed.
    std::vector<double> offset(static_cast<size_t>(F)), scale(static_cast<size_t>(F));
    for (int f = 0; f < F; ++f) {
        RngStream st(cfg.seed, "synth.feat", static_cast<uint64_t>(f));
        offset[static_cast<size_t>(f)] = st.uniform(40.0, 160.0);
        scale[static_cast<size_t>(f)] = st.uniform(5.0, 20.0);
    }

    Cohort cohort;
    cohort.records.resize(static_cast<size_t>(cfg.n_patients));
    std::vector<double> stat_mean(static_cast<size_t>(cfg.n_patients)),
        stat_end(static_cast<size_t>(cfg.n_patients)),
        stat_alt(static_cast<size_t>(cfg.n_patients));
    std::vector<bool> short_rec(static_cast<size_t>(cfg.n_patients), false);

    const int lab_lo = static_cast<int>(std::llround(ws.label_start()));
    const int lab_hi = static_cast<int>(std::llround(ws.label_end()));

    for (int i = 0; i < cfg.n_patients; ++i) {
        PatientRecord& rec = cohort.records[static_cast<size_t>(i)];
        char idbuf[32];
        std::snprintf(idbuf, sizeof(idbuf), "p%06d", i);
        rec.id = idbuf;

        RngStream pst(cfg.seed, "synth.patient", static_cast<uint64_t>(i));
        short_rec[static_cast<size_t>(i)] = pst.uniform() < cfg.short_record_fraction;
        rec.length_h = short_rec[static_cast<size_t>(i)]
                           ? 0.5 * ws.observe_hours
                           : static_cast<double>(total_hours);

        // Latent patient state: random walk with a patient-specific drift.
        std::vector<double> z(static_cast<size_t>(total_hours));
        const double drift = cfg.drift_sd * pst.normal();
        z[0] = 0.5 * pst.normal();
        for (int h = 1; h < total_hours; ++h)
            z[static_cast<size_t>(h)] =
                z[static_cast<size_t>(h - 1)] + drift + cfg.latent_step_sd * pst.normal();

        RngStream ast(cfg.seed, "synth.patient.alt", static_cast<uint64_t>(i));
        std::vector<double> z2(static_cast<size_t>(total_hours));
        const double drift2 = cfg.drift_sd * ast.normal();
        z2[0] = 0.5 * ast.normal();
        for (int h = 1; h < total_hours; ++h)
            z2[static_cast<size_t>(h)] =
                z2[static_cast<size_t>(h - 1)] + drift2 + cfg.latent_step_sd * ast.normal();

        double zsum = 0.0, z2sum = 0.0;
        for (int h = lab_lo; h < lab_hi; ++h) {
            zsum += z[static_cast<size_t>(h)];
            z2sum += z2[static_cast<size_t>(h)];
        }
        stat_mean[static_cast<size_t>(i)] = zsum / (lab_hi - lab_lo);
        stat_end[static_cast<size_t>(i)] = z[static_cast<size_t>(lab_hi - 1)];
        stat_alt[static_cast<size_t>(i)] = z2sum / (lab_hi - lab_lo);

        // Channel readings. Duplicated channels copy their source verbatim.
        std::vector<std::vector<Event>> per_chan(static_cast<size_t>(F));
        for (int f = 0; f < F; ++f) {
            if (cfg.duplicate_of.count(f)) continue;
            RngStream cst(cfg.seed, "synth.chan",
                          static_cast<uint64_t>(i) * static_cast<uint64_t>(F) +
                              static_cast<uint64_t>(f));
            const bool rel = contains(cfg.relevant, f);
            const bool rel_alt = contains(cfg.relevant_alt, f);
            double ar = 0.0;
            const int chan_hours = static_cast<int>(std::llround(
                std::min(rec.length_h, static_cast<double>(total_hours))));
            for (int h = 0; h < chan_hours; ++h) {
                ar = cfg.ar_coeff * ar + cfg.ar_noise_sd * cst.normal();
                if (cst.uniform() >= cfg.obs_prob) continue;
                int n_read = 1 + (cst.uniform() < cfg.extra_reading_prob ? 1 : 0);
                for (int r = 0; r < n_read; ++r) {
                    double signal;
                    if (rel)
                        signal = z[static_cast<size_t>(h)] + cfg.obs_noise_sd * cst.normal();
                    else if (rel_alt)
                        signal = z2[static_cast<size_t>(h)] + cfg.obs_noise_sd * cst.normal();
                    else
                        signal = ar + cfg.obs_noise_sd * cst.normal();
                    double value = offset[static_cast<size_t>(f)] +
                                   scale[static_cast<size_t>(f)] * signal;
                    if (cfg.spike_prob > 0 && cst.uniform() < cfg.spike_prob)
                        value *= cfg.spike_factor;
                    per_chan[static_cast<size_t>(f)].push_back(
                        {h + cst.uniform(), f, value});
                }
            }
        }
        for (const auto& [dst, src] : cfg.duplicate_of) {
            per_chan[static_cast<size_t>(dst)] = per_chan[static_cast<size_t>(src)];
            for (Event& e : per_chan[static_cast<size_t>(dst)]) e.feature = dst;
        }
        for (auto& ch : per_chan)
            rec.events.insert(rec.events.end(), ch.begin(), ch.end());
        std::sort(rec.events.begin(), rec.events.end(),
                  [](const Event& a, const Event& b) {
                      return a.time_h != b.time_h ? a.time_h < b.time_h
                                                  : a.feature < b.feature;
                  });
    }

    // Threshold each task's latent statistic at its cohort median.
    std::vector<double> pool_mean, pool_end, pool_alt;
    for (int i = 0; i < cfg.n_patients; ++i) {
        if (short_rec[static_cast<size_t>(i)]) continue;
        pool_mean.push_back(stat_mean[static_cast<size_t>(i)]);
        pool_end.push_back(stat_end[static_cast<size_t>(i)]);
        pool_alt.push_back(stat_alt[static_cast<size_t>(i)]);
    }
    if (pool_mean.empty()) throw ConfigError("synth: every record is short");
    const double med_mean = median_of(pool_mean);
    const double med_end = median_of(pool_end);
    const double med_alt = median_of(pool_alt);

    Manifest man;
    man.config = cfg;
    man.window = ws;
    for (int i = 0; i < cfg.n_patients; ++i) {
        PatientRecord& rec = cohort.records[static_cast<size_t>(i)];
        auto assign = [&](const std::string& task, double stat, double med) {
            Label lab = short_rec[static_cast<size_t>(i)]
                            ? Label::Excluded
                            : (stat > med ? Label::Positive : Label::Negative);
            rec.labels[task] = lab;
            if (lab == Label::Positive) man.task_positive_counts[task]++;
        };
        assign("latentmean", stat_mean[static_cast<size_t>(i)], med_mean);
        assign("latentend", stat_end[static_cast<size_t>(i)], med_end);
        if (!cfg.relevant_alt.empty())
            assign("altmean", stat_alt[static_cast<size_t>(i)], med_alt);
        if (short_rec[static_cast<size_t>(i)]) man.n_excluded++;
    }
    cohort.manifest = std::move(man);
    return cohort;
}

double percentile(const std::vector<double>& sorted, double p) {
    if (sorted.empty()) throw ConfigError("percentile: empty input");
    if (p < 0.0 || p > 100.0) throw ConfigError("percentile: p out of [0,100]");
    const double rank = p / 100.0 * static_cast<double>(sorted.size() - 1);
    const size_t lo = static_cast<size_t>(std::floor(rank));
    const double frac = rank - static_cast<double>(lo);
    if (lo + 1 >= sorted.size()) return sorted.back();
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

namespace {

FeatureStats raw_stats(const std::vector<Event>& events, int n_features) {
    FeatureStats s;
    const size_t F = static_cast<size_t>(n_features);
    s.counts.assign(F, 0);
    s.p1.assign(F, 0.0);
    s.p99.assign(F, 0.0);
    s.mean.assign(F, 0.0);
    s.stdev.assign(F, 0.0);
    s.filtered.assign(F, false);
    s.dropped.assign(F, 0);
    std::vector<std::vector<double>> vals(F);
    for (const Event& e : events) {
        if (e.feature < 0 || e.feature >= n_features)
            throw ConfigError("stats: feature id out of range");
        vals[static_cast<size_t>(e.feature)].push_back(e.value);
    }
    for (size_t f = 0; f < F; ++f) {
        s.counts[f] = static_cast<long>(vals[f].size());
        if (vals[f].size() < 2) continue;
        std::sort(vals[f].begin(), vals[f].end());
        s.p1[f] = percentile(vals[f], 1.0);
        s.p99[f] = percentile(vals[f], 99.0);
        s.filtered[f] = s.p1[f] > 0.0;  // the x0.1/x10 band needs positive values
    }
    return s;
}

void moments_after_removal(const std::vector<Event>& kept, FeatureStats& s) {
    const size_t F = s.counts.size();
    std::vector<double> sum(F, 0.0), sumsq(F, 0.0);
    std::vector<long> n(F, 0);
    for (const Event& e : kept) {
        const size_t f = static_cast<size_t>(e.feature);
        sum[f] += e.value;
        sumsq[f] += e.value * e.value;
        n[f]++;
    }
    for (size_t f = 0; f < F; ++f) {
        if (n[f] == 0) continue;
        s.mean[f] = sum[f] / static_cast<double>(n[f]);
        const double var = sumsq[f] / static_cast<double>(n[f]) - s.mean[f] * s.mean[f];
        s.stdev[f] = var > 0.0 ? std::sqrt(var) : 0.0;
    }
}

} // namespace

std::vector<Event> remove_outliers(const std::vector<Event>& events,
                                   const FeatureStats& stats,
                                   std::vector<long>* dropped) {
    std::vector<Event> kept;
    kept.reserve(events.size());
    for (const Event& e : events) {
        const size_t f = static_cast<size_t>(e.feature);
        if (stats.filtered[f] &&
            (e.value < 0.1 * stats.p1[f] || e.value > 10.0 * stats.p99[f])) {
            if (dropped) (*dropped)[f]++;
            continue;
        }
        kept.push_back(e);
    }
    return kept;
}

std::vector<Event> zscore(const std::vector<Event>& events,
                          const FeatureStats& stats) {
    std::vector<Event> out;
    out.reserve(events.size());
    for (Event e : events) {
        const size_t f = static_cast<size_t>(e.feature);
        const double sd = stats.stdev[f];
        e.value = sd > 0.0 ? (e.value - stats.mean[f]) / sd : 0.0;
        out.push_back(e);
    }
    return out;
}

BucketedSeries bucket_and_impute(const std::vector<Event>& events, int n_features,
                                 const WindowSpec& ws) {
    ws.validate();
    const int n_in = static_cast<int>(std::llround(ws.observe_hours));
    const int n_h = static_cast<int>(std::llround(ws.horizon_hours));
    const int total = n_in + n_h;
    Matrix sum = Matrix::Zero(total, n_features);
    Matrix cnt = Matrix::Zero(total, n_features);
    for (const Event& e : events) {
        if (e.time_h < 0.0) throw ConfigError("bucket: negative event time");
        const int h = static_cast<int>(std::floor(e.time_h));
        if (h >= total) continue;
        sum(h, e.feature) += e.value;
        cnt(h, e.feature) += 1.0;
    }
    BucketedSeries out;
    out.input_values = Matrix::Zero(n_in, n_features);
    out.input_mask = Matrix::Zero(n_in, n_features);
    out.target_values = Matrix::Zero(n_h, n_features);
    out.target_mask = Matrix::Zero(n_h, n_features);
    for (int f = 0; f < n_features; ++f) {
        double carry = 0.0;
        bool seen = false;
        for (int h = 0; h < n_in; ++h) {
            if (cnt(h, f) > 0) {
                carry = sum(h, f) / cnt(h, f);
                seen = true;
                out.input_mask(h, f) = 1.0;
            }
            out.input_values(h, f) = seen ? carry : 0.0;
        }
        for (int j = 0; j < n_h; ++j) {
            const int h = n_in + j;
            if (cnt(h, f) > 0) {
                out.target_values(j, f) = sum(h, f) / cnt(h, f);
                out.target_mask(j, f) = 1.0;
            }
        }
    }
    return out;
}

std::map<std::string, Label> make_labels(const std::vector<PatientRecord>& records,
                                         const TaskCriterion& criterion,
                                         const WindowSpec& ws) {
    ws.validate();
    std::map<std::string, Label> out;
    for (const PatientRecord& rec : records) {
        Label lab;
        if (rec.length_h < ws.observe_hours) {
            lab = Label::Excluded;
        } else {
            bool before = false, inside = false;
            for (const Event& e : rec.events) {
                if (e.feature != criterion.feature || e.value < criterion.threshold)
                    continue;
                if (e.time_h < ws.prediction_time()) {
                    before = true;
                    break;
                }
                if (e.time_h >= ws.label_start() && e.time_h < ws.label_end())
                    inside = true;
            }
            lab = before ? Label::Excluded
                         : (inside ? Label::Positive : Label::Negative);
        }
        out[rec.id] = lab;
    }
    return out;
}

PreparedCohort preprocess(const Cohort& cohort, int n_features, const WindowSpec& ws) {
    ws.validate();
    std::vector<Event> all;
    for (const PatientRecord& r : cohort.records)
        all.insert(all.end(), r.events.begin(), r.events.end());

    FeatureStats stats = raw_stats(all, n_features);
    std::vector<Event> kept = remove_outliers(all, stats, &stats.dropped);
    moments_after_removal(kept, stats);

    PreparedCohort pc;
    pc.stats = stats;
    pc.n_features = n_features;
    pc.window = ws;
    for (int f = 0; f < n_features; ++f) {
        if (stats.counts[static_cast<size_t>(f)] == 0)
            pc.report.empty_features.push_back(f);
        else if (!stats.filtered[static_cast<size_t>(f)])
            pc.report.skipped_features.push_back(f);
        pc.report.total_dropped_outliers += stats.dropped[static_cast<size_t>(f)];
    }

    pc.patients.reserve(cohort.records.size());
    for (const PatientRecord& r : cohort.records) {
        std::vector<Event> ev = remove_outliers(r.events, stats);
        ev = zscore(ev, stats);
        PreparedPatient pp;
        pp.id = r.id;
        pp.series = bucket_and_impute(ev, n_features, ws);
        pp.labels = r.labels;
        pc.patients.push_back(std::move(pp));
    }
    return pc;
}

SeqBatch PreparedCohort::make_batch(const std::vector<int>& patient_idx,
                                    bool with_targets, const std::string& task) const {
    if (patient_idx.empty()) throw ConfigError("make_batch: empty batch");
    const Index B = static_cast<Index>(patient_idx.size());
    const Index n_in = patients[0].series.input_values.rows();
    const Index n_h = patients[0].series.target_values.rows();
    const Index T = with_targets ? n_in + n_h : n_in;
    const Index F = n_features;

    SeqBatch batch;
    batch.values = Tensor::zeros({B, T, F});
    batch.mask = Tensor::zeros({B, T, F});
    batch.obs_len = n_in;
    if (!task.empty()) batch.labels.resize(B);
    for (Index b = 0; b < B; ++b) {
        const PreparedPatient& pp = patients[static_cast<size_t>(patient_idx[b])];
        for (Index h = 0; h < n_in; ++h)
            for (Index f = 0; f < F; ++f) {
                batch.values.at3(b, h, f) = pp.series.input_values(h, f);
                batch.mask.at3(b, h, f) = pp.series.input_mask(h, f);
            }
        if (with_targets)
            for (Index j = 0; j < n_h; ++j)
                for (Index f = 0; f < F; ++f) {
                    batch.values.at3(b, n_in + j, f) = pp.series.target_values(j, f);
                    batch.mask.at3(b, n_in + j, f) = pp.series.target_mask(j, f);
                }
        if (!task.empty()) {
            auto it = pp.labels.find(task);
            if (it == pp.labels.end())
                throw ConfigError("make_batch: patient lacks task label " + task);
            if (it->second == Label::Excluded)
                throw ConfigError("make_batch: excluded patient in labeled batch");
            batch.labels[b] = it->second == Label::Positive ? 1.0 : 0.0;
        }
    }
    batch.validate();
    return batch;
}

// ---- CSV --------------------------------------------------------------------

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

double parse_double(const std::string& s, const std::string& file, long line_no,
                    const char* field) {
    try {
        size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ConfigError(file + ":" + std::to_string(line_no) +
                          ": invalid numeric value for " + field + ": '" + s + "'");
    }
}

long parse_int(const std::string& s, const std::string& file, long line_no,
               const char* field) {
    try {
        size_t pos = 0;
        long v = std::stol(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ConfigError(file + ":" + std::to_string(line_no) +
                          ": invalid integer for " + field + ": '" + s + "'");
    }
}

} // namespace

Cohort ingest_csv(const std::string& events_path, const std::string& labels_path) {
    std::ifstream ev(events_path);
    if (!ev) throw ConfigError("cannot open events file: " + events_path);
    std::string line;
    long line_no = 0;
    std::map<std::string, PatientRecord> by_id;

    if (!std::getline(ev, line))
        throw ConfigError(events_path + ": empty file");
    ++line_no;
    if (split_csv_line(line) !=
        std::vector<std::string>{"patient_id", "time_hours", "feature_id", "value"})
        throw ConfigError(events_path + ":1: bad header, expected "
                          "patient_id,time_hours,feature_id,value");
    while (std::getline(ev, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto cells = split_csv_line(line);
        if (cells.size() != 4)
            throw ConfigError(events_path + ":" + std::to_string(line_no) +
                              ": expected 4 fields, got " + std::to_string(cells.size()));
        Event e;
        e.time_h = parse_double(cells[1], events_path, line_no, "time_hours");
        e.feature = static_cast<int>(parse_int(cells[2], events_path, line_no, "feature_id"));
        e.value = parse_double(cells[3], events_path, line_no, "value");
        if (e.time_h < 0)
            throw ConfigError(events_path + ":" + std::to_string(line_no) +
                              ": negative time_hours");
        PatientRecord& rec = by_id[cells[0]];
        rec.id = cells[0];
        rec.events.push_back(e);
        rec.length_h = std::max(rec.length_h, e.time_h);
    }

    std::ifstream lf(labels_path);
    if (!lf) throw ConfigError("cannot open labels file: " + labels_path);
    line_no = 0;
    if (!std::getline(lf, line))
        throw ConfigError(labels_path + ": empty file");
    ++line_no;
    if (split_csv_line(line) != std::vector<std::string>{"patient_id", "task", "label"})
        throw ConfigError(labels_path + ":1: bad header, expected patient_id,task,label");
    while (std::getline(lf, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto cells = split_csv_line(line);
        if (cells.size() != 3)
            throw ConfigError(labels_path + ":" + std::to_string(line_no) +
                              ": expected 3 fields");
        Label lab;
        if (cells[2] == "0") lab = Label::Negative;
        else if (cells[2] == "1") lab = Label::Positive;
        else if (cells[2] == "excluded") lab = Label::Excluded;
        else
            throw ConfigError(labels_path + ":" + std::to_string(line_no) +
                              ": label must be 0, 1 or excluded");
        auto it = by_id.find(cells[0]);
        if (it == by_id.end())
            throw ConfigError(labels_path + ":" + std::to_string(line_no) +
                              ": unknown patient id " + cells[0]);
        it->second.labels[cells[1]] = lab;
    }

    Cohort cohort;
    cohort.records.reserve(by_id.size());
    for (auto& [id, rec] : by_id) {
        std::sort(rec.events.begin(), rec.events.end(),
                  [](const Event& a, const Event& b) {
                      return a.time_h != b.time_h ? a.time_h < b.time_h
                                                  : a.feature < b.feature;
                  });
        cohort.records.push_back(std::move(rec));
    }
    return cohort;
}

void write_cohort_csv(const Cohort& cohort, const std::string& events_path,
                      const std::string& labels_path) {
    std::ofstream ev(events_path);
    if (!ev) throw ConfigError("cannot open for write: " + events_path);
    ev << "patient_id,time_hours,feature_id,value\n";
    char buf[64];
    for (const PatientRecord& rec : cohort.records)
        for (const Event& e : rec.events) {
            std::snprintf(buf, sizeof(buf), "%.17g,%d,%.17g", e.time_h, e.feature,
                          e.value);
            ev << rec.id << ',' << buf << '\n';
        }
    std::ofstream lf(labels_path);
    if (!lf) throw ConfigError("cannot open for write: " + labels_path);
    lf << "patient_id,task,label\n";
    for (const PatientRecord& rec : cohort.records)
        for (const auto& [task, lab] : rec.labels) {
            lf << rec.id << ',' << task << ',';
            switch (lab) {
                case Label::Negative: lf << '0'; break;
                case Label::Positive: lf << '1'; break;
                case Label::Excluded: lf << "excluded"; break;
            }
            lf << '\n';
        }
}

} // namespace autoselect
