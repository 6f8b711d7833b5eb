#include "autoselect/runconfig.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "autoselect/baselines.hpp"
#include "autoselect/errors.hpp"

namespace autoselect {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known,
                    const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key()))
            throw ConfigError("config: unknown key '" + it.key() + "' in " + where);
}

template <typename T>
void maybe(const json& j, const char* key, T& into) {
    if (j.contains(key)) into = j.at(key).get<T>();
}

json schedule_to_json(const LoopSchedule& s) {
    return json{{"pretrain_steps", s.pretrain_steps},
                {"finetune_steps", s.finetune_steps},
                {"outer_steps", s.outer_steps},
                {"lr_pretrain", s.lr_pretrain},
                {"lr_supervised", s.lr_supervised},
                {"lr_lambda", s.lr_lambda},
                {"lambda_max_step", s.lambda_max_step},
                {"final_finetune_epochs", s.final_finetune_epochs}};
}

LoopSchedule schedule_from_json(const json& j) {
    reject_unknown(j,
                   {"pretrain_steps", "finetune_steps", "outer_steps", "lr_pretrain",
                    "lr_supervised", "lr_lambda", "lambda_max_step",
                    "final_finetune_epochs"},
                   "schedule");
    LoopSchedule s;
    maybe(j, "pretrain_steps", s.pretrain_steps);
    maybe(j, "finetune_steps", s.finetune_steps);
    maybe(j, "outer_steps", s.outer_steps);
    maybe(j, "lr_pretrain", s.lr_pretrain);
    maybe(j, "lr_supervised", s.lr_supervised);
    maybe(j, "lr_lambda", s.lr_lambda);
    maybe(j, "lambda_max_step", s.lambda_max_step);
    maybe(j, "final_finetune_epochs", s.final_finetune_epochs);
    return s;
}

json window_to_json(const WindowSpec& w) {
    return json{{"observe_hours", w.observe_hours},
                {"horizon_hours", w.horizon_hours},
                {"gap_hours", w.gap_hours},
                {"label_hours", w.label_hours}};
}

WindowSpec window_from_json(const json& j) {
    reject_unknown(j, {"observe_hours", "horizon_hours", "gap_hours", "label_hours"},
                   "window");
    WindowSpec w;
    maybe(j, "observe_hours", w.observe_hours);
    maybe(j, "horizon_hours", w.horizon_hours);
    maybe(j, "gap_hours", w.gap_hours);
    maybe(j, "label_hours", w.label_hours);
    return w;
}

json synth_to_json(const SynthConfig& s) {
    json dup = json::object();
    for (const auto& [dst, src] : s.duplicate_of) dup[std::to_string(dst)] = src;
    return json{{"n_patients", s.n_patients},
                {"n_features", s.n_features},
                {"relevant", s.relevant},
                {"relevant_alt", s.relevant_alt},
                {"seed", s.seed},
                {"obs_prob", s.obs_prob},
                {"extra_reading_prob", s.extra_reading_prob},
                {"drift_sd", s.drift_sd},
                {"latent_step_sd", s.latent_step_sd},
                {"obs_noise_sd", s.obs_noise_sd},
                {"ar_coeff", s.ar_coeff},
                {"ar_noise_sd", s.ar_noise_sd},
                {"spike_prob", s.spike_prob},
                {"spike_factor", s.spike_factor},
                {"short_record_fraction", s.short_record_fraction},
                {"duplicate_of", dup}};
}

SynthConfig synth_from_json(const json& j) {
    reject_unknown(j,
                   {"n_patients", "n_features", "relevant", "relevant_alt", "seed",
                    "obs_prob", "extra_reading_prob", "drift_sd", "latent_step_sd",
                    "obs_noise_sd", "ar_coeff", "ar_noise_sd", "spike_prob",
                    "spike_factor", "short_record_fraction", "duplicate_of"},
                   "cohort.synthetic");
    SynthConfig s;
    maybe(j, "n_patients", s.n_patients);
    maybe(j, "n_features", s.n_features);
    maybe(j, "relevant", s.relevant);
    maybe(j, "relevant_alt", s.relevant_alt);
    maybe(j, "seed", s.seed);
    maybe(j, "obs_prob", s.obs_prob);
    maybe(j, "extra_reading_prob", s.extra_reading_prob);
    maybe(j, "drift_sd", s.drift_sd);
    maybe(j, "latent_step_sd", s.latent_step_sd);
    maybe(j, "obs_noise_sd", s.obs_noise_sd);
    maybe(j, "ar_coeff", s.ar_coeff);
    maybe(j, "ar_noise_sd", s.ar_noise_sd);
    maybe(j, "spike_prob", s.spike_prob);
    maybe(j, "spike_factor", s.spike_factor);
    maybe(j, "short_record_fraction", s.short_record_fraction);
    if (j.contains("duplicate_of"))
        for (auto it = j.at("duplicate_of").begin(); it != j.at("duplicate_of").end(); ++it)
            s.duplicate_of[std::stoi(it.key())] = it.value().get<int>();
    return s;
}

} // namespace

void RunConfig::validate() const {
    if (out.empty()) throw ConfigError("config: output directory must be set");
    if (hidden < 1 || batch < 1) throw ConfigError("config: bad model sizes");
    if (folds < 1) throw ConfigError("config: folds must be >= 1");
    if (task.empty()) throw ConfigError("config: task must be set");
    if (fractions.empty()) throw ConfigError("config: need at least one fraction");
    for (double f : fractions)
        if (f <= 0.0 || f > 1.0)
            throw ConfigError("config: fractions must be in (0,1]");
    if (arms.empty()) throw ConfigError("config: need at least one arm");
    for (const auto& a : arms) arm_kind_from_name(a);  // throws on unknown
    schedule.validate();
    window.validate();
    if (cohort_is_synthetic) {
        synth.validate();
    } else if (events_csv.empty() || labels_csv.empty()) {
        throw ConfigError("config: csv cohort needs events and labels paths");
    }
    if (hypergrad_reading != "contracted" && hypergrad_reading != "per_coordinate")
        throw ConfigError("config: hypergrad_reading must be contracted or "
                          "per_coordinate");
    if (jobs < 1) throw ConfigError("config: jobs must be >= 1");
    if (eval_every < 1 || patience < 1)
        throw ConfigError("config: eval_every and patience must be >= 1");
    bool needs_transfer = false;
    for (const auto& a : arms) needs_transfer |= (a == "transfer");
    if (needs_transfer && transfer_source_task.empty())
        throw ConfigError("config: transfer arm needs transfer_source_task");
}

FirstOrderReading RunConfig::reading() const {
    return hypergrad_reading == "per_coordinate" ? FirstOrderReading::PerCoordinate
                                                 : FirstOrderReading::Contracted;
}

std::string RunConfig::to_json() const {
    json cohort;
    if (cohort_is_synthetic)
        cohort = json{{"synthetic", synth_to_json(synth)}};
    else
        cohort = json{{"csv", {{"events", events_csv}, {"labels", labels_csv}}}};
    json j{{"seed", seed},
           {"out", out},
           {"hidden", hidden},
           {"batch", batch},
           {"task", task},
           {"folds", folds},
           {"fractions", fractions},
           {"arms", arms},
           {"schedule", schedule_to_json(schedule)},
           {"window", window_to_json(window)},
           {"cohort", cohort},
           {"hypergrad_reading", hypergrad_reading},
           {"warm_start", warm_start},
           {"reinit_classifier", reinit_classifier},
           {"jobs", jobs},
           {"eval_every", eval_every},
           {"patience", patience},
           {"top_k", top_k},
           {"transfer_source_task", transfer_source_task},
           {"cotrain_target_weight", cotrain_target_weight},
           {"cotrain_aux_weight", cotrain_aux_weight}};
    return j.dump(2) + "\n";
}

RunConfig RunConfig::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    reject_unknown(j,
                   {"seed", "out", "hidden", "batch", "task", "folds", "fractions",
                    "arms", "schedule", "window", "cohort", "hypergrad_reading",
                    "warm_start", "reinit_classifier", "jobs", "eval_every",
                    "patience", "top_k", "transfer_source_task",
                    "cotrain_target_weight", "cotrain_aux_weight"},
                   "config");
    RunConfig c;
    try {
        maybe(j, "seed", c.seed);
        maybe(j, "out", c.out);
        maybe(j, "hidden", c.hidden);
        maybe(j, "batch", c.batch);
        maybe(j, "task", c.task);
        maybe(j, "folds", c.folds);
        maybe(j, "fractions", c.fractions);
        maybe(j, "arms", c.arms);
        if (j.contains("schedule")) c.schedule = schedule_from_json(j.at("schedule"));
        if (j.contains("window")) c.window = window_from_json(j.at("window"));
        if (j.contains("cohort")) {
            const json& co = j.at("cohort");
            reject_unknown(co, {"synthetic", "csv"}, "cohort");
            if (co.contains("synthetic")) {
                c.cohort_is_synthetic = true;
                c.synth = synth_from_json(co.at("synthetic"));
            } else if (co.contains("csv")) {
                c.cohort_is_synthetic = false;
                reject_unknown(co.at("csv"), {"events", "labels"}, "cohort.csv");
                maybe(co.at("csv"), "events", c.events_csv);
                maybe(co.at("csv"), "labels", c.labels_csv);
            } else {
                throw ConfigError("config: cohort needs 'synthetic' or 'csv'");
            }
        }
        maybe(j, "hypergrad_reading", c.hypergrad_reading);
        maybe(j, "warm_start", c.warm_start);
        maybe(j, "reinit_classifier", c.reinit_classifier);
        maybe(j, "jobs", c.jobs);
        maybe(j, "eval_every", c.eval_every);
        maybe(j, "patience", c.patience);
        maybe(j, "top_k", c.top_k);
        maybe(j, "transfer_source_task", c.transfer_source_task);
        maybe(j, "cotrain_target_weight", c.cotrain_target_weight);
        maybe(j, "cotrain_aux_weight", c.cotrain_aux_weight);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: bad field type: ") + e.what());
    }
    c.validate();
    return c;
}

RunConfig RunConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

void RunConfig::save(const std::string& path) const {
    std::ofstream out_file(path);
    if (!out_file) throw ConfigError("config: cannot write " + path);
    out_file << to_json();
}

} // namespace autoselect
