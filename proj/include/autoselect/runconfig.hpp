#pragma once

#include <string>
#include <vector>

#include "autoselect/datasynth.hpp"
#include "autoselect/metaselect.hpp"

namespace autoselect {

/// Full experiment configuration. JSON on disk; unknown keys are rejected
/// so typos fail loudly. Defaults are the reference hyperparameters:
/// hidden 70, lr 0.001 supervised / 0.005 self-supervised / 0.01 weights,
/// schedule 100 pretrain + 10 finetune per outer step, 50 outer steps.
struct RunConfig {
    uint64_t seed = 1;
    std::string out = "out";
    Index hidden = 70;
    Index batch = 32;
    std::string task = "latentmean";
    int folds = 10;
    std::vector<double> fractions = {1.0};
    std::vector<std::string> arms = {"supervised"};
    LoopSchedule schedule;
    WindowSpec window{48, 8, 0, 48};

    bool cohort_is_synthetic = true;
    SynthConfig synth;
    std::string events_csv;
    std::string labels_csv;

    std::string hypergrad_reading = "contracted";  // or "per_coordinate"
    bool warm_start = true;
    bool reinit_classifier = true;
    int jobs = 1;
    int eval_every = 50;
    int patience = 10;

    int top_k = 20;
    std::string transfer_source_task;
    double cotrain_target_weight = 10.0;
    double cotrain_aux_weight = 1.0;

    void validate() const;
    std::string to_json() const;  // normalized, key-sorted, round-trip stable
    static RunConfig from_json(const std::string& text);
    static RunConfig load(const std::string& path);
    void save(const std::string& path) const;

    FirstOrderReading reading() const;
};

} // namespace autoselect
