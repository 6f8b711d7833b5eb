#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "autoselect/datasynth.hpp"
#include "autoselect/metaselect.hpp"
#include "autoselect/seqmodel.hpp"

namespace autoselect {

/// Everything one training run needs: data, task, split, schedule, seeds.
struct RunContext {
    const PreparedCohort* cohort = nullptr;
    std::string task = "latentmean";
    int fold = 0;
    int n_folds = 10;
    double fraction = 1.0;
    uint64_t seed = 1;
    Index hidden = 16;
    Index batch = 32;
    LoopSchedule sched;
    bool warm_start = true;         // keep enc/dec across outer iterations
    bool reinit_classifier = true;  // fresh head each outer iteration
    bool final_from_pretrain_snapshot = true;
    FirstOrderReading reading = FirstOrderReading::Contracted;
    PairMap pairs;                  // duplicated-task init pairing
    double divergence_limit = 1e6;
    int eval_every = 50;            // supervised early-stopping cadence
    int patience = 10;              // checks without improvement

    void validate() const;
};

/// Train-log row; the CSV column order is fixed:
/// outer_step,pretrain_loss,val_auc,lambda_0..lambda_{F-1}
struct TrainLogRow {
    int outer_step = 0;
    double pretrain_loss = 0.0;
    double val_auc = 0.0;
    Vector lambda;
};

/// Training-dynamics row (`step,split,metric,value`).
struct DynRow {
    long step = 0;
    std::string split;
    std::string metric;
    double value = 0.0;
};

struct ArmResult {
    std::string arm;
    double auc_roc = 0.0;
    double auc_pr = 0.0;
    std::vector<TrainLogRow> log;
    std::vector<DynRow> dynamics;
    ModelParams model;
    Vector lambda_weights;
    long total_steps = 0;
    bool aborted = false;
    std::string abort_reason;
};

/// Split-resolved patient pools for one (fold, fraction, task).
struct DataSlices {
    std::vector<int> pretrain_pool;  // all train-role patients
    std::vector<int> sup_train;      // labeled train subset (fraction applied)
    std::vector<int> meta_val;
    std::vector<int> stop_val;
    std::vector<int> test;
};

/// The labeled-data fraction keeps the first ceil(fraction*n) patients in
/// hash order, so smaller fractions nest inside larger ones. Pretraining
/// is self-supervised and always uses the full train pool.
DataSlices make_slices(const RunContext& ctx);

using BatchFn = std::function<SeqBatch(int step)>;

/// Keyed batch samplers: stream identity depends only on (seed, tag, step),
/// so arms that skip a draw leave every other stream untouched.
BatchFn pretrain_sampler(const RunContext& ctx, const DataSlices& slices,
                         const std::string& tag = "batch.pretrain");
BatchFn supervised_sampler(const RunContext& ctx, const DataSlices& slices,
                           const std::string& tag = "batch.sup");
SeqBatch metaval_batch(const RunContext& ctx, const DataSlices& slices, int outer_k);

// ---- single SGD steps -------------------------------------------------------

struct StepResult {
    double loss = 0.0;
    Vector task_mse;       // pretrain steps only
    Vector observed;       // per-task observed target cells in the batch
};

StepResult pretrain_step(ModelParams& model, const SeqBatch& batch,
                         const Vector& lambda_weights, double lr);
double supervised_step(ModelParams& model, const SeqBatch& batch, double lr);
/// Joint step on target_w * classification + aux_w * forecast losses.
double cotrain_step(ModelParams& model, const SeqBatch& sup_batch,
                    const SeqBatch& pre_batch, const Vector& lambda_weights,
                    double target_w, double aux_w, double lr);

// ---- inner loops ------------------------------------------------------------

struct PretrainFactors {
    Vector a;               // d lp / d encoder, flattened, at the final iterate
    Vector b;               // d lp / d lambda = per-task masked MSE
    double final_loss = 0.0;
    std::optional<Matrix> per_task_grads;  // encoder gradient per task (columns)
    std::vector<int> silent_tasks;         // tasks with no observed targets
};

/// N_P plain gradient steps on the weighted forecast loss; the factors are
/// evaluated at the final iterate on the final batch. Throws ConfigError
/// for steps < 1 and NumericError past the divergence limit.
PretrainFactors inner_pretrain(ModelParams& model, const TaskWeights& lambda,
                               int steps, double lr, const BatchFn& next_batch,
                               double divergence_limit = 1e6,
                               bool want_per_task_grads = false);

/// N_S joint gradient steps on (encoder, classifier).
void inner_finetune(ModelParams& model, int steps, double lr,
                    const BatchFn& next_batch, double divergence_limit = 1e6);

/// Encoder gradient of the classification loss on one batch, flattened.
Vector encoder_grad_of_classification(const ModelParams& model,
                                      const SeqBatch& batch, double* loss = nullptr);

Vector flatten_encoder(const EncoderParams& enc);

// ---- evaluation ---------------------------------------------------------------

struct EvalMetrics {
    double auc_roc = 0.0;
    double auc_pr = 0.0;
    int n = 0;
};

EvalMetrics evaluate(const ModelParams& model, const PreparedCohort& cohort,
                     const std::vector<int>& patients, const std::string& task);

/// Mean forecast MSE (uniform weights) over a patient set.
double evaluate_forecast_mse(const ModelParams& model, const PreparedCohort& cohort,
                             const std::vector<int>& patients);

// ---- the meta loop ------------------------------------------------------------

enum class WeightPolicy {
    Learned,  // hyper-gradient updates at lr_lambda
    Fixed,    // weights stay as given (Pretrain(All)/(Top)/(Down))
};

/// K outer iterations of {pretrain; finetune; hyper-gradient; update},
/// then a final finetune-only phase from the last pretrain snapshot.
/// With WeightPolicy::Fixed the hyper-gradient machinery is skipped
/// entirely; because all random draws are stream-keyed this leaves the
/// parameter trajectory bit-identical to a Learned run at lr_lambda = 0.
ArmResult meta_train(const RunContext& ctx, WeightPolicy policy,
                     const Vector& initial_weights, const std::string& arm_name);

/// Final finetune: fresh classifier, E epochs over the supervised subset,
/// best epoch by stop-val AUC. Returns total steps taken.
long final_finetune(ModelParams& model, const RunContext& ctx,
                    const DataSlices& slices, std::vector<DynRow>* dynamics,
                    long step_base);

} // namespace autoselect
