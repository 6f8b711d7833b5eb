#pragma once

#include "autoselect/trainer.hpp"

namespace autoselect {

enum class ArmKind {
    Supervised,
    PretrainAll,
    CoTrain,
    AutoSelect,
    PretrainTop,
    PretrainDown,
    Transfer,
};

struct ArmSpec {
    ArmKind kind = ArmKind::Supervised;
    std::string source_task;  // Transfer: task whose run supplies lambda/encoder
    int top_k = 20;           // PretrainTop/Down
    double cotrain_target_weight = 10.0;
    double cotrain_aux_weight = 1.0;

    void validate(Index n_tasks) const;
};

ArmKind arm_kind_from_name(const std::string& name);
const char* arm_name(ArmKind kind);

/// Direct supervised training of encoder+classifier with early stopping on
/// the stop-val AUC (checked every ctx.eval_every steps, ctx.patience
/// checks without improvement), capped at the schedule budget.
ArmResult run_supervised(const RunContext& ctx);

/// Uniform-weight pretraining for the full budget, then finetune. Shares
/// the meta_train engine; bit-identical to autoselect at lr_lambda = 0.
ArmResult run_pretrain_all(const RunContext& ctx);

/// The task-selection arm: learned weights via first-order hyper-gradients.
ArmResult run_autoselect(const RunContext& ctx);

/// Joint target+auxiliary training for the budget, then finetune on the
/// target alone. The classifier head is kept across the phase change.
ArmResult run_cotrain(const RunContext& ctx, double target_weight = 10.0,
                      double aux_weight = 1.0);

/// Restrict the task set to the top-k tasks by the given weights (or their
/// complement), re-normalize to uniform over the subset, pretrain+finetune.
/// Ties break toward the lower task index.
ArmResult run_ablation(const RunContext& ctx, const Vector& learned_lambda,
                       bool top, int k);

/// Reuse a finished run's encoder (and weights, recorded in the result) and
/// finetune on the target task only.
ArmResult run_transfer(const RunContext& target_ctx, const ModelParams& source_model,
                       const Vector& source_lambda);

/// Top-k task indices by weight, ties toward lower index.
std::vector<int> rank_tasks(const Vector& lambda, int k);

} // namespace autoselect
