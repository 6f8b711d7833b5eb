#include "autoselect/baselines.hpp"

#include <algorithm>
#include <numeric>

#include "autoselect/errors.hpp"
#include "autoselect/evalkit.hpp"
#include "autoselect/rng.hpp"

namespace autoselect {

void ArmSpec::validate(Index n_tasks) const {
    if ((kind == ArmKind::PretrainTop || kind == ArmKind::PretrainDown) &&
        (top_k < 1 || top_k > n_tasks))
        throw ConfigError("arm: top_k out of range");
    if (kind == ArmKind::Transfer && source_task.empty())
        throw ConfigError("arm: transfer needs a source task");
}

ArmKind arm_kind_from_name(const std::string& name) {
    if (name == "supervised") return ArmKind::Supervised;
    if (name == "pretrain_all") return ArmKind::PretrainAll;
    if (name == "cotrain") return ArmKind::CoTrain;
    if (name == "autoselect") return ArmKind::AutoSelect;
    if (name == "pretrain_top") return ArmKind::PretrainTop;
    if (name == "pretrain_down") return ArmKind::PretrainDown;
    if (name == "transfer") return ArmKind::Transfer;
    throw ConfigError("unknown arm: " + name);
}

const char* arm_name(ArmKind kind) {
    switch (kind) {
        case ArmKind::Supervised: return "supervised";
        case ArmKind::PretrainAll: return "pretrain_all";
        case ArmKind::CoTrain: return "cotrain";
        case ArmKind::AutoSelect: return "autoselect";
        case ArmKind::PretrainTop: return "pretrain_top";
        case ArmKind::PretrainDown: return "pretrain_down";
        case ArmKind::Transfer: return "transfer";
    }
    return "?";
}

std::vector<int> rank_tasks(const Vector& lambda, int k) {
    std::vector<int> idx(static_cast<size_t>(lambda.size()));
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
        if (lambda[a] != lambda[b]) return lambda[a] > lambda[b];
        return a < b;
    });
    idx.resize(static_cast<size_t>(std::min<Index>(k, lambda.size())));
    return idx;
}

ArmResult run_supervised(const RunContext& ctx) {
    ctx.validate();
    DataSlices slices = make_slices(ctx);
    const Index F = static_cast<Index>(ctx.cohort->n_features);

    ArmResult res;
    res.arm = arm_name(ArmKind::Supervised);
    ModelParams model = init_model(F, ctx.hidden, ctx.seed, ctx.pairs);
    ModelParams best = model;
    double best_auc = -1.0;
    int checks_since_best = 0;
    long steps = 0;
    const int max_steps = ctx.sched.budget();

    try {
        BatchFn sup = supervised_sampler(ctx, slices);
        while (steps < max_steps) {
            const double loss =
                supervised_step(model, sup(static_cast<int>(steps)),
                                ctx.sched.lr_supervised);
            if (!(loss < ctx.divergence_limit))
                throw NumericError("supervised divergence at step " +
                                   std::to_string(steps));
            ++steps;
            if (steps % ctx.eval_every == 0) {
                EvalMetrics m = evaluate(model, *ctx.cohort, slices.stop_val, ctx.task);
                res.dynamics.push_back({steps, "stop_val", "auc_roc", m.auc_roc});
                if (m.auc_roc > best_auc) {
                    best_auc = m.auc_roc;
                    best = model;
                    checks_since_best = 0;
                } else if (++checks_since_best >= ctx.patience) {
                    break;
                }
            }
        }
        if (best_auc >= 0.0) model = best;
        EvalMetrics tm = evaluate(model, *ctx.cohort, slices.test, ctx.task);
        res.auc_roc = tm.auc_roc;
        res.auc_pr = tm.auc_pr;
        res.dynamics.push_back({steps, "test", "auc_roc", tm.auc_roc});
    } catch (const NumericError& err) {
        res.aborted = true;
        res.abort_reason = err.what();
    }
    res.model = model;
    res.lambda_weights = Vector::Constant(F, 1.0 / static_cast<double>(F));
    res.total_steps = steps;
    return res;
}

ArmResult run_pretrain_all(const RunContext& ctx) {
    const Index F = static_cast<Index>(ctx.cohort->n_features);
    Vector uniform = Vector::Constant(F, 1.0 / static_cast<double>(F));
    return meta_train(ctx, WeightPolicy::Fixed, uniform,
                      arm_name(ArmKind::PretrainAll));
}

ArmResult run_autoselect(const RunContext& ctx) {
    const Index F = static_cast<Index>(ctx.cohort->n_features);
    Vector uniform = Vector::Constant(F, 1.0 / static_cast<double>(F));
    return meta_train(ctx, WeightPolicy::Learned, uniform,
                      arm_name(ArmKind::AutoSelect));
}

ArmResult run_cotrain(const RunContext& ctx, double target_weight,
                      double aux_weight) {
    ctx.validate();
    DataSlices slices = make_slices(ctx);
    const Index F = static_cast<Index>(ctx.cohort->n_features);
    Vector uniform = Vector::Constant(F, 1.0 / static_cast<double>(F));

    ArmResult res;
    res.arm = arm_name(ArmKind::CoTrain);
    ModelParams model = init_model(F, ctx.hidden, ctx.seed, ctx.pairs);
    long steps = 0;
    try {
        BatchFn sup = supervised_sampler(ctx, slices);
        BatchFn pre = pretrain_sampler(ctx, slices);
        const int budget = ctx.sched.budget();
        for (int i = 0; i < budget; ++i) {
            const double loss =
                cotrain_step(model, sup(i), pre(i), uniform, target_weight,
                             aux_weight, ctx.sched.lr_supervised);
            if (!(loss < ctx.divergence_limit))
                throw NumericError("cotrain divergence at step " + std::to_string(i));
            ++steps;
            if ((i + 1) % ctx.eval_every == 0) {
                EvalMetrics m = evaluate(model, *ctx.cohort, slices.stop_val, ctx.task);
                res.dynamics.push_back({steps, "stop_val", "auc_roc", m.auc_roc});
            }
        }
        // finetune on the primary task only; head kept from co-training
        steps += final_finetune(model, ctx, slices, &res.dynamics, steps);
        EvalMetrics tm = evaluate(model, *ctx.cohort, slices.test, ctx.task);
        res.auc_roc = tm.auc_roc;
        res.auc_pr = tm.auc_pr;
    } catch (const NumericError& err) {
        res.aborted = true;
        res.abort_reason = err.what();
    }
    res.model = model;
    res.lambda_weights = uniform;
    res.total_steps = steps;
    return res;
}

ArmResult run_ablation(const RunContext& ctx, const Vector& learned_lambda,
                       bool top, int k) {
    const Index F = static_cast<Index>(ctx.cohort->n_features);
    if (learned_lambda.size() != F)
        throw ConfigError("ablation: weight vector size mismatch");
    if (k < 1 || k > F) throw ConfigError("ablation: k out of range");
    std::vector<int> ranked = rank_tasks(learned_lambda, static_cast<int>(F));
    std::vector<int> chosen;
    if (top) {
        chosen.assign(ranked.begin(), ranked.begin() + k);
    } else {
        if (k >= F) throw ConfigError("ablation: complement of top-k is empty");
        chosen.assign(ranked.begin() + k, ranked.end());
    }
    Vector weights = Vector::Zero(F);
    for (int f : chosen) weights[f] = 1.0 / static_cast<double>(chosen.size());
    return meta_train(ctx, WeightPolicy::Fixed, weights,
                      arm_name(top ? ArmKind::PretrainTop : ArmKind::PretrainDown));
}

ArmResult run_transfer(const RunContext& target_ctx, const ModelParams& source_model,
                       const Vector& source_lambda) {
    target_ctx.validate();
    if (source_model.n_features() !=
        static_cast<Index>(target_ctx.cohort->n_features))
        throw ConfigError("transfer: feature dimension mismatch with source model");
    DataSlices slices = make_slices(target_ctx);

    ArmResult res;
    res.arm = arm_name(ArmKind::Transfer);
    ModelParams model = source_model;
    long steps = 0;
    try {
        steps = final_finetune(model, target_ctx, slices, &res.dynamics, 0);
        EvalMetrics tm = evaluate(model, *target_ctx.cohort, slices.test,
                                  target_ctx.task);
        res.auc_roc = tm.auc_roc;
        res.auc_pr = tm.auc_pr;
    } catch (const NumericError& err) {
        res.aborted = true;
        res.abort_reason = err.what();
    }
    res.model = model;
    res.lambda_weights = source_lambda;
    res.total_steps = steps;
    return res;
}

} // namespace autoselect
