#include "autoselect/trainer.hpp"

#include <algorithm>
#include <cmath>

#include "autoselect/errors.hpp"
#include "autoselect/evalkit.hpp"
#include "autoselect/rng.hpp"

namespace autoselect {

void RunContext::validate() const {
    if (!cohort) throw ConfigError("run: no cohort");
    if (task.empty()) throw ConfigError("run: no task");
    if (fold < 0 || fold >= n_folds) throw ConfigError("run: fold out of range");
    if (fraction <= 0.0 || fraction > 1.0)
        throw ConfigError("run: fraction must be in (0,1]");
    if (hidden < 1 || batch < 1) throw ConfigError("run: bad model sizes");
    sched.validate();
}

DataSlices make_slices(const RunContext& ctx) {
    ctx.validate();
    const PreparedCohort& pc = *ctx.cohort;
    DataSlices s;
    std::vector<std::pair<uint64_t, int>> labeled_train;
    for (int i = 0; i < static_cast<int>(pc.patients.size()); ++i) {
        const PreparedPatient& p = pc.patients[static_cast<size_t>(i)];
        const Role role = role_of(p.id, ctx.fold, ctx.n_folds);
        auto lab = p.labels.find(ctx.task);
        const bool labeled =
            lab != p.labels.end() && lab->second != Label::Excluded;
        switch (role) {
            case Role::Train:
                s.pretrain_pool.push_back(i);
                if (labeled) labeled_train.emplace_back(fnv1a64(p.id), i);
                break;
            case Role::Val:
                if (labeled) {
                    if (in_meta_val_half(p.id, ctx.fold, ctx.n_folds))
                        s.meta_val.push_back(i);
                    else
                        s.stop_val.push_back(i);
                }
                break;
            case Role::Test:
                if (labeled) s.test.push_back(i);
                break;
        }
    }
    std::sort(labeled_train.begin(), labeled_train.end());
    const size_t keep = std::max<size_t>(
        1, static_cast<size_t>(
               std::ceil(ctx.fraction * static_cast<double>(labeled_train.size()))));
    for (size_t k = 0; k < std::min(keep, labeled_train.size()); ++k)
        s.sup_train.push_back(labeled_train[k].second);
    if (s.sup_train.empty()) throw ConfigError("run: no labeled training patients");
    if (s.meta_val.empty() || s.stop_val.empty())
        throw ConfigError("run: empty validation split");
    if (s.test.empty()) throw ConfigError("run: empty test split");
    return s;
}

namespace {

std::vector<int> draw_indices(const std::vector<int>& pool, Index n, RngStream& st) {
    std::vector<int> out(static_cast<size_t>(n));
    for (Index k = 0; k < n; ++k)
        out[static_cast<size_t>(k)] =
            pool[st.uniform_index(static_cast<uint64_t>(pool.size()))];
    return out;
}

} // namespace

BatchFn pretrain_sampler(const RunContext& ctx, const DataSlices& slices,
                         const std::string& tag) {
    const PreparedCohort* pc = ctx.cohort;
    const std::vector<int> pool = slices.pretrain_pool;
    const uint64_t seed = ctx.seed;
    const Index B = ctx.batch;
    return [pc, pool, seed, B, tag](int step) {
        RngStream st(seed, tag, static_cast<uint64_t>(step));
        return pc->make_batch(draw_indices(pool, B, st), /*with_targets=*/true);
    };
}

BatchFn supervised_sampler(const RunContext& ctx, const DataSlices& slices,
                           const std::string& tag) {
    const PreparedCohort* pc = ctx.cohort;
    const std::vector<int> pool = slices.sup_train;
    const uint64_t seed = ctx.seed;
    const Index B = ctx.batch;
    const std::string task = ctx.task;
    return [pc, pool, seed, B, tag, task](int step) {
        RngStream st(seed, tag, static_cast<uint64_t>(step));
        return pc->make_batch(draw_indices(pool, B, st), /*with_targets=*/false, task);
    };
}

SeqBatch metaval_batch(const RunContext& ctx, const DataSlices& slices, int outer_k) {
    RngStream st(ctx.seed, "batch.metaval", static_cast<uint64_t>(outer_k));
    const Index B = std::min<Index>(ctx.batch,
                                    static_cast<Index>(slices.meta_val.size()));
    return ctx.cohort->make_batch(draw_indices(slices.meta_val, B, st),
                                  /*with_targets=*/false, ctx.task);
}

// ---- parameter plumbing -----------------------------------------------------

namespace {

struct EncGradView {
    Matrix wx, wh;
    Vector b;
};

EncGradView encoder_grads(Tape& t, const EncNodes& e) {
    return {t.grad(e.wx), t.grad(e.wh), t.grad(e.b).col(0)};
}

void apply_encoder_update(EncoderParams& p, const EncGradView& g, double lr) {
    p.cell.wx -= lr * g.wx;
    p.cell.wh -= lr * g.wh;
    p.cell.b -= lr * g.b;
}

void apply_decoder_update(DecoderParams& p, Tape& t, const DecNodes& d, double lr) {
    p.cell.wx -= lr * t.grad(d.wx);
    p.cell.wh -= lr * t.grad(d.wh);
    p.cell.b -= lr * t.grad(d.b).col(0);
    p.w_out -= lr * t.grad(d.w_out);
    p.b_out -= lr * t.grad(d.b_out).col(0);
}

void apply_classifier_update(ClassifierParams& p, Tape& t, const ClsNodes& c,
                             double lr) {
    p.w -= lr * t.grad(c.w).col(0);
    p.b -= lr * t.grad(c.b)(0, 0);
}

Vector flatten(const Matrix& wx, const Matrix& wh, const Vector& b) {
    Vector v(wx.size() + wh.size() + b.size());
    Index at = 0;
    for (Index i = 0; i < wx.rows(); ++i)
        for (Index j = 0; j < wx.cols(); ++j) v[at++] = wx(i, j);
    for (Index i = 0; i < wh.rows(); ++i)
        for (Index j = 0; j < wh.cols(); ++j) v[at++] = wh(i, j);
    v.tail(b.size()) = b;
    return v;
}

} // namespace

Vector flatten_encoder(const EncoderParams& enc) {
    return flatten(enc.cell.wx, enc.cell.wh, enc.cell.b);
}

StepResult pretrain_step(ModelParams& model, const SeqBatch& batch,
                         const Vector& lambda_weights, double lr) {
    Tape t;
    EncNodes e = push_encoder(t, model.enc);
    DecNodes d = push_decoder(t, model.dec);
    NodeId lam = t.input(lambda_weights, "lambda");
    PretrainLossNodes nodes = build_pretrain_loss(t, e, d, lam, batch);
    StepResult r;
    r.loss = t.value(nodes.loss)(0, 0);
    r.task_mse = t.value(nodes.task_mse).col(0);
    r.observed = t.observed_counts(nodes.task_mse);
    t.backward(nodes.loss);
    apply_encoder_update(model.enc, encoder_grads(t, e), lr);
    apply_decoder_update(model.dec, t, d, lr);
    return r;
}

double supervised_step(ModelParams& model, const SeqBatch& batch, double lr) {
    Tape t;
    EncNodes e = push_encoder(t, model.enc);
    ClsNodes c = push_classifier(t, model.cls);
    ClassifierLossNodes nodes = build_classifier_loss(t, e, c, batch);
    const double loss = t.value(nodes.loss)(0, 0);
    t.backward(nodes.loss);
    apply_encoder_update(model.enc, encoder_grads(t, e), lr);
    apply_classifier_update(model.cls, t, c, lr);
    return loss;
}

double cotrain_step(ModelParams& model, const SeqBatch& sup_batch,
                    const SeqBatch& pre_batch, const Vector& lambda_weights,
                    double target_w, double aux_w, double lr) {
    Tape t;
    EncNodes e = push_encoder(t, model.enc);
    DecNodes d = push_decoder(t, model.dec);
    ClsNodes c = push_classifier(t, model.cls);
    NodeId lam = t.input(lambda_weights, "lambda");
    PretrainLossNodes pre = build_pretrain_loss(t, e, d, lam, pre_batch);
    ClassifierLossNodes sup = build_classifier_loss(t, e, c, sup_batch);
    NodeId joint = t.add(t.scale(sup.loss, target_w), t.scale(pre.loss, aux_w));
    const double loss = t.value(joint)(0, 0);
    t.backward(joint);
    apply_encoder_update(model.enc, encoder_grads(t, e), lr);
    apply_decoder_update(model.dec, t, d, lr);
    apply_classifier_update(model.cls, t, c, lr);
    return loss;
}

PretrainFactors inner_pretrain(ModelParams& model, const TaskWeights& lambda,
                               int steps, double lr, const BatchFn& next_batch,
                               double divergence_limit, bool want_per_task_grads) {
    if (steps < 1) throw ConfigError("inner_pretrain: steps must be >= 1");
    SeqBatch batch;
    double last_loss = 0.0;
    for (int i = 0; i < steps; ++i) {
        batch = next_batch(i);
        StepResult r = pretrain_step(model, batch, lambda.weights(), lr);
        last_loss = r.loss;
        if (!(r.loss < divergence_limit))
            throw NumericError("inner_pretrain: loss " + std::to_string(r.loss) +
                               " exceeded divergence limit at step " +
                               std::to_string(i));
    }

    // factors at the final iterate, on the final batch
    Tape t;
    EncNodes e = push_encoder(t, model.enc);
    DecNodes d = push_decoder(t, model.dec);
    NodeId lam = t.input(lambda.weights(), "lambda");
    PretrainLossNodes nodes = build_pretrain_loss(t, e, d, lam, batch);
    t.backward(nodes.loss);

    PretrainFactors f;
    f.final_loss = t.value(nodes.loss)(0, 0);
    f.a = flatten(t.grad(e.wx), t.grad(e.wh), t.grad(e.b).col(0));
    f.b = t.value(nodes.task_mse).col(0);
    Vector observed = t.observed_counts(nodes.task_mse);
    for (Index k = 0; k < observed.size(); ++k)
        if (observed[k] == 0.0) f.silent_tasks.push_back(static_cast<int>(k));
    (void)last_loss;

    if (want_per_task_grads) {
        // one backward pass per task: gradient of that task's own MSE
        const Index F = lambda.size();
        Matrix g_all(f.a.size(), F);
        for (Index task = 0; task < F; ++task) {
            Tape tt;
            EncNodes ee = push_encoder(tt, model.enc);
            DecNodes dd = push_decoder(tt, model.dec);
            Vector pick = Vector::Zero(F);
            pick[task] = 1.0;
            NodeId lam1 = tt.input(pick, "task_pick");
            PretrainLossNodes n1 = build_pretrain_loss(tt, ee, dd, lam1, batch);
            tt.backward(n1.loss);
            g_all.col(task) =
                flatten(tt.grad(ee.wx), tt.grad(ee.wh), tt.grad(ee.b).col(0));
        }
        f.per_task_grads = std::move(g_all);
    }
    return f;
}

void inner_finetune(ModelParams& model, int steps, double lr,
                    const BatchFn& next_batch, double divergence_limit) {
    if (steps < 1) throw ConfigError("inner_finetune: steps must be >= 1");
    for (int i = 0; i < steps; ++i) {
        const double loss = supervised_step(model, next_batch(i), lr);
        if (!(loss < divergence_limit))
            throw NumericError("inner_finetune: loss " + std::to_string(loss) +
                               " exceeded divergence limit at step " +
                               std::to_string(i));
    }
}

Vector encoder_grad_of_classification(const ModelParams& model,
                                      const SeqBatch& batch, double* loss) {
    Tape t;
    EncNodes e = push_encoder(t, model.enc);
    ClsNodes c = push_classifier(t, model.cls);
    ClassifierLossNodes nodes = build_classifier_loss(t, e, c, batch);
    if (loss) *loss = t.value(nodes.loss)(0, 0);
    t.backward(nodes.loss);
    return flatten(t.grad(e.wx), t.grad(e.wh), t.grad(e.b).col(0));
}

EvalMetrics evaluate(const ModelParams& model, const PreparedCohort& cohort,
                     const std::vector<int>& patients, const std::string& task) {
    if (patients.empty()) throw ConfigError("evaluate: empty patient set");
    std::vector<double> scores;
    std::vector<int> labels;
    scores.reserve(patients.size());
    labels.reserve(patients.size());
    const size_t chunk = 256;
    for (size_t at = 0; at < patients.size(); at += chunk) {
        std::vector<int> part(patients.begin() + static_cast<long>(at),
                              patients.begin() +
                                  static_cast<long>(std::min(at + chunk,
                                                             patients.size())));
        SeqBatch b = cohort.make_batch(part, /*with_targets=*/false, task);
        Vector p = classify(model.enc, model.cls, b);
        for (Index i = 0; i < p.size(); ++i) {
            scores.push_back(p[i]);
            labels.push_back(b.labels[i] > 0.5 ? 1 : 0);
        }
    }
    EvalMetrics m;
    m.n = static_cast<int>(scores.size());
    m.auc_roc = auc_roc(scores, labels);
    m.auc_pr = auc_pr(scores, labels);
    return m;
}

double evaluate_forecast_mse(const ModelParams& model, const PreparedCohort& cohort,
                             const std::vector<int>& patients) {
    if (patients.empty()) throw ConfigError("evaluate_forecast: empty patient set");
    const Index F = static_cast<Index>(cohort.n_features);
    Vector uniform = Vector::Constant(F, 1.0 / static_cast<double>(F));
    double acc = 0.0;
    int n_chunks = 0;
    const size_t chunk = 256;
    for (size_t at = 0; at < patients.size(); at += chunk) {
        std::vector<int> part(patients.begin() + static_cast<long>(at),
                              patients.begin() +
                                  static_cast<long>(std::min(at + chunk,
                                                             patients.size())));
        SeqBatch b = cohort.make_batch(part, /*with_targets=*/true);
        Matrix s = encode(model.enc, b);
        Matrix x_last = b.step_values(b.obs_len - 1);
        std::vector<Matrix> preds = decode(model.dec, s, x_last, b.horizon());
        acc += pretrain_loss(uniform, preds, b);
        ++n_chunks;
    }
    return acc / n_chunks;
}

long final_finetune(ModelParams& model, const RunContext& ctx,
                    const DataSlices& slices, std::vector<DynRow>* dynamics,
                    long step_base) {
    model.cls = init_classifier(ctx.hidden, ctx.seed, /*reinit_index=*/1000000);
    ModelParams best = model;
    double best_auc = -1.0;
    long steps = 0;
    for (int epoch = 0; epoch < ctx.sched.final_finetune_epochs; ++epoch) {
        std::vector<int> order = slices.sup_train;
        RngStream st(ctx.seed, "final.shuffle", static_cast<uint64_t>(epoch));
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[st.uniform_index(i)]);
        for (size_t at = 0; at < order.size(); at += static_cast<size_t>(ctx.batch)) {
            std::vector<int> part(
                order.begin() + static_cast<long>(at),
                order.begin() + static_cast<long>(std::min(
                                    at + static_cast<size_t>(ctx.batch), order.size())));
            SeqBatch b = ctx.cohort->make_batch(part, false, ctx.task);
            supervised_step(model, b, ctx.sched.lr_supervised);
            ++steps;
        }
        EvalMetrics m = evaluate(model, *ctx.cohort, slices.stop_val, ctx.task);
        if (dynamics)
            dynamics->push_back({step_base + steps, "stop_val", "auc_roc", m.auc_roc});
        if (m.auc_roc > best_auc) {
            best_auc = m.auc_roc;
            best = model;
        }
    }
    if (best_auc >= 0.0) model = best;
    return steps;
}

ArmResult meta_train(const RunContext& ctx, WeightPolicy policy,
                     const Vector& initial_weights, const std::string& arm_name) {
    ctx.validate();
    DataSlices slices = make_slices(ctx);
    const Index F = static_cast<Index>(ctx.cohort->n_features);
    if (initial_weights.size() != F)
        throw ConfigError("meta_train: weight vector size mismatch");

    ArmResult res;
    res.arm = arm_name;

    ModelParams model = init_model(F, ctx.hidden, ctx.seed, ctx.pairs);
    // Learned weights move in logit space; fixed weights are used as given
    // (ablation subsets put exact zeros on excluded tasks).
    TaskWeights lambda = TaskWeights::uniform(F);
    Vector fixed_weights = initial_weights;
    if (policy == WeightPolicy::Learned) {
        // scalar log: packet/tail lanes of Eigen's vectorized log differ by
        // an ulp, which would break exact cross-arm and cross-task identities
        Vector logits(F);
        for (Index f = 0; f < F; ++f)
            logits[f] = std::log(std::max(initial_weights[f], 1e-12));
        lambda = TaskWeights::from_logits(logits);
    }
    auto current_weights = [&]() -> Vector {
        return policy == WeightPolicy::Learned ? lambda.weights() : fixed_weights;
    };

    ModelParams pretrain_snapshot = model;
    long steps_done = 0;
    try {
        for (int k = 0; k < ctx.sched.outer_steps; ++k) {
            if (!ctx.warm_start && k > 0) {
                model.enc = init_encoder(F, ctx.hidden, ctx.seed, ctx.pairs);
                model.dec = init_decoder(F, ctx.hidden, ctx.seed, ctx.pairs);
            }
            const int base = k * (ctx.sched.pretrain_steps + ctx.sched.finetune_steps);
            BatchFn pre = [&, base](int i) {
                RngStream st(ctx.seed, "batch.pretrain",
                             static_cast<uint64_t>(base + i));
                return ctx.cohort->make_batch(
                    draw_indices(slices.pretrain_pool, ctx.batch, st), true);
            };
            PretrainFactors factors;
            if (policy == WeightPolicy::Learned) {
                factors = inner_pretrain(model, lambda, ctx.sched.pretrain_steps,
                                         ctx.sched.lr_pretrain, pre,
                                         ctx.divergence_limit,
                                         ctx.reading == FirstOrderReading::PerCoordinate);
            } else {
                for (int i = 0; i < ctx.sched.pretrain_steps; ++i) {
                    StepResult r = pretrain_step(model, pre(i), fixed_weights,
                                                 ctx.sched.lr_pretrain);
                    if (!(r.loss < ctx.divergence_limit))
                        throw NumericError("pretrain divergence at outer step " +
                                           std::to_string(k));
                }
                // logged loss is evaluated at the final iterate on the final
                // batch, exactly as the learned path reports it
                Tape t;
                EncNodes e = push_encoder(t, model.enc);
                DecNodes d = push_decoder(t, model.dec);
                NodeId lam = t.input(fixed_weights, "lambda");
                PretrainLossNodes nodes = build_pretrain_loss(
                    t, e, d, lam, pre(ctx.sched.pretrain_steps - 1));
                factors.final_loss = t.value(nodes.loss)(0, 0);
            }
            steps_done += ctx.sched.pretrain_steps;
            pretrain_snapshot = model;

            if (ctx.reinit_classifier)
                model.cls = init_classifier(ctx.hidden, ctx.seed,
                                            static_cast<uint64_t>(k));
            BatchFn sup = [&, base](int i) {
                RngStream st(ctx.seed, "batch.sup", static_cast<uint64_t>(base + i));
                return ctx.cohort->make_batch(
                    draw_indices(slices.sup_train, ctx.batch, st), false, ctx.task);
            };
            inner_finetune(model, ctx.sched.finetune_steps, ctx.sched.lr_supervised,
                           sup, ctx.divergence_limit);
            steps_done += ctx.sched.finetune_steps;

            if (policy == WeightPolicy::Learned) {
                SeqBatch vb = metaval_batch(ctx, slices, k);
                Vector c = encoder_grad_of_classification(model, vb);
                const Matrix* g_tasks =
                    factors.per_task_grads ? &*factors.per_task_grads : nullptr;
                HyperGradient hg = first_order_hypergrad(
                    factors.a, factors.b, c, lambda, ctx.reading, g_tasks);
                lambda.apply_update(hg.logit_grad, ctx.sched.lr_lambda,
                                    ctx.sched.lambda_max_step);
            }

            EvalMetrics vm = evaluate(model, *ctx.cohort, slices.stop_val, ctx.task);
            TrainLogRow row;
            row.outer_step = k;
            row.pretrain_loss = factors.final_loss;
            row.val_auc = vm.auc_roc;
            row.lambda = current_weights();
            res.log.push_back(std::move(row));
            res.dynamics.push_back({steps_done, "stop_val", "auc_roc", vm.auc_roc});
            res.dynamics.push_back(
                {steps_done, "train", "pretrain_loss", factors.final_loss});
        }

        if (ctx.final_from_pretrain_snapshot) model = pretrain_snapshot;
        steps_done += final_finetune(model, ctx, slices, &res.dynamics, steps_done);

        EvalMetrics tm = evaluate(model, *ctx.cohort, slices.test, ctx.task);
        res.auc_roc = tm.auc_roc;
        res.auc_pr = tm.auc_pr;
        res.dynamics.push_back({steps_done, "test", "auc_roc", tm.auc_roc});
        res.dynamics.push_back({steps_done, "test", "auc_pr", tm.auc_pr});
    } catch (const NumericError& err) {
        res.aborted = true;
        res.abort_reason = err.what();
    }
    res.model = model;
    res.lambda_weights = current_weights();
    res.total_steps = steps_done;
    return res;
}

} // namespace autoselect
