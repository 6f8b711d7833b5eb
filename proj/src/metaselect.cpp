#include "autoselect/metaselect.hpp"

#include <cmath>

#include "autoselect/errors.hpp"

namespace autoselect {

Vector softmax(const Vector& logits) {
    // scalar loop: Eigen's vectorized exp is not bit-identical between
    // packet and tail lanes, which would break exact task symmetries
    const double shift = logits.maxCoeff();
    Vector e(logits.size());
    double sum = 0.0;
    for (Index i = 0; i < logits.size(); ++i) {
        e[i] = std::exp(logits[i] - shift);
        sum += e[i];
    }
    for (Index i = 0; i < logits.size(); ++i) e[i] /= sum;
    return e;
}

TaskWeights::TaskWeights(Vector logits) : logits_(std::move(logits)) {
    if (logits_.size() < 1) throw ConfigError("task weights: need >= 1 task");
    if (!logits_.allFinite()) throw NumericError("task weights: non-finite logits");
    weights_ = softmax(logits_);
}

TaskWeights TaskWeights::uniform(Index n_tasks) {
    return TaskWeights(Vector::Zero(n_tasks));
}

TaskWeights TaskWeights::from_logits(Vector logits) {
    return TaskWeights(std::move(logits));
}

Vector TaskWeights::to_logit_space(const Vector& weight_gradient) const {
    if (weight_gradient.size() != logits_.size())
        throw ConfigError("task weights: gradient size mismatch");
    const double wg = weights_.dot(weight_gradient);
    return (weights_.array() * (weight_gradient.array() - wg)).matrix();
}

void TaskWeights::apply_update(const Vector& logit_gradient, double eps,
                               double max_step) {
    if (!logit_gradient.allFinite())
        throw NumericError("task weights: non-finite update");
    Vector step = eps * logit_gradient;
    if (max_step > 0.0) {
        const double norm = step.cwiseAbs().maxCoeff();
        if (norm > max_step) step *= max_step / norm;
    }
    logits_ -= step;
    weights_ = softmax(logits_);
}

void LoopSchedule::validate() const {
    if (pretrain_steps < 1 || finetune_steps < 1 || outer_steps < 1)
        throw ConfigError("schedule: loop sizes must be >= 1");
    if (lr_pretrain < 0 || lr_supervised < 0 || lr_lambda < 0)
        throw ConfigError("schedule: learning rates must be >= 0");
    if (final_finetune_epochs < 0)
        throw ConfigError("schedule: final finetune epochs must be >= 0");
}

HyperGradient first_order_hypergrad(const Vector& a, const Vector& b,
                                    const Vector& c, const TaskWeights& lambda,
                                    FirstOrderReading reading,
                                    const Matrix* per_task_grads) {
    if (a.size() != c.size())
        throw ConfigError("hypergrad: a and c must both span the encoder");
    if (b.size() != lambda.size())
        throw ConfigError("hypergrad: b must span the tasks");

    HyperGradient hg;
    hg.method = HypergradMethod::FirstOrder;
    hg.norm_a = a.norm();
    hg.norm_b = b.norm();
    hg.norm_c = c.norm();

    Index tiny = 0;
    Vector recip(a.size());
    for (Index j = 0; j < a.size(); ++j) {
        const double guard = a[j] >= 0.0 ? 1e-8 : -1e-8;  // keeps the sign of a
        recip[j] = c[j] / (a[j] + guard);
        if (std::abs(a[j]) < 1e-12) ++tiny;
    }
    hg.degenerate = 2 * tiny > a.size();

    if (reading == FirstOrderReading::Contracted) {
        hg.lambda_grad = recip.sum() * b;
    } else {
        if (!per_task_grads || per_task_grads->rows() != a.size() ||
            per_task_grads->cols() != b.size())
            throw ConfigError("hypergrad: per-coordinate reading needs per-task "
                              "encoder gradients");
        hg.lambda_grad = per_task_grads->transpose() * recip;
    }
    if (!hg.lambda_grad.allFinite())
        throw NumericError("hypergrad: non-finite first-order gradient");
    hg.logit_grad = lambda.to_logit_space(hg.lambda_grad);
    return hg;
}

namespace {

std::vector<Tensor> concat(std::vector<Tensor> a, const std::vector<Tensor>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

void sgd_step(std::vector<Tensor>& params, std::span<const Tensor> grads,
              double lr, size_t first, size_t count) {
    for (size_t k = 0; k < count; ++k) params[first + k].axpy(-lr, grads[first + k]);
}

} // namespace

InnerTrace unroll_inner(const InnerProblem& prob, const Vector& lambda_weights) {
    InnerTrace tr;
    tr.enc.push_back(prob.encoder_init());
    tr.dec.push_back(prob.decoder_init());
    tr.cls.push_back(prob.classifier_init());
    const size_t ne = tr.enc[0].size();
    const size_t nd = tr.dec[0].size();
    const size_t nc = tr.cls[0].size();

    // pretraining: (enc, dec) move together under the weighted loss
    for (int i = 0; i < prob.pretrain_steps(); ++i) {
        std::vector<Tensor> params = concat(tr.enc.back(), tr.dec.back());
        auto builder = [&](Tape& t, std::span<const NodeId> ids) {
            NodeId lam = t.input(lambda_weights, "lambda");
            return prob.pretrain_loss(t, ids.subspan(0, ne), ids.subspan(ne, nd),
                                      lam, i);
        };
        std::vector<Tensor> g = grad(builder, params);
        sgd_step(params, g, prob.lr_pretrain(), 0, ne + nd);
        tr.enc.emplace_back(params.begin(), params.begin() + static_cast<long>(ne));
        tr.dec.emplace_back(params.begin() + static_cast<long>(ne), params.end());
    }

    // finetuning: (enc, cls) move together under the supervised loss
    for (int i = 0; i < prob.finetune_steps(); ++i) {
        std::vector<Tensor> params = concat(tr.enc.back(), tr.cls.back());
        auto builder = [&](Tape& t, std::span<const NodeId> ids) {
            return prob.finetune_loss(t, ids.subspan(0, ne), ids.subspan(ne, nc), i);
        };
        std::vector<Tensor> g = grad(builder, params);
        sgd_step(params, g, prob.lr_finetune(), 0, ne + nc);
        tr.enc.emplace_back(params.begin(), params.begin() + static_cast<long>(ne));
        tr.cls.emplace_back(params.begin() + static_cast<long>(ne), params.end());
    }

    std::vector<Tensor> final_params = concat(tr.enc.back(), tr.cls.back());
    auto builder = [&](Tape& t, std::span<const NodeId> ids) {
        return prob.val_loss(t, ids.subspan(0, ne), ids.subspan(ne, nc));
    };
    tr.val_loss = eval_loss(builder, final_params);
    return tr;
}

namespace {

Index total_size(const std::vector<Tensor>& ts) {
    Index n = 0;
    for (const Tensor& t : ts) n += t.size();
    return n;
}

std::vector<Tensor> zeros_like(const std::vector<Tensor>& ts) {
    std::vector<Tensor> out;
    out.reserve(ts.size());
    for (const Tensor& t : ts) out.push_back(Tensor::zeros(t.shape()));
    return out;
}

void axpy_list(std::vector<Tensor>& y, double s, std::span<const Tensor> x,
               size_t first, size_t count) {
    for (size_t k = 0; k < count; ++k) y[k].axpy(s, x[first + k]);
}

} // namespace

HyperGradient exact_hypergrad(const InnerProblem& prob, const TaskWeights& lambda) {
    const int np = prob.pretrain_steps();
    const int ns = prob.finetune_steps();
    if (np < 1 || ns < 1)
        throw ConfigError("exact hypergrad: needs >= 1 step in each loop");

    InnerTrace tr = unroll_inner(prob, lambda.weights());
    const size_t ne = tr.enc[0].size();
    const size_t nd = tr.dec[0].size();
    const size_t nc = tr.cls[0].size();
    const Index n_params = total_size(tr.enc[0]) + total_size(tr.dec[0]) +
                           total_size(tr.cls[0]) + lambda.size();
    if (n_params > kExactTraceMaxParams || np + ns > kExactTraceMaxSteps)
        throw ConfigError("exact hypergrad: trace budget exceeded (" +
                          std::to_string(n_params) + " params, " +
                          std::to_string(np + ns) +
                          " steps); use the first-order path");

    // beta <- encoder gradient of the validation loss at the final iterate
    std::vector<Tensor> final_params = concat(tr.enc.back(), tr.cls.back());
    auto val_builder = [&](Tape& t, std::span<const NodeId> ids) {
        return prob.val_loss(t, ids.subspan(0, ne), ids.subspan(ne, nc));
    };
    std::vector<Tensor> val_grad = grad(val_builder, final_params);
    std::vector<Tensor> beta(val_grad.begin(), val_grad.begin() + static_cast<long>(ne));

    // pull beta back through the supervised steps (classifier frozen per step)
    for (int i = ns; i >= 1; --i) {
        const std::vector<Tensor>& enc_at = tr.enc[static_cast<size_t>(np + i - 1)];
        const std::vector<Tensor>& cls_at = tr.cls[static_cast<size_t>(i - 1)];
        const int step = i - 1;
        auto ft_builder = [&](Tape& t, std::span<const NodeId> ids) {
            std::vector<NodeId> cls_ids;
            cls_ids.reserve(nc);
            for (const Tensor& c : cls_at) cls_ids.push_back(t.input(c.to_matrix()));
            return prob.finetune_loss(t, ids, cls_ids, step);
        };
        std::vector<Tensor> hv = hvp(ft_builder, enc_at, beta);
        axpy_list(beta, -prob.lr_finetune(), hv, 0, ne);
    }
    // beta is now the multiplier at the end of pretraining (alpha_{N_P})

    HyperGradient hg;
    hg.method = HypergradMethod::Exact;
    double c2 = 0.0;
    for (size_t k = 0; k < ne; ++k) c2 += val_grad[k].raw().matrix().squaredNorm();
    hg.norm_c = std::sqrt(c2);

    Vector g = Vector::Zero(lambda.size());
    std::vector<Tensor> alpha = beta;
    for (int i = np; i >= 1; --i) {
        const std::vector<Tensor>& enc_at = tr.enc[static_cast<size_t>(i - 1)];
        const std::vector<Tensor>& dec_at = tr.dec[static_cast<size_t>(i - 1)];
        const int step = i - 1;
        // joint hvp over (enc, lambda); decoder frozen at its traced value
        std::vector<Tensor> joint = enc_at;
        joint.push_back(Tensor::from_vector(lambda.weights()));
        std::vector<Tensor> dir = zeros_like(joint);
        for (size_t k = 0; k < ne; ++k) dir[k] = alpha[k];
        auto pt_builder = [&](Tape& t, std::span<const NodeId> ids) {
            std::vector<NodeId> dec_ids;
            dec_ids.reserve(nd);
            for (const Tensor& dtn : dec_at) dec_ids.push_back(t.input(dtn.to_matrix()));
            return prob.pretrain_loss(t, ids.subspan(0, ne), dec_ids,
                                      ids[ne], step);
        };
        std::vector<Tensor> hv = hvp(pt_builder, joint, dir);
        g -= prob.lr_pretrain() * hv.back().to_vector();
        if (i > 1) axpy_list(alpha, -prob.lr_pretrain(), hv, 0, ne);
    }

    hg.lambda_grad = g;
    hg.logit_grad = lambda.to_logit_space(g);
    if (!hg.lambda_grad.allFinite())
        throw NumericError("exact hypergrad: non-finite result");
    return hg;
}

HyperGradient fd_hypergrad(const InnerProblem& prob, const TaskWeights& lambda,
                           double h) {
    if (h <= 0) throw ConfigError("fd hypergrad: step must be positive");
    const Index F = lambda.size();
    HyperGradient hg;
    hg.method = HypergradMethod::FiniteDifference;

    hg.logit_grad.resize(F);
    for (Index f = 0; f < F; ++f) {
        Vector lp = lambda.logits();
        lp[f] += h;
        const double up = unroll_inner(prob, softmax(lp)).val_loss;
        lp[f] -= 2 * h;
        const double dn = unroll_inner(prob, softmax(lp)).val_loss;
        hg.logit_grad[f] = (up - dn) / (2 * h);
    }

    hg.lambda_grad.resize(F);
    for (Index f = 0; f < F; ++f) {
        Vector w = lambda.weights();
        w[f] += h;
        const double up = unroll_inner(prob, w).val_loss;
        w[f] -= 2 * h;
        const double dn = unroll_inner(prob, w).val_loss;
        hg.lambda_grad[f] = (up - dn) / (2 * h);
    }
    return hg;
}

} // namespace autoselect
