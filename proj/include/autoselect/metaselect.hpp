#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "autoselect/autodiff.hpp"
#include "autoselect/tensor.hpp"

namespace autoselect {

/// Point on the probability simplex over auxiliary tasks, parameterized
/// by unconstrained logits through a softmax. Updates happen in logit
/// space, so the simplex constraint holds exactly after every step.
class TaskWeights {
public:
    static TaskWeights uniform(Index n_tasks);
    static TaskWeights from_logits(Vector logits);

    const Vector& logits() const { return logits_; }
    const Vector& weights() const { return weights_; }
    Index size() const { return logits_.size(); }

    /// logits -= eps * (J_softmax^T g); weights rederived. The reciprocal
    /// in the first-order factors makes raw step sizes heavy-tailed (a
    /// single outer step can saturate the softmax), so steps larger than
    /// `max_step` in the infinity norm are rescaled onto that radius;
    /// rescaling preserves direction, component ties and exact zeros.
    /// max_step <= 0 disables the trust region.
    void apply_update(const Vector& logit_gradient, double eps,
                      double max_step = kDefaultMaxStep);

    static constexpr double kDefaultMaxStep = 1.0;

    /// Chain rule through the softmax: maps an ambient d(loss)/d(weights)
    /// vector to d(loss)/d(logits) = w.(g - w.g).
    Vector to_logit_space(const Vector& weight_gradient) const;

private:
    explicit TaskWeights(Vector logits);
    Vector logits_;
    Vector weights_;
};

Vector softmax(const Vector& logits);

enum class HypergradMethod { FirstOrder, Exact, FiniteDifference };

/// Reading of the first-order product c.(1/a).b. Contracted collapses
/// c/a to one scalar; PerCoordinate keeps the per-parameter reciprocal
/// and contracts against per-task gradients of the pretraining loss.
enum class FirstOrderReading { Contracted, PerCoordinate };

struct HyperGradient {
    Vector lambda_grad;  // d val-loss / d weights (ambient)
    Vector logit_grad;   // after softmax chain rule; what updates consume
    HypergradMethod method = HypergradMethod::FirstOrder;
    double norm_a = 0.0, norm_b = 0.0, norm_c = 0.0;
    bool degenerate = false;  // >50% of |a| below 1e-12
};

/// First-order hyper-gradient from the three factors of the chain rule:
/// a = d lp/d enc at the end of pretraining, b = d lp/d lambda,
/// c = d val-loss/d enc after finetuning. Contracted reading:
///   s = sum_j c_j / (a_j + sign(a_j)*1e-8),  g = s * b.
/// PerCoordinate reading replaces s*b with (c/a)^T G where column f of G
/// is the encoder gradient of task f's loss (supply `per_task_grads`).
HyperGradient first_order_hypergrad(const Vector& a, const Vector& b,
                                    const Vector& c, const TaskWeights& lambda,
                                    FirstOrderReading reading = FirstOrderReading::Contracted,
                                    const Matrix* per_task_grads = nullptr);

/// Inner training problem small enough to trace exactly. Parameter
/// blocks are flat tensors; decoder and classifier blocks may be empty.
/// Loss builders receive the block input nodes plus (for pretraining)
/// the lambda node; the step index selects a frozen batch.
class InnerProblem {
public:
    virtual ~InnerProblem() = default;
    virtual std::vector<Tensor> encoder_init() const = 0;
    virtual std::vector<Tensor> decoder_init() const { return {}; }
    virtual std::vector<Tensor> classifier_init() const { return {}; }
    virtual int pretrain_steps() const = 0;
    virtual int finetune_steps() const = 0;
    virtual double lr_pretrain() const = 0;
    virtual double lr_finetune() const = 0;
    virtual NodeId pretrain_loss(Tape& t, std::span<const NodeId> enc,
                                 std::span<const NodeId> dec, NodeId lambda,
                                 int step) const = 0;
    virtual NodeId finetune_loss(Tape& t, std::span<const NodeId> enc,
                                 std::span<const NodeId> cls, int step) const = 0;
    virtual NodeId val_loss(Tape& t, std::span<const NodeId> enc,
                            std::span<const NodeId> cls) const = 0;
};

struct InnerTrace {
    std::vector<std::vector<Tensor>> enc;  // iterates 0 .. N_P+N_S
    std::vector<std::vector<Tensor>> dec;  // iterates 0 .. N_P
    std::vector<std::vector<Tensor>> cls;  // iterates 0 .. N_S (from re-init)
    double val_loss = 0.0;
};

/// Plain-SGD unroll of the inner problem at fixed lambda weights.
InnerTrace unroll_inner(const InnerProblem& prob, const Vector& lambda_weights);

/// Exact reverse-mode hyper-gradient over the traced iterates: the
/// validation gradient seeds a multiplier that is pulled back through
/// the finetuning steps, handed across the pretrain/finetune boundary,
/// then pulled back through the pretraining steps while accumulating the
/// lambda gradient. Curvature terms are applied as Hessian-vector
/// products (finite differences of exact gradients); decoder curvature
/// is not propagated. Refuses problems above the trace budget
/// (2000 parameters or 10 total steps).
HyperGradient exact_hypergrad(const InnerProblem& prob, const TaskWeights& lambda);

/// Central-difference hyper-gradient through the whole unrolled training:
/// logit_grad from logit-space perturbations (stays on the simplex),
/// lambda_grad from ambient weight perturbations. Both use step h.
HyperGradient fd_hypergrad(const InnerProblem& prob, const TaskWeights& lambda,
                           double h = 1e-4);

constexpr int kExactTraceMaxParams = 2000;
constexpr int kExactTraceMaxSteps = 10;

/// Pretrain/finetune loop sizes and learning rates. `(N_P / K)` follows
/// the convention that finetune steps default to N_P/10, so
/// K*(N_P+N_S) tracks the total step budget.
struct LoopSchedule {
    int pretrain_steps = 100;   // N_P per outer iteration
    int finetune_steps = 10;    // N_S per outer iteration
    int outer_steps = 50;       // K
    double lr_pretrain = 0.005;
    double lr_supervised = 0.001;
    double lr_lambda = 0.01;
    double lambda_max_step = TaskWeights::kDefaultMaxStep;
    int final_finetune_epochs = 5;

    int budget() const { return outer_steps * (pretrain_steps + finetune_steps); }
    void validate() const;
};

} // namespace autoselect
