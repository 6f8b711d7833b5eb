#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "autoselect/metaselect.hpp"
#include "autoselect/seqmodel.hpp"

namespace autoselect {

/// Quadratic inner problem with optional empty decoder/classifier blocks:
///   pretrain loss  = sum_f lambda_f * ||A_f theta - y_f||^2
///   finetune loss  = 0.5 ||C theta - z||^2
///   val loss       = 0.5 ||V theta - u||^2
/// All couplings the exact reverse recursion drops (decoder and classifier
/// curvature) are absent here, so it must agree with the unrolled truth.
class QuadraticProblem : public InnerProblem {
public:
    QuadraticProblem(int dim, int n_tasks, int n_pretrain, int n_finetune,
                     double lr_p, double lr_c, uint64_t seed,
                     bool duplicate_last_task = false);

    std::vector<Tensor> encoder_init() const override;
    int pretrain_steps() const override { return n_pretrain_; }
    int finetune_steps() const override { return n_finetune_; }
    double lr_pretrain() const override { return lr_p_; }
    double lr_finetune() const override { return lr_c_; }
    NodeId pretrain_loss(Tape& t, std::span<const NodeId> enc,
                         std::span<const NodeId> dec, NodeId lambda,
                         int step) const override;
    NodeId finetune_loss(Tape& t, std::span<const NodeId> enc,
                         std::span<const NodeId> cls, int step) const override;
    NodeId val_loss(Tape& t, std::span<const NodeId> enc,
                    std::span<const NodeId> cls) const override;

    /// Hand-derived hyper-gradient for the N_P = N_S = 1 case:
    ///   g_f = -lr_p * (V th2 - u)^T V (I - lr_c C^T C) grad q_f(th0).
    Vector closed_form_hypergrad_11(const Vector& lambda_weights) const;

    const std::vector<Matrix>& task_mats() const { return a_; }

private:
    int dim_, n_tasks_, n_pretrain_, n_finetune_;
    double lr_p_, lr_c_;
    Vector theta0_;
    std::vector<Matrix> a_;
    std::vector<Vector> y_;
    Matrix c_mat_, v_mat_;
    Vector z_, u_;
};

/// The real sequence model at desk scale: tiny LSTM encoder + LSTM decoder
/// with readout, parameter-free classifier head sigma(sum(h)). The
/// classifier block is empty and pretraining takes a single step, so the
/// exact recursion drops nothing here either.
class TinySeqProblem : public InnerProblem {
public:
    TinySeqProblem(Index n_features, Index hidden, Index batch, Index obs_len,
                   Index horizon, int n_pretrain, int n_finetune, double lr_p,
                   double lr_c, uint64_t seed, bool duplicate_last_task = false);

    std::vector<Tensor> encoder_init() const override;
    std::vector<Tensor> decoder_init() const override;
    int pretrain_steps() const override { return n_pretrain_; }
    int finetune_steps() const override { return n_finetune_; }
    double lr_pretrain() const override { return lr_p_; }
    double lr_finetune() const override { return lr_c_; }
    NodeId pretrain_loss(Tape& t, std::span<const NodeId> enc,
                         std::span<const NodeId> dec, NodeId lambda,
                         int step) const override;
    NodeId finetune_loss(Tape& t, std::span<const NodeId> enc,
                         std::span<const NodeId> cls, int step) const override;
    NodeId val_loss(Tape& t, std::span<const NodeId> enc,
                    std::span<const NodeId> cls) const override;

private:
    NodeId encoder_state(Tape& t, std::span<const NodeId> enc,
                         const SeqBatch& batch) const;
    NodeId headless_bce(Tape& t, NodeId state, const Vector& labels) const;

    Index n_features_, hidden_;
    int n_pretrain_, n_finetune_;
    double lr_p_, lr_c_;
    EncoderParams enc0_;
    DecoderParams dec0_;
    SeqBatch pre_batch_, sup_batch_, val_batch_;
};

// ---- brute-force metric oracles (independent of evalkit) --------------------

double auc_roc_bruteforce(const std::vector<double>& scores,
                          const std::vector<int>& labels);
double auc_pr_bruteforce(const std::vector<double>& scores,
                         const std::vector<int>& labels);

// ---- the oracle fixture suite (cmd_check) -----------------------------------

struct FixtureResult {
    std::string name;
    double max_err = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

/// All gradient and hyper-gradient oracle fixtures. `corrupt` injects a
/// deliberate error into the first gradient comparison (test hook for the
/// failure path).
std::vector<FixtureResult> run_oracle_fixtures(bool corrupt = false);

} // namespace autoselect
