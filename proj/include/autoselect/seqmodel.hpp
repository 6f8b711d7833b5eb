#pragma once

#include <map>
#include <span>
#include <vector>

#include "autoselect/tape.hpp"
#include "autoselect/tensor.hpp"

namespace autoselect {

/// One gated recurrent (LSTM) cell. Gate blocks along the 4d axis are
/// [input | forget | cell | output]; this layout is part of the
/// checkpoint contract.
struct LstmCellParams {
    Matrix wx;  // [input_dim, 4d]
    Matrix wh;  // [d, 4d]
    Vector b;   // [4d]
    Index hidden() const { return wh.rows(); }
    Index input_dim() const { return wx.rows(); }
};

struct EncoderParams {
    LstmCellParams cell;
};

/// Shared decoder cell plus a linear readout emitting one value per task
/// per step. The rollout is autoregressive: the first step consumes the
/// last observed input vector, later steps consume the previous forecast.
struct DecoderParams {
    LstmCellParams cell;  // input_dim == n_tasks
    Matrix w_out;         // [d, n_tasks]
    Vector b_out;         // [n_tasks]
};

/// Affine d -> 1 with a logistic link.
struct ClassifierParams {
    Vector w;  // [d]
    double b = 0.0;
};

struct ModelParams {
    EncoderParams enc;
    DecoderParams dec;
    ClassifierParams cls;
    Index hidden() const { return enc.cell.hidden(); }
    Index n_features() const { return enc.cell.input_dim(); }
};

/// When task j duplicates task i, index-keyed init streams for j replay
/// stream i so the two channels start (and stay) bit-identical.
using PairMap = std::map<int, int>;

EncoderParams init_encoder(Index n_features, Index hidden, uint64_t seed,
                           const PairMap& pairs = {});
DecoderParams init_decoder(Index n_features, Index hidden, uint64_t seed,
                           const PairMap& pairs = {});
/// `reinit_index` keys the stream so each re-initialization differs.
ClassifierParams init_classifier(Index hidden, uint64_t seed, uint64_t reinit_index = 0);
ModelParams init_model(Index n_features, Index hidden, uint64_t seed,
                       const PairMap& pairs = {});

/// A batch of bucketed, z-scored, imputed sequences. values/mask are
/// [B,T,F]; imputed cells carry mask 0. Supervised batches also carry
/// labels in {0,1}. Pretraining batches use the first obs_len steps as
/// encoder input and the remaining horizon steps as forecast targets.
struct SeqBatch {
    Tensor values;
    Tensor mask;
    Vector labels;  // empty for pretrain-only batches
    Index obs_len = 0;

    Index batch() const { return values.extent(0); }
    Index steps() const { return values.extent(1); }
    Index features() const { return values.extent(2); }
    Index horizon() const { return steps() - obs_len; }
    Matrix step_values(Index t) const;
    Matrix step_mask(Index t) const;
    void validate() const;
};

// ---- tape graph builders -------------------------------------------------

struct EncNodes { NodeId wx, wh, b; };
struct DecNodes { NodeId wx, wh, b, w_out, b_out; };
struct ClsNodes { NodeId w, b; };

EncNodes push_encoder(Tape& t, const EncoderParams& p);
DecNodes push_decoder(Tape& t, const DecoderParams& p);
ClsNodes push_classifier(Tape& t, const ClassifierParams& p);

/// Unrolls the encoder over steps [0, obs_len) and returns the final
/// hidden state node [B,d].
NodeId build_encoder(Tape& t, const EncNodes& enc, const SeqBatch& batch);

/// Autoregressive H-step rollout from state s [B,d]; returns one
/// [B,F] prediction node per step.
std::vector<NodeId> build_decoder(Tape& t, const DecNodes& dec, NodeId s,
                                  NodeId x_last, Index horizon);

struct PretrainLossNodes {
    NodeId loss;      // scalar, lambda-weighted
    NodeId task_mse;  // [F,1] per-task masked mean squared error
};

/// lambda_node: [F,1]. Targets/masks are the horizon tail of the batch.
PretrainLossNodes build_pretrain_loss(Tape& t, const EncNodes& enc,
                                      const DecNodes& dec, NodeId lambda_node,
                                      const SeqBatch& batch);

struct ClassifierLossNodes {
    NodeId loss;   // scalar
    NodeId probs;  // [B,1]
};

ClassifierLossNodes build_classifier_loss(Tape& t, const EncNodes& enc,
                                          const ClsNodes& cls,
                                          const SeqBatch& batch);

// ---- forward-only evaluation ----------------------------------------------

/// Final hidden state s_tau for the batch, [B,d].
Matrix encode(const EncoderParams& enc, const SeqBatch& batch);

/// Forecast rollout; result[t] is the [B,F] prediction for horizon step t.
std::vector<Matrix> decode(const DecoderParams& dec, const Matrix& s,
                           const Matrix& x_last, Index horizon);

/// P(y=1) per row of the batch.
Vector classify(const EncoderParams& enc, const ClassifierParams& cls,
                const SeqBatch& batch);

/// Weighted pretraining loss and its per-task decomposition, no tape.
double pretrain_loss(const Vector& lambda_weights,
                     const std::vector<Matrix>& preds, const SeqBatch& batch,
                     Vector* task_mse_out = nullptr);

/// Mean negative log-likelihood with probabilities clamped to
/// [1e-7, 1-1e-7].
double classification_loss(const Vector& probs, const Vector& labels);

} // namespace autoselect
