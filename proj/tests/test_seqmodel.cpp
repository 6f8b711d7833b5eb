#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <numbers>

#include "autoselect/autodiff.hpp"
#include "autoselect/checkpoint.hpp"
#include "autoselect/rng.hpp"
#include "autoselect/seqmodel.hpp"

using namespace autoselect;

namespace {

SeqBatch make_batch(Index B, Index T, Index obs, Index F, uint64_t seed,
                    bool labels = false, double mask_p = 1.0) {
    RngStream st(seed, "test.batch");
    SeqBatch b;
    b.values = Tensor::zeros({B, T, F});
    b.mask = Tensor::zeros({B, T, F});
    b.obs_len = obs;
    for (Index i = 0; i < B; ++i)
        for (Index t = 0; t < T; ++t)
            for (Index f = 0; f < F; ++f) {
                b.values.at3(i, t, f) = st.uniform(-1.5, 1.5);
                b.mask.at3(i, t, f) = st.uniform() < mask_p ? 1.0 : 0.0;
            }
    if (labels) {
        b.labels.resize(B);
        for (Index i = 0; i < B; ++i) b.labels[i] = st.uniform() < 0.5 ? 0.0 : 1.0;
    }
    return b;
}

EncoderParams zero_encoder(Index F, Index d) {
    EncoderParams e;
    e.cell.wx = Matrix::Zero(F, 4 * d);
    e.cell.wh = Matrix::Zero(d, 4 * d);
    e.cell.b = Vector::Zero(4 * d);
    return e;
}

} // namespace

TEST_CASE("encode: zero input and zero parameters give the zero state") {
    const Index B = 2, T = 4, F = 3, d = 5;
    SeqBatch b;
    b.values = Tensor::zeros({B, T, F});
    b.mask = Tensor::zeros({B, T, F});
    b.obs_len = T;
    Matrix s = encode(zero_encoder(F, d), b);
    CHECK(s.rows() == B);
    CHECK(s.cols() == d);
    CHECK(s.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("encode: zero-input prefix with zero recurrence matches single step") {
    const Index B = 2, F = 3, d = 4;
    EncoderParams e = init_encoder(F, d, 99);
    e.cell.wh.setZero();
    e.cell.b.setZero();

    SeqBatch one = make_batch(B, 1, 1, F, 4);
    SeqBatch padded;
    padded.values = Tensor::zeros({B, 5, F});
    padded.mask = Tensor::zeros({B, 5, F});
    padded.obs_len = 5;
    for (Index i = 0; i < B; ++i)
        for (Index f = 0; f < F; ++f)
            padded.values.at3(i, 4, f) = one.values.at3(i, 0, f);

    Matrix s1 = encode(e, one);
    Matrix s2 = encode(e, padded);
    CHECK((s1 - s2).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("encode: identical rows in a batch produce identical states") {
    const Index F = 3, d = 4;
    SeqBatch b = make_batch(1, 6, 6, F, 5);
    SeqBatch two;
    two.values = Tensor::zeros({2, 6, F});
    two.mask = Tensor::zeros({2, 6, F});
    two.obs_len = 6;
    for (Index i = 0; i < 2; ++i)
        for (Index t = 0; t < 6; ++t)
            for (Index f = 0; f < F; ++f)
                two.values.at3(i, t, f) = b.values.at3(0, t, f);
    Matrix s = encode(init_encoder(F, d, 6), two);
    CHECK((s.row(0) - s.row(1)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("decode: zero parameters give a zero forecast") {
    const Index B = 2, F = 3, d = 4;
    DecoderParams dec;
    dec.cell.wx = Matrix::Zero(F, 4 * d);
    dec.cell.wh = Matrix::Zero(d, 4 * d);
    dec.cell.b = Vector::Zero(4 * d);
    dec.w_out = Matrix::Zero(d, F);
    dec.b_out = Vector::Zero(F);
    std::vector<Matrix> preds =
        decode(dec, Matrix::Zero(B, d), Matrix::Zero(B, F), 3);
    for (const Matrix& p : preds) CHECK(p.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("decode: horizon 1 equals the first step of a longer rollout") {
    const Index B = 3, F = 4, d = 5;
    DecoderParams dec = init_decoder(F, d, 12);
    RngStream st(13, "decode.prefix");
    Matrix s(B, d), x(B, F);
    for (Index i = 0; i < B; ++i) {
        for (Index j = 0; j < d; ++j) s(i, j) = st.uniform(-1, 1);
        for (Index j = 0; j < F; ++j) x(i, j) = st.uniform(-1, 1);
    }
    std::vector<Matrix> p1 = decode(dec, s, x, 1);
    std::vector<Matrix> p3 = decode(dec, s, x, 3);
    CHECK((p1[0] - p3[0]).cwiseAbs().maxCoeff() == 0.0);
    CHECK(p3.size() == 3);
}

TEST_CASE("decode: shape contract [B=4, H=8, F=16]") {
    const Index B = 4, F = 16, d = 7, H = 8;
    DecoderParams dec = init_decoder(F, d, 21);
    std::vector<Matrix> preds =
        decode(dec, Matrix::Random(B, d), Matrix::Random(B, F), H);
    CHECK(preds.size() == 8);
    for (const Matrix& p : preds) {
        CHECK(p.rows() == B);
        CHECK(p.cols() == F);
    }
}

TEST_CASE("pretrain loss: exact forecast gives zero") {
    SeqBatch b = make_batch(3, 6, 4, 2, 31, false, 0.8);
    std::vector<Matrix> preds = {b.step_values(4), b.step_values(5)};
    Vector lw = Vector::Constant(2, 0.5);
    CHECK(pretrain_loss(lw, preds, b) == 0.0);
}

TEST_CASE("pretrain loss: unit errors over four observed cells, other task ignored") {
    const Index B = 2, F = 2, obs = 1, H = 2;
    SeqBatch b;
    b.values = Tensor::zeros({B, obs + H, F});
    b.mask = Tensor::zeros({B, obs + H, F});
    b.obs_len = obs;
    // task 0: all four horizon cells observed, prediction off by exactly 1
    for (Index i = 0; i < B; ++i)
        for (Index j = 0; j < H; ++j) b.mask.at3(i, obs + j, 0) = 1.0;
    std::vector<Matrix> preds(static_cast<size_t>(H), Matrix::Zero(B, F));
    for (auto& p : preds) {
        p.col(0).setOnes();      // error 1 on task 0
        p.col(1).setConstant(9); // task 1 is fully masked; must not matter
    }
    Vector lw(2);
    lw << 1.0, 0.0;
    Vector mse;
    CHECK(pretrain_loss(lw, preds, b, &mse) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(mse[0] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(mse[1] == 0.0);  // all-masked task contributes zero
}

TEST_CASE("pretrain loss: uniform weights equal an independent per-task loop") {
    const Index B = 3, F = 4, obs = 3, H = 3;
    SeqBatch b = make_batch(B, obs + H, obs, F, 77, false, 0.7);
    RngStream st(78, "preds");
    std::vector<Matrix> preds;
    for (Index j = 0; j < H; ++j) {
        Matrix p(B, F);
        for (Index i = 0; i < B; ++i)
            for (Index f = 0; f < F; ++f) p(i, f) = st.uniform(-1, 1);
        preds.push_back(p);
    }
    // brute-force oracle: one scalar loop per task
    double expected = 0.0;
    for (Index f = 0; f < F; ++f) {
        double num = 0.0, cnt = 0.0;
        for (Index j = 0; j < H; ++j)
            for (Index i = 0; i < B; ++i) {
                const double m = b.mask.at3(i, obs + j, f);
                const double d =
                    preds[static_cast<size_t>(j)](i, f) - b.values.at3(i, obs + j, f);
                num += m * d * d;
                cnt += m;
            }
        expected += (num / std::max(1.0, cnt)) / static_cast<double>(F);
    }
    Vector lw = Vector::Constant(F, 1.0 / static_cast<double>(F));
    CHECK(pretrain_loss(lw, preds, b) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("pretrain loss: masked target cells are exactly inert") {
    const Index B = 2, F = 3, obs = 2, H = 2;
    SeqBatch b = make_batch(B, obs + H, obs, F, 91, false, 0.5);
    EncoderParams e = init_encoder(F, 4, 91);
    DecoderParams d = init_decoder(F, 4, 91);
    Vector lw = Vector::Constant(F, 1.0 / 3.0);

    auto loss_of = [&](const SeqBatch& batch) {
        Tape t;
        EncNodes en = push_encoder(t, e);
        DecNodes dn = push_decoder(t, d);
        return t.value(build_pretrain_loss(t, en, dn, t.input(lw), batch).loss)(0, 0);
    };
    const double before = loss_of(b);
    SeqBatch perturbed = b;
    for (Index i = 0; i < B; ++i)
        for (Index j = 0; j < H; ++j)
            for (Index f = 0; f < F; ++f)
                if (perturbed.mask.at3(i, obs + j, f) == 0.0)
                    perturbed.values.at3(i, obs + j, f) += 37.5;
    CHECK(loss_of(perturbed) == before);
}

TEST_CASE("lambda gradient of the pretrain loss equals per-task mse") {
    const Index B = 2, F = 3, obs = 3, H = 2, d = 4;
    SeqBatch b = make_batch(B, obs + H, obs, F, 17, false, 0.75);
    EncoderParams e = init_encoder(F, d, 17);
    DecoderParams dp = init_decoder(F, d, 17);
    Vector lw(F);
    lw << 0.2, 0.5, 0.3;

    Tape t;
    EncNodes en = push_encoder(t, e);
    DecNodes dn = push_decoder(t, dp);
    NodeId lam = t.input(lw);
    PretrainLossNodes nodes = build_pretrain_loss(t, en, dn, lam, b);
    Vector mse = t.value(nodes.task_mse).col(0);
    t.backward(nodes.loss);
    Vector dlam = t.grad(lam).col(0);
    for (Index f = 0; f < F; ++f)
        CHECK(std::abs(dlam[f] - mse[f]) <= 1e-10 * std::max(1.0, std::abs(mse[f])));
}

TEST_CASE("renormalized scaling of the weights leaves the loss unchanged") {
    const Index F = 4;
    Vector w(F);
    w << 0.4, 0.3, 0.2, 0.1;
    Vector scaled = 7.3 * w;
    scaled /= scaled.sum();  // back on the simplex
    SeqBatch b = make_batch(2, 5, 3, F, 55, false, 0.8);
    RngStream st(56, "p");
    std::vector<Matrix> preds(2, Matrix::Zero(2, F));
    for (auto& p : preds)
        for (Index i = 0; i < p.rows(); ++i)
            for (Index j = 0; j < p.cols(); ++j) p(i, j) = st.uniform(-1, 1);
    CHECK(pretrain_loss(w, preds, b) ==
          doctest::Approx(pretrain_loss(scaled, preds, b)).epsilon(1e-12));
}

TEST_CASE("classify: zero head gives 0.5 and bias shifts are monotone") {
    const Index B = 4, F = 2, d = 3;
    SeqBatch b = make_batch(B, 5, 5, F, 61, true);
    EncoderParams e = init_encoder(F, d, 61);
    ClassifierParams c;
    c.w = Vector::Zero(d);
    c.b = 0.0;
    Vector p = classify(e, c, b);
    for (Index i = 0; i < B; ++i) CHECK(p[i] == 0.5);

    c.w = init_classifier(d, 61).w;
    Vector p0 = classify(e, c, b);
    c.b += 0.9;
    Vector p1 = classify(e, c, b);
    for (Index i = 0; i < B; ++i) CHECK(p1[i] > p0[i]);
}

TEST_CASE("classify: permuting the batch permutes the outputs") {
    const Index B = 5, F = 3, d = 4;
    SeqBatch b = make_batch(B, 4, 4, F, 62, true);
    SeqBatch rev;
    rev.values = Tensor::zeros({B, 4, F});
    rev.mask = Tensor::zeros({B, 4, F});
    rev.obs_len = 4;
    rev.labels.resize(B);
    for (Index i = 0; i < B; ++i) {
        rev.labels[i] = b.labels[B - 1 - i];
        for (Index t = 0; t < 4; ++t)
            for (Index f = 0; f < F; ++f)
                rev.values.at3(i, t, f) = b.values.at3(B - 1 - i, t, f);
    }
    EncoderParams e = init_encoder(F, d, 63);
    ClassifierParams c = init_classifier(d, 63);
    Vector p = classify(e, c, b);
    Vector pr = classify(e, c, rev);
    for (Index i = 0; i < B; ++i) CHECK(p[i] == pr[B - 1 - i]);
}

TEST_CASE("classification loss analytic values") {
    Vector half = Vector::Constant(4, 0.5);
    Vector y(4);
    y << 1, 0, 1, 0;
    CHECK(classification_loss(half, y) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));

    Vector exact(2);
    exact << 1.0, 0.0;  // clamped to 1-1e-7 / 1e-7
    Vector y2(2);
    y2 << 1, 0;
    CHECK(classification_loss(exact, y2) < 2e-7);

    Vector p(2);
    p << 0.9, 0.2;
    Vector y3(2);
    y3 << 1, 0;
    const double expect = -(std::log(0.9) + std::log(0.8)) / 2.0;
    CHECK(classification_loss(p, y3) == doctest::Approx(expect).epsilon(1e-12));
    CHECK(expect == doctest::Approx(0.16425).epsilon(1e-4));
}

TEST_CASE("loss gradients match finite differences on toy sizes") {
    // d<=8, F<=4, T<=6, B<=4
    RngStream st(101, "toy.sweep");
    double worst = 0.0;
    for (uint64_t seed = 0; seed < 5; ++seed) {
        const Index B = 2 + static_cast<Index>(st.uniform_index(3));
        const Index F = 2 + static_cast<Index>(st.uniform_index(3));
        const Index d = 3 + static_cast<Index>(st.uniform_index(6));
        const Index obs = 2 + static_cast<Index>(st.uniform_index(3));
        const Index H = 1 + static_cast<Index>(st.uniform_index(2));
        SeqBatch pre = make_batch(B, obs + H, obs, F, 200 + seed, false, 0.8);
        SeqBatch sup = make_batch(B, obs, obs, F, 300 + seed, true);
        EncoderParams e = init_encoder(F, d, 400 + seed);
        DecoderParams dc = init_decoder(F, d, 400 + seed);
        ClassifierParams cl = init_classifier(d, 400 + seed);
        Vector lw = Vector::Constant(F, 1.0 / static_cast<double>(F));

        std::vector<Tensor> pp = {
            Tensor::from_matrix(e.cell.wx),  Tensor::from_matrix(e.cell.wh),
            Tensor::from_vector(e.cell.b),   Tensor::from_matrix(dc.cell.wx),
            Tensor::from_matrix(dc.cell.wh), Tensor::from_vector(dc.cell.b),
            Tensor::from_matrix(dc.w_out),   Tensor::from_vector(dc.b_out)};
        auto lp = [&](Tape& t, std::span<const NodeId> ids) {
            EncNodes en{ids[0], ids[1], ids[2]};
            DecNodes dn{ids[3], ids[4], ids[5], ids[6], ids[7]};
            return build_pretrain_loss(t, en, dn, t.input(lw), pre).loss;
        };
        // the 1e-6 floor keeps coordinates below FD resolution out of the
        // relative comparison
        worst = std::max(worst,
                         max_rel_err(grad(lp, pp), fd_grad(lp, pp, 1e-5), 1e-6));

        std::vector<Tensor> cp = {Tensor::from_matrix(e.cell.wx),
                                  Tensor::from_matrix(e.cell.wh),
                                  Tensor::from_vector(e.cell.b),
                                  Tensor::from_vector(cl.w), Tensor::scalar(cl.b)};
        auto lc = [&](Tape& t, std::span<const NodeId> ids) {
            EncNodes en{ids[0], ids[1], ids[2]};
            ClsNodes cn{ids[3], ids[4]};
            return build_classifier_loss(t, en, cn, sup).loss;
        };
        worst = std::max(worst,
                         max_rel_err(grad(lc, cp), fd_grad(lc, cp, 1e-5), 1e-6));
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("paired init replays the source task's streams") {
    const Index F = 4, d = 3;
    PairMap pairs{{3, 1}};
    EncoderParams e = init_encoder(F, d, 5, pairs);
    DecoderParams dc = init_decoder(F, d, 5, pairs);
    CHECK(e.cell.wx.row(3) == e.cell.wx.row(1));
    CHECK(dc.cell.wx.row(3) == dc.cell.wx.row(1));
    CHECK(dc.w_out.col(3) == dc.w_out.col(1));
    EncoderParams plain = init_encoder(F, d, 5);
    CHECK(plain.cell.wx.row(3) != plain.cell.wx.row(1));
    CHECK(plain.cell.wx.row(0) == e.cell.wx.row(0));
}

TEST_CASE("checkpoint container round-trips bit-exactly") {
    ModelParams m = init_model(5, 4, 77);
    m.cls.b = 0.1234567890123456789;
    Vector logits(5);
    logits << 0.1, -0.2, 0.3, std::exp(1.0), -std::numbers::pi;
    const std::string path = "/tmp/asel_ckpt_test.bin";
    checkpoint_of(m, logits).save(path);
    Checkpoint ck = Checkpoint::load(path);
    ModelParams m2 = model_from_checkpoint(ck);
    CHECK(bitwise_equal(Tensor::from_matrix(m.enc.cell.wx),
                        Tensor::from_matrix(m2.enc.cell.wx)));
    CHECK(bitwise_equal(Tensor::from_matrix(m.dec.w_out),
                        Tensor::from_matrix(m2.dec.w_out)));
    CHECK(m2.cls.b == m.cls.b);
    CHECK(bitwise_equal(ck.get("lambda.logits"), Tensor::from_vector(logits)));
    std::remove(path.c_str());
}
