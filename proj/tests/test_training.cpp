#include <catch_amalgamated.hpp>

#include <cstdio>

#include "orbevo/training.hpp"

using namespace orbevo;
using Catch::Approx;

namespace {

/// Small two-molecule set with short trajectories, shared across cases.
TrainingSet make_toy_set(int n_tb, int n_mols = 2, int extra_val = 0) {
    std::vector<Trajectory> trajs;
    std::vector<DeltaSeries> series;
    std::vector<SystemMatrices> systems;
    for (int i = 0; i < n_mols + extra_val; ++i) {
        const Molecule mol = generate_molecule(1, 1, 1000 + i);
        systems.push_back(build_system(mol));
        const GroundState gs = solve_ground_state(systems.back(),
                                                  default_occupied_states(mol));
        PropagationConfig cfg;
        cfg.total_time = 2.0;
        cfg.n_steps = 400;
        cfg.downsample = 40;  // 11 stored frames
        trajs.push_back(propagate(mol, systems.back(), gs, cfg));
        series.push_back(delta_transform(trajs.back(), systems.back().s));
    }
    TrainingSet set;
    set.stats = compute_norm_stats(trajs, series);
    for (int i = 0; i < n_mols + extra_val; ++i) {
        auto rec = prepare_record(trajs[i], systems[i], series[i], set.stats);
        if (i < n_mols) set.train.push_back(std::move(rec));
        else set.val.push_back(std::move(rec));
    }
    (void)n_tb;
    return set;
}

ModelConfig toy_model_cfg(ModelConfig::Variant v, int n_tb) {
    ModelConfig cfg = ModelConfig::defaults(v, n_tb);
    cfg.d_emb = 8;
    cfg.n_heads = 2;
    cfg.n_radial = 8;
    cfg.lmax_layers = {2, 2};
    cfg.attn_dropout = 0.0;
    cfg.drop_path = 0.0;
    return cfg;
}

double first_logged_loss(const TrainResult& res) {
    REQUIRE(!res.log_lines.empty());
    double loss = 0.0;
    int iter = 0;
    REQUIRE(std::sscanf(res.log_lines.front().c_str(),
                        "{\"iter\":%d,\"loss\":%lf", &iter, &loss) == 2);
    return loss;
}

}  // namespace

TEST_CASE("l2 mae loss: worked examples") {
    {
        const Molecule mol = generate_molecule(1, 0, 1);
        CMat target = CMat::Zero(1, mol.n_orbitals());
        CMat pred = target;
        pred(0, 0) = cplx(3.0, 0.0);
        pred(0, 1) = cplx(0.0, 4.0);
        CHECK(l2_mae_loss({pred}, {target}, mol.layout) == Approx(5.0));
        CHECK(l2_mae_loss({target}, {target}, mol.layout) == 0.0);
    }
    {
        const Molecule mol = generate_molecule(2, 0, 2);
        CMat target = CMat::Zero(1, mol.n_orbitals());
        CMat pred = target;
        pred(0, 0) = 1.0;
        pred(0, mol.layout.atom_offset(1)) = 3.0;
        CHECK(l2_mae_loss({pred}, {target}, mol.layout) == Approx(2.0));
    }
    CHECK_THROWS_AS(l2_mae_loss({}, {}, generate_molecule(1, 0, 1).layout),
                    OrbevoError);
}

TEST_CASE("bundle loss matches the plain per-atom formula and differentiates") {
    const int n_tb = 2;
    const auto set = make_toy_set(n_tb, 1);
    const auto& rec = set.train.front();
    const BasisLayout& layout = rec.molecule.layout;
    const Mat mask = prediction_mask(layout, n_tb);
    const int t = 3;
    const std::vector<int> states{0, 2};

    Rng rng(9);
    std::vector<ad::Tensor> preds;
    std::vector<Mat> targets;
    for (int n : states) {
        Mat p(mask.rows(), mask.cols());
        for (int i = 0; i < p.rows(); ++i)
            for (int j = 0; j < p.cols(); ++j) p(i, j) = rng.normal();
        preds.push_back(ad::Tensor::constant(p.cwiseProduct(mask)));
        targets.push_back(pack_delta_targets(rec, n, t, n_tb));
    }
    const double loss =
        bundle_l2_mae(preds, targets, mask, layout.n_atoms(), n_tb).val()(0, 0);

    // plain recomputation through the complex per-frame representation
    std::vector<CMat> pred_frames(n_tb,
                                  CMat::Zero(static_cast<int>(states.size()),
                                             rec.molecule.n_orbitals()));
    std::vector<CMat> target_frames = pred_frames;
    for (std::size_t i = 0; i < states.size(); ++i) {
        const auto rows = unpack_delta_predictions(preds[i].val(), layout, n_tb);
        for (int s = 0; s < n_tb; ++s) {
            pred_frames[s].row(static_cast<int>(i)) = rows[s].transpose();
            target_frames[s].row(static_cast<int>(i)) =
                rec.delta_norm[t + s].row(states[i]);
        }
    }
    CHECK(loss ==
          Approx(l2_mae_loss(pred_frames, target_frames, layout)).epsilon(1e-10));

    // finite-difference gradient through the loss
    ad::Tensor p0 = ad::Tensor::param(preds[0].val());
    auto loss_fn = [&]() {
        return bundle_l2_mae({ad::hadamard(p0, ad::Tensor::constant(mask)),
                              preds[1]},
                             targets, mask, layout.n_atoms(), n_tb);
    };
    ad::Tensor l = loss_fn();
    p0.grad().setZero();
    l.backward();
    const double h = 1e-6;
    for (int probe = 0; probe < 6; ++probe) {
        const int i = static_cast<int>(rng.below(p0.rows()));
        const int j = static_cast<int>(rng.below(p0.cols()));
        const double saved = p0.val()(i, j);
        p0.val()(i, j) = saved + h;
        const double fp = loss_fn().val()(0, 0);
        p0.val()(i, j) = saved - h;
        const double fm = loss_fn().val()(0, 0);
        p0.val()(i, j) = saved;
        const double fd = (fp - fm) / (2.0 * h);
        const double an = p0.grad()(i, j);
        CHECK(std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-8}) < 1e-4);
    }
}

TEST_CASE("state sampling: identity, clamping, uniformity, determinism") {
    Rng rng(11);
    bool clamped = false;
    CHECK(sample_states(5, 0, rng) == std::vector<int>{0, 1, 2, 3, 4});
    CHECK(sample_states(5, 5, rng) == std::vector<int>{0, 1, 2, 3, 4});
    CHECK(sample_states(3, 7, rng, &clamped) == std::vector<int>{0, 1, 2});
    CHECK(clamped);

    Rng a(21), b(21);
    CHECK(sample_states(10, 4, a) == sample_states(10, 4, b));

    // k = 1 of 10: each state drawn with frequency 0.1 +- 0.01 over 1e4 draws
    std::vector<int> counts(10, 0);
    Rng u(5);
    const int draws = 10000;
    for (int i = 0; i < draws; ++i) ++counts[sample_states(10, 1, u)[0]];
    double chi2 = 0.0;
    for (int c : counts) {
        CHECK(std::abs(c / static_cast<double>(draws) - 0.1) < 0.01);
        chi2 += std::pow(c - draws / 10.0, 2) / (draws / 10.0);
    }
    CHECK(chi2 < 27.9);  // chi-square(9) at the 0.1% level

    // without replacement: no duplicates
    Rng w(6);
    for (int trial = 0; trial < 50; ++trial) {
        auto s = sample_states(6, 3, w);
        CHECK(s.size() == 3);
        CHECK((s[0] < s[1] && s[1] < s[2]));
    }
}

TEST_CASE("conditioning and field windows") {
    const int n_tb = 2;
    const auto set = make_toy_set(n_tb, 1);
    const auto& rec = set.train.front();

    // t = 1: both history frames are zero
    const auto c1 = conditioning_window(rec, 1, n_tb);
    REQUIRE(c1.size() == 2);
    CHECK(c1[0].cwiseAbs().maxCoeff() == 0.0);
    CHECK(c1[1].cwiseAbs().maxCoeff() == 0.0);

    // t = 3: real frames 1 and 2
    const auto c3 = conditioning_window(rec, 3, n_tb);
    CHECK((c3[0] - rec.delta_norm[1]).cwiseAbs().maxCoeff() == 0.0);
    CHECK((c3[1] - rec.delta_norm[2]).cwiseAbs().maxCoeff() == 0.0);
    CHECK_THROWS_AS(conditioning_window(rec, rec.n_frames(), n_tb), OrbevoError);

    const Vec f1 = field_window(rec, 1, n_tb);
    REQUIRE(f1.size() == 4);
    CHECK(f1(0) == 0.0);  // pre-trajectory
    CHECK(f1(1) == rec.field_norm[0]);
    CHECK(f1(2) == rec.field_norm[1]);
    CHECK(f1(3) == rec.field_norm[2]);
}

TEST_CASE("corruption: warmup endpoints and perfect-model no-op") {
    Rng rng(13);
    std::vector<CMat> actual, pred;
    for (int k = 0; k < 2; ++k) {
        CMat a(2, 3), p(2, 3);
        for (int i = 0; i < 6; ++i) {
            a(i / 3, i % 3) = cplx(rng.normal(), rng.normal());
            p(i / 3, i % 3) = cplx(rng.normal(), rng.normal());
        }
        actual.push_back(a);
        pred.push_back(p);
    }
    const auto zero = corrupt_conditioning(actual, pred, 0.0);
    CHECK((zero[0] - actual[0]).cwiseAbs().maxCoeff() == 0.0);
    const auto full = corrupt_conditioning(actual, pred, 1.0);
    CHECK((full[1] - pred[1]).cwiseAbs().maxCoeff() < 1e-15);
    const auto noop = corrupt_conditioning(actual, actual, 0.7);
    CHECK((noop[0] - actual[0]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("noise injection: identity at zero, calibrated variance, freshness") {
    Rng rng(17);
    std::vector<CMat> cond{CMat::Zero(80, 40)};
    auto copy = cond;
    noise_inject(copy, 0.0, rng);
    CHECK((copy[0] - cond[0]).cwiseAbs().maxCoeff() == 0.0);

    const double sigma = 0.3;
    noise_inject(copy, sigma, rng);
    double sum2 = 0.0;
    for (int i = 0; i < 80; ++i)
        for (int j = 0; j < 40; ++j) sum2 += std::norm(copy[0](i, j));
    const double var = sum2 / (2.0 * 80 * 40);  // re and im components
    CHECK(var == Approx(sigma * sigma).epsilon(0.05));

    auto again = cond;
    noise_inject(again, sigma, rng);
    CHECK((again[0] - copy[0]).cwiseAbs().maxCoeff() > 1e-6);
}

TEST_CASE("push-forward corruption carries no gradient") {
    const int n_tb = 1;
    const auto set = make_toy_set(n_tb, 1);
    const auto& rec = set.train.front();
    ModelConfig cfg = toy_model_cfg(ModelConfig::Variant::WF, n_tb);
    cfg.lmax_layers = {2};
    cfg.d_emb = 4;
    cfg.n_heads = 1;
    cfg.n_radial = 4;
    OrbEvoModel model(cfg);
    const ModelContext ctx = model.make_context(rec.molecule);

    const int t = 2;  // has a preceding bundle
    std::vector<int> states{0, 1};
    const auto prev_pred = predict_bundle(model, ctx, rec,
                                          conditioning_window(rec, t - n_tb, n_tb),
                                          field_window(rec, t - n_tb, n_tb), states);
    // corrupted conditioning is plain values: the unroll that produced it is
    // outside the graph, so the training gradient is the stop-gradient one
    std::vector<CMat> full_pred(n_tb, CMat::Zero(rec.n_states(),
                                                 rec.molecule.n_orbitals()));
    for (std::size_t i = 0; i < states.size(); ++i)
        full_pred[0].row(states[i]) = prev_pred[0].row(static_cast<int>(i));
    const auto cond =
        corrupt_conditioning(conditioning_window(rec, t, n_tb), full_pred, 0.6);

    const Mat mask = prediction_mask(rec.molecule.layout, n_tb);
    auto loss_fn = [&]() {
        const auto out = forward_sample(model, ctx, rec, cond,
                                        field_window(rec, t, n_tb), states);
        std::vector<Mat> targets;
        for (int n : states) targets.push_back(pack_delta_targets(rec, n, t, n_tb));
        return bundle_l2_mae(out.delta, targets, mask, rec.molecule.n_atoms(), n_tb);
    };
    ad::Tensor loss = loss_fn();
    model.params().zero_grad();
    loss.backward();

    Rng pick(3);
    const double h = 1e-5;
    int checked = 0;
    for (auto& p : model.params().params()) {
        if (checked >= 10) break;
        const int i = static_cast<int>(pick.below(p.tensor.rows()));
        const int j = static_cast<int>(pick.below(p.tensor.cols()));
        const double saved = p.tensor.val()(i, j);
        p.tensor.val()(i, j) = saved + h;
        const double fp = loss_fn().val()(0, 0);
        p.tensor.val()(i, j) = saved - h;
        const double fm = loss_fn().val()(0, 0);
        p.tensor.val()(i, j) = saved;
        const double fd = (fp - fm) / (2.0 * h);
        const double an = p.tensor.grad()(i, j);
        INFO(p.name);
        CHECK(std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6}) < 1e-4);
        ++checked;
    }
    CHECK(checked == 10);
}

TEST_CASE("train: zero iterations, onestep equivalence, NaN abort") {
    const int n_tb = 2;
    const auto set = make_toy_set(n_tb, 2);

    // zero iterations: the checkpoint is the initialization
    {
        OrbEvoModel model(toy_model_cfg(ModelConfig::Variant::DM, n_tb));
        const auto init = snapshot_params(model.params());
        TrainConfig cfg;
        cfg.iterations = 0;
        const auto res = train(model, set, cfg);
        for (const auto& [name, val] : init)
            CHECK((res.best_params.at(name) - val).cwiseAbs().maxCoeff() == 0.0);
    }

    // pushforward probability 0 is exactly onestep training
    {
        TrainConfig a;
        a.corruption = TrainConfig::Corruption::Pushforward;
        a.pushforward_prob = 0.0;
        a.iterations = 10;
        a.batch_size = 2;
        a.seed = 77;
        TrainConfig b = a;
        b.corruption = TrainConfig::Corruption::Onestep;
        OrbEvoModel ma(toy_model_cfg(ModelConfig::Variant::DM, n_tb));
        OrbEvoModel mb(toy_model_cfg(ModelConfig::Variant::DM, n_tb));
        train(ma, set, a);
        train(mb, set, b);
        const auto pa = snapshot_params(ma.params());
        const auto pb = snapshot_params(mb.params());
        for (const auto& [name, val] : pa)
            CHECK((pb.at(name) - val).cwiseAbs().maxCoeff() == 0.0);
    }

    // a poisoned parameter aborts with a diagnostic
    {
        OrbEvoModel model(toy_model_cfg(ModelConfig::Variant::DM, n_tb));
        model.params().params().front().tensor.val()(0, 0) =
            std::numeric_limits<double>::quiet_NaN();
        TrainConfig cfg;
        cfg.iterations = 3;
        CHECK_THROWS_AS(train(model, set, cfg), OrbevoError);
    }
}

TEST_CASE("train: toy set is memorized", "[slow]") {
    const int n_tb = 2;
    const auto set = make_toy_set(n_tb, 2);
    OrbEvoModel model(toy_model_cfg(ModelConfig::Variant::DM, n_tb));
    TrainConfig cfg;
    cfg.corruption = TrainConfig::Corruption::Onestep;
    cfg.iterations = 600;
    cfg.batch_size = 4;
    cfg.lr_max = 3e-3;
    cfg.lr_warmup = 30;
    cfg.warmup_iters = 100;
    cfg.val_interval = 300;
    cfg.seed = 5;
    const auto res = train(model, set, cfg);
    const double initial = first_logged_loss(res);
    INFO("initial " << initial << " final " << res.final_train_loss);
    CHECK(res.final_train_loss < 0.1 * initial);
    CHECK(res.skipped_steps == 0);
    CHECK(std::isfinite(res.best_val));
    // the log is parseable line-delimited JSON with the expected keys
    for (const auto& line : res.log_lines) {
        CHECK(line.front() == '{');
        CHECK(line.back() == '}');
        CHECK(line.find("\"iter\":") != std::string::npos);
        CHECK(line.find("\"loss\":") != std::string::npos);
    }
}
