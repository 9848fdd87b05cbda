#include <catch_amalgamated.hpp>

#include "orbevo/block_wigner.hpp"
#include "orbevo/model.hpp"

using namespace orbevo;

namespace {

Mat random_mat(Rng& rng, int r, int c, double scale = 1.0) {
    Mat m(r, c);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) m(i, j) = scale * rng.normal();
    return m;
}

/// Applies per-order Wigner rotation to a stacked (n_nodes * d_sph) x C
/// feature matrix.
Mat rotate_stack(const Mat& x, int lmax, int n_nodes, const Mat3& r) {
    const FeatureRows rows(lmax);
    const auto d = wigner_d_all(lmax, r);
    Mat out = x;
    for (int node = 0; node < n_nodes; ++node)
        for (int l = 0; l <= lmax; ++l)
            out.middleRows(node * rows.d_sph + rows.l_offset[l], 2 * l + 1) =
                d[l] *
                x.middleRows(node * rows.d_sph + rows.l_offset[l], 2 * l + 1);
    return out;
}

struct WfInputs {
    Vec c0;
    std::vector<CVec> deltas;
};

WfInputs random_inputs(Rng& rng, const BasisLayout& layout, int n_tb) {
    WfInputs in;
    in.c0 = random_mat(rng, layout.n_orbitals(), 1);
    for (int s = 0; s < n_tb; ++s) {
        CVec d(layout.n_orbitals());
        for (int o = 0; o < layout.n_orbitals(); ++o)
            d(o) = cplx(rng.normal(), rng.normal());
        in.deltas.push_back(d);
    }
    return in;
}

void zero_params_matching(ad::ParameterSet& params, const std::string& suffix) {
    for (auto& p : params.params())
        if (p.name.size() >= suffix.size() &&
            p.name.compare(p.name.size() - suffix.size(), suffix.size(), suffix) == 0)
            p.tensor.val().setZero();
}

}  // namespace

TEST_CASE("wavefunction feature packing: layout, padding, channel count") {
    const Molecule mol = generate_molecule(1, 1, 3);
    const int n_tb = 3;
    Rng rng(7);
    const WfInputs in = random_inputs(rng, mol.layout, n_tb);
    const Mat packed = pack_wavefunction_features(in.c0, in.deltas, mol.layout, n_tb);

    CHECK(packed.rows() == 2 * 9);
    CHECK(packed.cols() == 2 * (2 * n_tb + 1));  // = pack_cond_channels
    CHECK(pack_cond_channels(8) == 34);

    // hydrogen (node 1): l=2 rows fully zero; l=1 second multiplicity zero
    const FeatureRows rows(2);
    const int block = 2 * n_tb + 1;
    CHECK(packed.middleRows(rows.node_row(1, 2, 0), 5).cwiseAbs().maxCoeff() == 0.0);
    CHECK(packed.block(rows.node_row(1, 1, 0), block, 3, block).cwiseAbs().maxCoeff() ==
          0.0);
    // heavy d shell is multiplicity 0; its mu=1 columns are zero too
    CHECK(packed.block(rows.node_row(0, 2, 0), block, 5, block).cwiseAbs().maxCoeff() ==
          0.0);

    // spot-check a filled entry: heavy p0, m=-1 slot, first delta step
    const int o = mol.layout.atom_offset(0) + mol.layout.segment_offset(0, 1, 0);
    CHECK(packed(rows.node_row(0, 1, 0), 1) == in.deltas[0](o).real());
    CHECK(packed(rows.node_row(0, 1, 0), 1 + n_tb) == in.deltas[0](o).imag());
    CHECK(packed(rows.node_row(0, 1, 0), 0) == in.c0(o));

    // unpack inverts the delta part of the packing on valid slots
    Mat pred = random_mat(rng, 2 * 9, 4 * n_tb);
    const auto unpacked = unpack_delta_predictions(pred, mol.layout, n_tb);
    for (int s = 0; s < n_tb; ++s) {
        const Mat repacked = pack_wavefunction_features(
            Vec::Zero(mol.n_orbitals()), std::vector<CVec>(n_tb, unpacked[s]),
            mol.layout, n_tb);
        // compare step s of the repacked features against pred's step s
        for (int a = 0; a < 2; ++a)
            for (int mu = 0; mu < 2; ++mu)
                for (int l = 0; l <= 2; ++l)
                    for (int m = 0; m < 2 * l + 1; ++m) {
                        const int r = rows.node_row(a, l, m);
                        if (orbital_index_or_pad(mol.layout, a, l, mu, m) < 0) continue;
                        CHECK(repacked(r, mu * block + 1 + s) ==
                              pred(r, mu * 2 * n_tb + s));
                        CHECK(repacked(r, mu * block + 1 + n_tb + s) ==
                              pred(r, mu * 2 * n_tb + n_tb + s));
                    }
    }
}

TEST_CASE("packing commutes with rotations") {
    const Molecule mol = generate_molecule(2, 1, 9);
    const int n_tb = 2;
    Rng rng(17);
    const WfInputs in = random_inputs(rng, mol.layout, n_tb);
    const Mat packed = pack_wavefunction_features(in.c0, in.deltas, mol.layout, n_tb);

    const Mat3 r = rng.rotation();
    const Mat b = block_wigner(mol.layout, r);
    WfInputs rot;
    rot.c0 = b * in.c0;
    for (const CVec& d : in.deltas) rot.deltas.push_back(b.cast<cplx>() * d);
    const Mat packed_rot =
        pack_wavefunction_features(rot.c0, rot.deltas, mol.layout, n_tb);

    CHECK((packed_rot - rotate_stack(packed, 2, mol.n_atoms(), r))
              .cwiseAbs()
              .maxCoeff() < 1e-12);
}

TEST_CASE("density features: zero delta, state linearity, rotation") {
    const Molecule mol = generate_molecule(2, 1, 21);
    const int n_tb = 2;
    const int n_occ = 4;
    Rng rng(23);
    const Mat c0 = random_mat(rng, n_occ, mol.n_orbitals());
    const Vec eta = Vec::Constant(n_occ, 2.0);
    const RadiusGraph graph = build_graph(mol);
    const CGTable& table = default_cg_table();

    std::vector<CMat> zero(n_tb, CMat::Zero(n_occ, mol.n_orbitals()));
    const DensityBlocks z =
        density_matrix_features(c0, zero, eta, mol.layout, graph, table);
    for (int l3 = 0; l3 <= 4; ++l3) {
        CHECK(z.diag[l3].cwiseAbs().maxCoeff() == 0.0);
        CHECK(z.offdiag[l3].cwiseAbs().maxCoeff() == 0.0);
    }

    std::vector<CMat> deltas;
    for (int s = 0; s < n_tb; ++s) {
        CMat d(n_occ, mol.n_orbitals());
        for (int n = 0; n < n_occ; ++n)
            for (int o = 0; o < mol.n_orbitals(); ++o)
                d(n, o) = cplx(rng.normal(), rng.normal());
        deltas.push_back(d);
    }
    const DensityBlocks all =
        density_matrix_features(c0, deltas, eta, mol.layout, graph, table);

    // per-state sum equals the pre-summed computation (linearity)
    std::array<Mat, 5> diag_sum, off_sum;
    for (int l3 = 0; l3 <= 4; ++l3) {
        diag_sum[l3] = Mat::Zero(all.diag[l3].rows(), all.diag[l3].cols());
        off_sum[l3] = Mat::Zero(all.offdiag[l3].rows(), all.offdiag[l3].cols());
    }
    for (int n = 0; n < n_occ; ++n) {
        const DensityBlocks one = density_matrix_features(c0, deltas, eta, mol.layout,
                                                          graph, table, false, {n});
        for (int l3 = 0; l3 <= 4; ++l3) {
            diag_sum[l3] += one.diag[l3];
            off_sum[l3] += one.offdiag[l3];
        }
    }
    for (int l3 = 0; l3 <= 4; ++l3) {
        CHECK((diag_sum[l3] - all.diag[l3]).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((off_sum[l3] - all.offdiag[l3]).cwiseAbs().maxCoeff() < 1e-12);
    }

    // quadratic term is off by default and changes the output when enabled
    const DensityBlocks quad = density_matrix_features(c0, deltas, eta, mol.layout,
                                                       graph, table, true);
    CHECK((quad.diag[0] - all.diag[0]).cwiseAbs().maxCoeff() > 1e-8);

    // rotation equivariance per output order
    const Mat3 r = rng.rotation();
    const Molecule rot_mol = mol.rotated(r);
    const Mat b = block_wigner(mol.layout, r);
    const Mat rot_c0 = c0 * b.transpose();
    std::vector<CMat> rot_deltas;
    for (const CMat& d : deltas) rot_deltas.push_back(d * b.transpose().cast<cplx>());
    const RadiusGraph rot_graph = build_graph(rot_mol);
    REQUIRE(rot_graph.n_edges() == graph.n_edges());
    const DensityBlocks rot = density_matrix_features(rot_c0, rot_deltas, eta,
                                                      mol.layout, rot_graph, table);
    const auto dmats = wigner_d_all(4, r);
    for (int l3 = 0; l3 <= 4; ++l3) {
        Mat expect = all.diag[l3];
        for (int a = 0; a < mol.n_atoms(); ++a)
            expect.middleRows(a * (2 * l3 + 1), 2 * l3 + 1) =
                dmats[l3] * all.diag[l3].middleRows(a * (2 * l3 + 1), 2 * l3 + 1);
        CHECK((rot.diag[l3] - expect).cwiseAbs().maxCoeff() < 1e-10);
        Mat expect_off = all.offdiag[l3];
        for (int e = 0; e < graph.n_edges(); ++e)
            expect_off.middleRows(e * (2 * l3 + 1), 2 * l3 + 1) =
                dmats[l3] * all.offdiag[l3].middleRows(e * (2 * l3 + 1), 2 * l3 + 1);
        CHECK((rot.offdiag[l3] - expect_off).cwiseAbs().maxCoeff() < 1e-10);
    }
}

TEST_CASE("so2 layer norm: statistics and equivariance") {
    Rng rng(31);
    const int n_nodes = 3;
    const FeatureRows rows(1);
    const Mat x0 = random_mat(rng, n_nodes * rows.d_sph, 6);
    std::vector<ad::Tensor> s, b;
    for (int l = 0; l <= 1; ++l) {
        s.push_back(ad::Tensor::constant(Mat::Ones(1, 6)));
        b.push_back(ad::Tensor::constant(Mat::Zero(1, 6)));
    }
    ad::Tensor y = so2_layer_norm(ad::Tensor::constant(x0), 1, n_nodes, s, b);

    for (int node = 0; node < n_nodes; ++node) {
        // l = 0 rows: zero mean, unit variance over channels
        const Vec row = y.val().row(node * 4).transpose();
        CHECK(std::abs(row.mean()) < 1e-6);
        CHECK(std::abs(row.squaredNorm() / 6.0 - 1.0) < 1e-4);
        // l = 1 rows: unit RMS over (m, channel)
        const Mat blockm = y.val().middleRows(node * 4 + 1, 3);
        CHECK(std::abs(blockm.squaredNorm() / 18.0 - 1.0) < 1e-4);
    }

    // rotating the input rotates the output
    const Mat3 r = rng.rotation();
    ad::Tensor yr = so2_layer_norm(
        ad::Tensor::constant(rotate_stack(x0, 1, n_nodes, r)), 1, n_nodes, s, b);
    CHECK((yr.val() - rotate_stack(y.val(), 1, n_nodes, r)).cwiseAbs().maxCoeff() <
          1e-10);

    // a nonzero bias lands only on m = 0 slots
    std::vector<ad::Tensor> b2 = b;
    b2[1] = ad::Tensor::constant(Mat::Constant(1, 6, 0.7));
    ad::Tensor yb = so2_layer_norm(ad::Tensor::constant(x0), 1, n_nodes, s, b2);
    const Mat diff = yb.val() - y.val();
    for (int node = 0; node < n_nodes; ++node) {
        CHECK(diff.row(node * 4 + 1).cwiseAbs().maxCoeff() == 0.0);  // m = -1
        CHECK(diff.row(node * 4 + 3).cwiseAbs().maxCoeff() == 0.0);  // m = +1
        CHECK((diff.row(node * 4 + 2).array() - 0.7).abs().maxCoeff() < 1e-12);
    }
}

namespace {

struct ModelFixture {
    Molecule mol;
    OrbEvoModel model;
    ModelContext ctx;
    std::vector<Mat> packed;
    DensityBlocks density;
    Vec field;
    int n_states;

    ModelFixture(ModelConfig cfg, int n_heavy, int n_h, int n_states_,
                 std::uint64_t seed = 99)
        : mol(generate_molecule(n_heavy, n_h, seed)),
          model(cfg),
          ctx(model.make_context(mol)),
          n_states(n_states_) {
        Rng rng(seed ^ 0xfeedull);
        const int n_tb = cfg.n_tb;
        Mat c0(n_states, mol.n_orbitals());
        std::vector<CMat> deltas(n_tb, CMat(n_states, mol.n_orbitals()));
        for (int n = 0; n < n_states; ++n)
            for (int o = 0; o < mol.n_orbitals(); ++o) {
                c0(n, o) = rng.normal();
                for (int s = 0; s < n_tb; ++s)
                    deltas[s](n, o) = cplx(rng.normal(), rng.normal());
            }
        for (int n = 0; n < n_states; ++n) {
            std::vector<CVec> hist;
            for (int s = 0; s < n_tb; ++s) hist.push_back(deltas[s].row(n).transpose());
            packed.push_back(pack_wavefunction_features(c0.row(n).transpose(), hist,
                                                        mol.layout, n_tb));
        }
        density = density_matrix_features(c0, deltas, Vec::Constant(n_states, 2.0),
                                          mol.layout, ctx.graph, default_cg_table());
        field = random_mat(rng, 2 * n_tb, 1).col(0);
    }
};

ModelConfig tiny_cfg(ModelConfig::Variant v, int n_tb = 2) {
    ModelConfig cfg = ModelConfig::defaults(v, n_tb);
    cfg.d_emb = 8;
    cfg.n_heads = 2;
    cfg.n_radial = 8;
    cfg.lmax_layers = v == ModelConfig::Variant::DM ? std::vector<int>{4, 2}
                                                    : std::vector<int>{2, 2};
    return cfg;
}

}  // namespace

TEST_CASE("model forward: shapes, determinism, parameter count") {
    ModelFixture f(tiny_cfg(ModelConfig::Variant::DM), 2, 1, 3);
    const auto out = f.model.forward(f.ctx, f.packed, &f.density, f.field);
    REQUIRE(out.delta.size() == 3);
    for (const auto& d : out.delta) {
        CHECK(d.rows() == f.mol.n_atoms() * 9);
        CHECK(d.cols() == 4 * f.model.config().n_tb);
    }
    CHECK(f.model.params().count() > 1000);

    // fresh model with the same seed: identical parameters and outputs
    ModelFixture g(tiny_cfg(ModelConfig::Variant::DM), 2, 1, 3);
    CHECK(g.model.params().count() == f.model.params().count());
    const auto out2 = g.model.forward(g.ctx, f.packed, &f.density, f.field);
    CHECK((out2.delta[0].val() - out.delta[0].val()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("state permutation equivariance") {
    for (auto variant : {ModelConfig::Variant::WF, ModelConfig::Variant::DM}) {
        ModelFixture f(tiny_cfg(variant), 1, 2, 3);
        const DensityBlocks* dens =
            variant == ModelConfig::Variant::DM ? &f.density : nullptr;
        const auto out = f.model.forward(f.ctx, f.packed, dens, f.field);
        std::vector<Mat> permuted{f.packed[2], f.packed[0], f.packed[1]};
        const auto out_p = f.model.forward(f.ctx, permuted, dens, f.field);
        CHECK((out_p.delta[0].val() - out.delta[2].val()).cwiseAbs().maxCoeff() <
              1e-12);
        CHECK((out_p.delta[1].val() - out.delta[0].val()).cwiseAbs().maxCoeff() <
              1e-12);
    }
}

TEST_CASE("full-model SO(3) equivariance with conditioning bias disabled") {
    ModelConfig cfg = tiny_cfg(ModelConfig::Variant::WF);
    ModelFixture f(cfg, 2, 1, 2);
    // remove every m=0 bias source so full SO(3) symmetry holds
    zero_params_matching(f.model.params(), ".wb");

    Rng rng(3);
    const Mat3 r = rng.rotation();
    const Molecule rot_mol = f.mol.rotated(r);
    const ModelContext rot_ctx = f.model.make_context(rot_mol);
    std::vector<Mat> rot_packed;
    for (const Mat& p : f.packed)
        rot_packed.push_back(rotate_stack(p, 2, f.mol.n_atoms(), r));

    const auto out = f.model.forward(f.ctx, f.packed, nullptr, f.field);
    const auto out_rot = f.model.forward(rot_ctx, rot_packed, nullptr, f.field);
    for (std::size_t n = 0; n < out.delta.size(); ++n) {
        const Mat expect = rotate_stack(out.delta[n].val(), 2, f.mol.n_atoms(), r);
        const double rel = (out_rot.delta[n].val() - expect).norm() /
                           std::max(1e-12, expect.norm());
        CHECK(rel < 1e-9);
    }
}

TEST_CASE("SO(2) equivariance holds and x-rotation breaks with active bias") {
    ModelFixture f(tiny_cfg(ModelConfig::Variant::DM), 2, 1, 2);
    // make the symmetry-breaking bias clearly nonzero
    Rng brng(77);
    for (auto& p : f.model.params().params())
        if (p.name.find(".wb") != std::string::npos)
            p.tensor.val() = random_mat(brng, static_cast<int>(p.tensor.rows()),
                                        static_cast<int>(p.tensor.cols()), 0.5);

    auto run_rotated = [&](const Mat3& r) {
        const Molecule rot_mol = f.mol.rotated(r);
        const ModelContext rot_ctx = f.model.make_context(rot_mol);
        std::vector<Mat> rot_packed;
        for (const Mat& p : f.packed)
            rot_packed.push_back(rotate_stack(p, 2, f.mol.n_atoms(), r));
        // density features of the rotated inputs, recomputed from scratch
        DensityBlocks rot_density;
        {
            const auto& d = f.density;
            rot_density.n_tb = d.n_tb;
            const auto dm = wigner_d_all(4, r);
            for (int l3 = 0; l3 <= 4; ++l3) {
                rot_density.diag[l3] = d.diag[l3];
                for (int a = 0; a < f.mol.n_atoms(); ++a)
                    rot_density.diag[l3].middleRows(a * (2 * l3 + 1), 2 * l3 + 1) =
                        dm[l3] * d.diag[l3].middleRows(a * (2 * l3 + 1), 2 * l3 + 1);
                rot_density.offdiag[l3] = d.offdiag[l3];
                for (int e = 0; e < f.ctx.graph.n_edges(); ++e)
                    rot_density.offdiag[l3].middleRows(e * (2 * l3 + 1), 2 * l3 + 1) =
                        dm[l3] *
                        d.offdiag[l3].middleRows(e * (2 * l3 + 1), 2 * l3 + 1);
            }
        }
        return f.model.forward(rot_ctx, rot_packed, &rot_density, f.field);
    };

    const auto out = f.model.forward(f.ctx, f.packed, &f.density, f.field);
    const Mat3 rz = axis_rotation(2, 35.0 * M_PI / 180.0);
    const auto out_z = run_rotated(rz);
    double rel_z = 0.0;
    for (std::size_t n = 0; n < out.delta.size(); ++n) {
        const Mat expect = rotate_stack(out.delta[n].val(), 2, f.mol.n_atoms(), rz);
        rel_z = std::max(rel_z, (out_z.delta[n].val() - expect).norm() /
                                    std::max(1e-12, expect.norm()));
    }
    CHECK(rel_z < 1e-9);

    const Mat3 rx = axis_rotation(0, 35.0 * M_PI / 180.0);
    const auto out_x = run_rotated(rx);
    double rel_x = 0.0;
    for (std::size_t n = 0; n < out.delta.size(); ++n) {
        const Mat expect = rotate_stack(out.delta[n].val(), 2, f.mol.n_atoms(), rx);
        rel_x = std::max(rel_x, (out_x.delta[n].val() - expect).norm() /
                                    std::max(1e-12, expect.norm()));
    }
    CHECK(rel_x > 100.0 * rel_z);
    CHECK(rel_x > 1e-3);
}

TEST_CASE("composed block gradients match central differences") {
    ModelConfig cfg = tiny_cfg(ModelConfig::Variant::WF, 1);
    cfg.d_emb = 4;
    cfg.n_heads = 1;
    cfg.n_radial = 4;
    cfg.lmax_layers = {2};
    ModelFixture f(cfg, 1, 1, 1);

    auto loss_value = [&]() {
        const auto out = f.model.forward(f.ctx, f.packed, nullptr, f.field);
        return ad::sum_all(ad::abs_smooth(out.delta[0]));
    };
    ad::Tensor loss = loss_value();
    f.model.params().zero_grad();
    loss.backward();

    Rng pick(5);
    int checked = 0;
    const double h = 1e-5;
    for (auto& p : f.model.params().params()) {
        if (checked >= 24) break;
        const int i = static_cast<int>(pick.uniform() * p.tensor.rows());
        const int j = static_cast<int>(pick.uniform() * p.tensor.cols());
        const double saved = p.tensor.val()(i, j);
        p.tensor.val()(i, j) = saved + h;
        const double fp = loss_value().val()(0, 0);
        p.tensor.val()(i, j) = saved - h;
        const double fm = loss_value().val()(0, 0);
        p.tensor.val()(i, j) = saved;
        const double fd = (fp - fm) / (2.0 * h);
        const double an = p.tensor.grad()(i, j);
        const double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
        INFO(p.name << " (" << i << "," << j << ")");
        CHECK(std::abs(fd - an) / denom < 1e-4);
        ++checked;
    }
    CHECK(checked == 24);
}

TEST_CASE("dropout is stochastic in training and off at evaluation") {
    ModelFixture f(tiny_cfg(ModelConfig::Variant::WF), 2, 1, 2);
    const auto a = f.model.forward(f.ctx, f.packed, nullptr, f.field);
    const auto b = f.model.forward(f.ctx, f.packed, nullptr, f.field);
    CHECK((a.delta[0].val() - b.delta[0].val()).cwiseAbs().maxCoeff() == 0.0);

    Rng drop(11);
    bool differs = false;
    for (int trial = 0; trial < 8 && !differs; ++trial) {
        const auto c = f.model.forward(f.ctx, f.packed, nullptr, f.field, true, &drop);
        differs = (c.delta[0].val() - a.delta[0].val()).cwiseAbs().maxCoeff() > 1e-12;
    }
    CHECK(differs);
}

TEST_CASE("phase head: shape, unit-modulus renormalization, invariance") {
    ModelConfig cfg = tiny_cfg(ModelConfig::Variant::WF);
    cfg.phase_head = true;
    ModelFixture f(cfg, 1, 1, 2);
    zero_params_matching(f.model.params(), ".wb");

    const auto out = f.model.forward(f.ctx, f.packed, nullptr, f.field);
    REQUIRE(out.phase.size() == 2);
    CHECK(out.phase[0].rows() == 1);
    CHECK(out.phase[0].cols() == 2 * cfg.n_tb);

    Rng rng(13);
    const Mat3 r = rng.rotation();
    const Molecule rot_mol = f.mol.rotated(r);
    const ModelContext rot_ctx = f.model.make_context(rot_mol);
    std::vector<Mat> rot_packed;
    for (const Mat& p : f.packed)
        rot_packed.push_back(rotate_stack(p, 2, f.mol.n_atoms(), r));
    const auto out_rot = f.model.forward(rot_ctx, rot_packed, nullptr, f.field);
    CHECK((out_rot.phase[0].val() - out.phase[0].val()).cwiseAbs().maxCoeff() < 1e-9);
}
