#include <catch_amalgamated.hpp>

#include "orbevo/block_wigner.hpp"
#include "orbevo/system.hpp"

using namespace orbevo;

TEST_CASE("molecule generation: counting, determinism, constraints") {
    const Molecule single = generate_molecule(1, 0, 0);
    CHECK(single.n_atoms() == 1);
    CHECK(single.n_orbitals() == 13);
    CHECK(single.positions.cwiseAbs().maxCoeff() < 1e-14);  // centered single atom

    const Molecule m = generate_molecule(3, 4, 7);
    CHECK(m.n_atoms() == 7);
    CHECK(m.n_orbitals() == 3 * 13 + 4 * 5);
    for (int i = 0; i < m.n_atoms(); ++i)
        for (int j = i + 1; j < m.n_atoms(); ++j)
            CHECK((m.position(i) - m.position(j)).norm() >= 0.8);

    const Molecule m2 = generate_molecule(3, 4, 7);
    CHECK((m.positions - m2.positions).cwiseAbs().maxCoeff() == 0.0);

    const Molecule m3 = generate_molecule(3, 4, 8);
    CHECK((m.positions - m3.positions).cwiseAbs().maxCoeff() > 1e-6);
}

TEST_CASE("single-atom system structure") {
    const Molecule mol = generate_molecule(1, 0, 3);
    const SystemMatrices sys = build_system(mol);

    CHECK((sys.s - Mat::Identity(13, 13)).cwiseAbs().maxCoeff() < 1e-14);
    CHECK((sys.h0 - sys.h0.transpose()).cwiseAbs().maxCoeff() == 0.0);

    // dipole for an atom at the origin reduces to the on-site transition block:
    // s<->p and p<->d entries only, zero diagonal
    for (int axis = 0; axis < 3; ++axis) {
        CHECK(sys.dipole[axis].diagonal().cwiseAbs().maxCoeff() < 1e-14);
        CHECK((sys.dipole[axis] - sys.dipole[axis].transpose()).cwiseAbs().maxCoeff() <
              1e-14);
        CHECK(sys.dipole[axis].cwiseAbs().maxCoeff() > 1e-3);
    }
}

TEST_CASE("distant atoms decouple") {
    Molecule mol = generate_molecule(2, 0, 5);
    mol.positions.row(0) << -40.0, 0.0, 0.0;
    mol.positions.row(1) << 40.0, 0.0, 0.0;
    const SystemMatrices sys = build_system(mol);
    CHECK(sys.h0.block(0, 13, 13, 13).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(sys.s.block(0, 13, 13, 13).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("system equivariance under rotation") {
    Rng rng(99);
    const Molecule mol = generate_molecule(2, 2, 17);
    const SystemMatrices sys = build_system(mol);
    for (int trial = 0; trial < 5; ++trial) {
        const Mat3 r = rng.rotation();
        const SystemMatrices rot = build_system(mol.rotated(r));
        const Mat b = block_wigner(mol.layout, r);

        CHECK((rot.h0 - b * sys.h0 * b.transpose()).cwiseAbs().maxCoeff() < 1e-10);
        CHECK((rot.s - b * sys.s * b.transpose()).cwiseAbs().maxCoeff() < 1e-10);

        const Mat d1 = wigner_d(1, r).matrix;  // slots (y, z, x)
        static constexpr int slot[3] = {2, 0, 1};
        for (int a = 0; a < 3; ++a) {
            Mat expect = Mat::Zero(sys.h0.rows(), sys.h0.cols());
            for (int c = 0; c < 3; ++c)
                expect += d1(slot[a], slot[c]) * (b * sys.dipole[c] * b.transpose());
            CHECK((rot.dipole[a] - expect).cwiseAbs().maxCoeff() < 1e-10);
        }
    }
}

TEST_CASE("ground state: diagonal case and residuals") {
    SystemMatrices sys;
    sys.h0 = Vec3(1.0, 2.0, 3.0).asDiagonal();
    sys.s = Mat::Identity(3, 3);
    const GroundState gs = solve_ground_state(sys, 2);
    CHECK(gs.energies(0) == Catch::Approx(1.0));
    CHECK(gs.energies(1) == Catch::Approx(2.0));
    CHECK((gs.c0.row(0) - Eigen::RowVector3d(1, 0, 0)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((gs.c0.row(1) - Eigen::RowVector3d(0, 1, 0)).cwiseAbs().maxCoeff() < 1e-12);

    const Molecule mol = generate_molecule(3, 2, 11);
    const SystemMatrices sm = build_system(mol);
    const int nocc = default_occupied_states(mol);
    const GroundState g = solve_ground_state(sm, nocc);

    CHECK((g.c0 * sm.s * g.c0.transpose() - Mat::Identity(nocc, nocc))
              .cwiseAbs()
              .maxCoeff() < 1e-10);
    for (int n = 0; n < nocc; ++n) {
        const Vec c = g.c0.row(n).transpose();
        CHECK((sm.h0 * c - g.energies(n) * sm.s * c).norm() < 1e-10);
    }
    for (int n = 1; n < nocc; ++n) CHECK(g.energies(n) >= g.energies(n - 1));
}

TEST_CASE("degenerate subspace matches an independent dense solve") {
    // single atom: p and d shells are exactly degenerate by symmetry
    const Molecule mol = generate_molecule(1, 0, 2);
    const SystemMatrices sys = build_system(mol);
    const GroundState gs = solve_ground_state(sys, 5);

    // oracle: Cholesky reduction to a standard symmetric eigenproblem
    const Eigen::LLT<Mat> llt(sys.s);
    const Mat l = llt.matrixL();
    const Mat a = l.triangularView<Eigen::Lower>().solve(
        Mat(l.triangularView<Eigen::Lower>().solve(sys.h0).transpose()));
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (a + a.transpose()));
    Mat cref(5, sys.h0.rows());
    for (int k = 0; k < 5; ++k) {
        Vec v = l.transpose().triangularView<Eigen::Upper>().solve(
            Vec(es.eigenvectors().col(k)));
        v /= std::sqrt(v.dot(sys.s * v));
        cref.row(k) = v.transpose();
        CHECK(std::abs(es.eigenvalues()(k) - gs.energies(k)) < 1e-10);
    }
    // projector comparison in the S metric
    const Mat p1 = gs.c0.transpose() * gs.c0 * sys.s;
    const Mat p2 = cref.transpose() * cref * sys.s;
    CHECK((p1 - p2).cwiseAbs().maxCoeff() < 1e-8);
}
