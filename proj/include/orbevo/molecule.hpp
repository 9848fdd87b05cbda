#pragma once

#include <cstdint>
#include <vector>

#include "orbevo/basis.hpp"
#include "orbevo/random.hpp"

namespace orbevo {

/// Synthetic molecule: species tags, 3D positions (angstrom) and the
/// derived orbital layout. Positions are centered on the centroid.
struct Molecule {
    std::vector<Species> species;
    Mat positions;  // n_atoms x 3
    BasisLayout layout;
    std::uint64_t seed = 0;

    int n_atoms() const { return static_cast<int>(species.size()); }
    int n_orbitals() const { return layout.n_orbitals(); }
    Vec3 position(int a) const { return positions.row(a).transpose(); }

    Molecule rotated(const Mat3& r) const {
        Molecule m = *this;
        m.positions = positions * r.transpose();
        return m;
    }
};

/// Random geometry with rejection sampling until the pairwise min-distance
/// constraint holds. Heavy atoms come first, then hydrogens. Deterministic
/// under the seed.
inline Molecule generate_molecule(int n_heavy, int n_hydrogen, std::uint64_t seed,
                                  double d_min = 0.8) {
    require(n_heavy >= 1, "generate_molecule: need at least one heavy atom");
    const int n = n_heavy + n_hydrogen;
    require(n <= 16, "generate_molecule: at most 16 atoms");

    Molecule mol;
    mol.seed = seed;
    mol.species.assign(n_heavy, Species::Heavy);
    mol.species.insert(mol.species.end(), n_hydrogen, Species::Hydrogen);
    mol.layout = BasisLayout(mol.species);

    Rng rng(0xa70b5ull ^ (seed * 0x9e3779b97f4a7c15ull));
    const double half = 0.75 * std::cbrt(static_cast<double>(n)) + 0.85;
    mol.positions = Mat::Zero(n, 3);
    for (int a = 0; a < n; ++a) {
        bool placed = false;
        for (int attempt = 0; attempt < 20000 && !placed; ++attempt) {
            Vec3 p(rng.uniform(-half, half), rng.uniform(-half, half),
                   rng.uniform(-half, half));
            placed = true;
            for (int b = 0; b < a; ++b)
                if ((p - mol.position(b)).norm() < d_min) {
                    placed = false;
                    break;
                }
            if (placed) mol.positions.row(a) = p.transpose();
        }
        require(placed, "generate_molecule: min-distance constraint unsatisfiable");
    }
    mol.positions.rowwise() -= mol.positions.colwise().mean();
    return mol;
}

}  // namespace orbevo
