#pragma once

#include <vector>

#include "orbevo/common.hpp"

namespace orbevo {

enum class Species : int { Heavy = 0, Hydrogen = 1 };

/// Ordered list of (l, multiplicity) segments and the derived channel count.
struct IrrepsShape {
    struct Segment {
        int l;
        int mult;
    };
    std::vector<Segment> segments;

    int total() const {
        int n = 0;
        for (const auto& s : segments) n += s.mult * (2 * s.l + 1);
        return n;
    }
};

/// Atomic-orbital segments per species. Heavy atoms carry 2 s, 2 p and one
/// d shell (13 orbitals); hydrogen carries 2 s and one p shell (5 orbitals).
inline IrrepsShape species_shape(Species sp) {
    if (sp == Species::Heavy) return {{{0, 2}, {1, 2}, {2, 1}}};
    return {{{0, 2}, {1, 1}}};
}

inline int species_orbital_count(Species sp) { return species_shape(sp).total(); }

/// Address of one orbital within a molecule's coefficient vector.
struct OrbitalRef {
    int atom;
    int l;
    int mult;  // multiplicity index within (atom, l)
    int m;     // -l..l
};

/// Deterministic orbital layout of a molecule: ascending atom index, then
/// ascending l, then multiplicity, then m from -l to l.
class BasisLayout {
public:
    BasisLayout() = default;

    explicit BasisLayout(std::vector<Species> species) : species_(std::move(species)) {
        atom_offset_.reserve(species_.size());
        for (int a = 0; a < static_cast<int>(species_.size()); ++a) {
            atom_offset_.push_back(static_cast<int>(orbitals_.size()));
            const IrrepsShape shape = species_shape(species_[a]);
            for (const auto& seg : shape.segments)
                for (int mu = 0; mu < seg.mult; ++mu)
                    for (int m = -seg.l; m <= seg.l; ++m)
                        orbitals_.push_back({a, seg.l, mu, m});
        }
    }

    int n_atoms() const { return static_cast<int>(species_.size()); }
    int n_orbitals() const { return static_cast<int>(orbitals_.size()); }
    int atom_orbitals(int a) const { return species_orbital_count(species_[a]); }
    int atom_offset(int a) const { return atom_offset_[a]; }
    Species species(int a) const { return species_[a]; }
    const std::vector<Species>& species() const { return species_; }
    const OrbitalRef& orbital(int o) const { return orbitals_[o]; }
    const std::vector<OrbitalRef>& orbitals() const { return orbitals_; }
    IrrepsShape atom_shape(int a) const { return species_shape(species_[a]); }

    /// Offset of segment (l, mult) within atom a's orbital block.
    int segment_offset(int a, int l, int mult) const {
        int off = 0;
        for (const auto& seg : species_shape(species_[a]).segments) {
            for (int mu = 0; mu < seg.mult; ++mu) {
                if (seg.l == l && mu == mult) return off;
                off += 2 * seg.l + 1;
            }
        }
        throw OrbevoError("segment_offset: no such segment");
    }

private:
    std::vector<Species> species_;
    std::vector<OrbitalRef> orbitals_;
    std::vector<int> atom_offset_;
};

}  // namespace orbevo
