#pragma once

// Periodic spatial decomposition, home-atom assignment and the staged
// (eighth-shell) halo pulse plan.

#include "halox/vec3.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace halox::dd {

class DecompositionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NoValidDecomposition : public DecompositionError {
public:
    using DecompositionError::DecompositionError;
};

class CutoffTooLarge : public DecompositionError {
public:
    using DecompositionError::DecompositionError;
};

class InvalidBox : public DecompositionError {
public:
    using DecompositionError::DecompositionError;
};

struct SimBox {
    Vec3 lengths{};
    double cutoff = 0.0;

    /// Throws InvalidBox on non-positive lengths or cutoff.
    void validate() const;
    double length(Dim d) const { return lengths[idx(d)]; }
};

/// Wraps a coordinate into [0, L). -0.0 is canonicalised to +0.0.
double wrap_coordinate(double x, double length);
Vec3 wrap_position(const Vec3& p, const SimBox& box);

/// Cartesian grid of domains. Rank ids enumerate cells with z fastest,
/// so one-dimensional decompositions get consecutive ranks.
class DDGrid {
public:
    DDGrid() = default;
    DDGrid(IVec3 np, const SimBox& box);

    const IVec3& np() const { return np_; }
    int np(Dim d) const { return np_[idx(d)]; }
    int total_ranks() const { return np_[0] * np_[1] * np_[2]; }
    bool decomposed(Dim d) const { return np(d) > 1; }
    int decomposed_dim_count() const;

    int rank_of(const IVec3& cell) const;
    IVec3 cell_of(int rank) const;
    int forward_neighbor(int rank, Dim d) const;
    int backward_neighbor(int rank, Dim d) const;

    /// Split plane k (0..np) along d. plane(d, 0) == 0, plane(d, np) == L.
    double plane(Dim d, int k) const;
    double cell_width(Dim d) const { return box_.length(d) / np(d); }
    /// Cell index along d; positions exactly on a split plane go to the higher cell.
    int cell_index(Dim d, double x) const;
    IVec3 cell_of_position(const Vec3& p) const;

    const SimBox& box() const { return box_; }

private:
    IVec3 np_{1, 1, 1};
    SimBox box_{};
};

/// Estimated eighth-shell halo volume (nm^3) imported per domain.
double halo_volume_estimate(const IVec3& np, const SimBox& box);

/// True when every decomposed dimension satisfies cutoff < cell width.
bool single_pulse_valid(const IVec3& np, const SimBox& box);

/// Chooses np with product `ranks`. Prime factors (largest first) are assigned
/// greedily to the dimension with the longest current cell, ties z, y, x.
/// Falls back to the valid factorisation with the smallest halo volume estimate.
DDGrid build_grid(const SimBox& box, int ranks);

struct AtomSet {
    std::vector<Vec3> positions;
    std::vector<std::int64_t> globalId;
    std::vector<int> homeDomain; // filled by assign_atoms

    std::size_t size() const { return positions.size(); }
};

/// Uniform random atoms inside the box, ids 0..count-1.
AtomSet random_atoms(const SimBox& box, std::size_t count, std::uint64_t seed);

class AtomFileError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Reads "id x y z" records separated by whitespace and/or commas. Blank
/// lines and lines starting with '#' are skipped; a non-numeric first line
/// is treated as a header. Ids must be unique.
AtomSet parse_atom_file(std::istream& in);
AtomSet load_atom_file(const std::string& path);

/// Wraps positions, fills homeDomain and returns per-rank home lists
/// (indices into the atom set, ascending).
std::vector<std::vector<std::size_t>> assign_atoms(AtomSet& atoms, const DDGrid& grid);

struct PulseData {
    int pulse = 0; // global pulse index
    Dim dim = Dim::Z;
    int sendRank = -1; // destination of coordinates in this pulse
    int recvRank = -1; // source of coordinates in this pulse
    std::size_t sendSize = 0;
    std::size_t recvSize = 0;
    std::size_t atomOffset = 0;       // start of this rank's received slice
    std::size_t remoteAtomOffset = 0; // atomOffset of the matching pulse on sendRank
    Vec3 coordShift{0.0, 0.0, 0.0};
    std::vector<std::int32_t> indexMap; // home entries ascending, then received entries ascending
    std::size_t depOffset = 0;          // sender home-atom count
    std::size_t independentCount = 0;   // number of indexMap entries < depOffset
    /// Earliest pulse whose received slice is referenced by a dependent entry.
    std::optional<int> earliestDependency;
    int blocksForPulse = 1;

    std::size_t dependent_count() const { return sendSize - independentCount; }
};

struct RankLayout {
    int rank = 0;
    std::vector<std::int64_t> homeIds;
    std::vector<Vec3> homePositions;
    std::vector<std::int64_t> haloIds;   // one per halo slot, in arrival order
    std::vector<Vec3> haloPositions;     // shifted positions the exchange must deliver
    std::vector<int> haloSourcePulse;    // pulse that delivers each halo slot
    std::vector<PulseData> pulses;

    std::size_t home_count() const { return homeIds.size(); }
    std::size_t total_count() const { return homeIds.size() + haloIds.size(); }
};

struct PulsePlan {
    DDGrid grid;
    std::vector<Dim> order;                       // decomposed dims, z -> y -> x
    std::vector<std::optional<int>> firstDependentPulse;
    std::vector<RankLayout> ranks;
    std::size_t bufLength = 2048;

    int total_pulses() const { return static_cast<int>(order.size()); }
};

inline constexpr std::size_t kDefaultBufLength = 2048;

/// Builds the staged per-pulse plan. Throws CutoffTooLarge when a
/// decomposed dimension would need a second pulse.
PulsePlan build_halo_zones(const DDGrid& grid, const AtomSet& atoms, std::size_t bufLength = kDefaultBufLength);

/// Immediate predecessor in global pulse order; none for the first pulse.
std::vector<std::optional<int>> pulse_dependencies(const std::vector<Dim>& order);
std::vector<std::optional<int>> pulse_dependencies(const PulsePlan& plan);

/// Canonical text form of a plan; identical inputs give identical strings.
std::string serialize(const PulsePlan& plan);

} // namespace halox::dd
