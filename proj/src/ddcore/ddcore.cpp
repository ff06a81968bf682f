#include "halox/ddcore.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace halox::dd {

void SimBox::validate() const
{
    for (int d = 0; d < 3; ++d)
        if (!(lengths[d] > 0.0) || !std::isfinite(lengths[d]))
            throw InvalidBox("box lengths must be positive and finite");
    if (!(cutoff > 0.0) || !std::isfinite(cutoff))
        throw InvalidBox("cutoff must be positive and finite");
}

double wrap_coordinate(double x, double length)
{
    double w = x - length * std::floor(x / length);
    if (w >= length || w < 0.0)
        w = 0.0;
    return w + 0.0;
}

Vec3 wrap_position(const Vec3& p, const SimBox& box)
{
    return {wrap_coordinate(p[0], box.lengths[0]), wrap_coordinate(p[1], box.lengths[1]),
            wrap_coordinate(p[2], box.lengths[2])};
}

DDGrid::DDGrid(IVec3 np, const SimBox& box) : np_(np), box_(box)
{
    box_.validate();
    for (int d = 0; d < 3; ++d)
        if (np_[d] < 1)
            throw NoValidDecomposition("domain counts must be >= 1");
}

int DDGrid::decomposed_dim_count() const
{
    return static_cast<int>(std::count_if(np_.begin(), np_.end(), [](int n) { return n > 1; }));
}

int DDGrid::rank_of(const IVec3& cell) const
{
    const int z = cell[idx(Dim::Z)], y = cell[idx(Dim::Y)], x = cell[idx(Dim::X)];
    return z + np(Dim::Z) * (y + np(Dim::Y) * x);
}

IVec3 DDGrid::cell_of(int rank) const
{
    IVec3 c{};
    c[idx(Dim::Z)] = rank % np(Dim::Z);
    rank /= np(Dim::Z);
    c[idx(Dim::Y)] = rank % np(Dim::Y);
    c[idx(Dim::X)] = rank / np(Dim::Y);
    return c;
}

int DDGrid::forward_neighbor(int rank, Dim d) const
{
    IVec3 c = cell_of(rank);
    c[idx(d)] = (c[idx(d)] + 1) % np(d);
    return rank_of(c);
}

int DDGrid::backward_neighbor(int rank, Dim d) const
{
    IVec3 c = cell_of(rank);
    c[idx(d)] = (c[idx(d)] + np(d) - 1) % np(d);
    return rank_of(c);
}

double DDGrid::plane(Dim d, int k) const
{
    if (k <= 0)
        return 0.0;
    if (k >= np(d))
        return box_.length(d);
    return box_.length(d) * k / np(d);
}

int DDGrid::cell_index(Dim d, double x) const
{
    int c = 0;
    for (int k = 1; k < np(d); ++k)
        if (x >= plane(d, k))
            c = k;
    return c;
}

IVec3 DDGrid::cell_of_position(const Vec3& p) const
{
    return {cell_index(Dim::X, p[0]), cell_index(Dim::Y, p[1]), cell_index(Dim::Z, p[2])};
}

double halo_volume_estimate(const IVec3& np, const SimBox& box)
{
    Vec3 extent{};
    for (int d = 0; d < 3; ++d)
        extent[d] = box.lengths[d] / np[d];
    double volume = 0.0;
    for (Dim d : kPulseDimOrder) {
        if (np[idx(d)] <= 1)
            continue;
        double face = box.cutoff;
        for (int o = 0; o < 3; ++o)
            if (o != idx(d))
                face *= extent[o];
        volume += face;
        // forwarded data widens later zones along this dimension
        extent[idx(d)] += box.cutoff;
    }
    return volume;
}

bool single_pulse_valid(const IVec3& np, const SimBox& box)
{
    for (int d = 0; d < 3; ++d)
        if (np[d] > 1 && !(box.cutoff < box.lengths[d] / np[d]))
            return false;
    return true;
}

namespace {

std::vector<int> prime_factors_desc(int n)
{
    std::vector<int> f;
    for (int p = 2; p * p <= n; ++p)
        while (n % p == 0) {
            f.push_back(p);
            n /= p;
        }
    if (n > 1)
        f.push_back(n);
    std::sort(f.rbegin(), f.rend());
    return f;
}

std::optional<IVec3> greedy_factorization(const SimBox& box, int ranks)
{
    IVec3 np{1, 1, 1};
    for (int f : prime_factors_desc(ranks)) {
        std::optional<Dim> best;
        double bestWidth = -1.0;
        for (Dim d : kPulseDimOrder) {
            const double width = box.length(d) / np[idx(d)];
            if (!(box.cutoff < box.length(d) / (np[idx(d)] * f)))
                continue;
            // strict comparison keeps the z, y, x preference on ties
            if (width > bestWidth) {
                bestWidth = width;
                best = d;
            }
        }
        if (!best)
            return std::nullopt;
        np[idx(*best)] *= f;
    }
    return np;
}

} // namespace

DDGrid build_grid(const SimBox& box, int ranks)
{
    box.validate();
    if (ranks < 1)
        throw NoValidDecomposition("rank count must be >= 1");
    if (auto np = greedy_factorization(box, ranks))
        return DDGrid(*np, box);

    std::optional<IVec3> best;
    double bestVolume = std::numeric_limits<double>::infinity();
    for (int a = 1; a <= ranks; ++a) {
        if (ranks % a)
            continue;
        for (int b = 1; b <= ranks / a; ++b) {
            if ((ranks / a) % b)
                continue;
            const IVec3 np{a, b, ranks / a / b};
            if (!single_pulse_valid(np, box))
                continue;
            const double v = halo_volume_estimate(np, box);
            if (v < bestVolume) {
                bestVolume = v;
                best = np;
            }
        }
    }
    if (!best)
        throw NoValidDecomposition("no factorisation of " + std::to_string(ranks) +
                                   " ranks keeps the cutoff below the cell width");
    return DDGrid(*best, box);
}

AtomSet random_atoms(const SimBox& box, std::size_t count, std::uint64_t seed)
{
    box.validate();
    std::mt19937_64 rng(seed);
    AtomSet atoms;
    atoms.positions.reserve(count);
    atoms.globalId.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        Vec3 p{};
        for (int d = 0; d < 3; ++d) {
            std::uniform_real_distribution<double> u(0.0, box.lengths[d]);
            p[d] = wrap_coordinate(u(rng), box.lengths[d]);
        }
        atoms.positions.push_back(p);
        atoms.globalId.push_back(static_cast<std::int64_t>(i));
    }
    return atoms;
}

std::vector<std::vector<std::size_t>> assign_atoms(AtomSet& atoms, const DDGrid& grid)
{
    std::vector<std::vector<std::size_t>> home(grid.total_ranks());
    atoms.homeDomain.assign(atoms.size(), 0);
    for (std::size_t i = 0; i < atoms.size(); ++i) {
        atoms.positions[i] = wrap_position(atoms.positions[i], grid.box());
        const int r = grid.rank_of(grid.cell_of_position(atoms.positions[i]));
        atoms.homeDomain[i] = r;
        home[r].push_back(i);
    }
    return home;
}

std::vector<std::optional<int>> pulse_dependencies(const std::vector<Dim>& order)
{
    std::vector<std::optional<int>> deps(order.size());
    for (std::size_t p = 1; p < order.size(); ++p)
        deps[p] = static_cast<int>(p) - 1;
    return deps;
}

std::vector<std::optional<int>> pulse_dependencies(const PulsePlan& plan)
{
    return pulse_dependencies(plan.order);
}

PulsePlan build_halo_zones(const DDGrid& grid, const AtomSet& atoms, std::size_t bufLength)
{
    const SimBox& box = grid.box();
    for (Dim d : kPulseDimOrder)
        if (grid.decomposed(d) && !(box.cutoff < grid.cell_width(d)))
            throw CutoffTooLarge("cutoff " + std::to_string(box.cutoff) + " needs more than one pulse along " +
                                 std::string(dim_name(d)));

    PulsePlan plan;
    plan.grid = grid;
    plan.bufLength = bufLength;
    for (Dim d : kPulseDimOrder)
        if (grid.decomposed(d))
            plan.order.push_back(d);
    plan.firstDependentPulse = pulse_dependencies(plan.order);

    const int nRanks = grid.total_ranks();
    plan.ranks.resize(nRanks);
    for (int r = 0; r < nRanks; ++r)
        plan.ranks[r].rank = r;
    for (std::size_t i = 0; i < atoms.size(); ++i) {
        const Vec3 p = wrap_position(atoms.positions[i], box);
        auto& layout = plan.ranks[grid.rank_of(grid.cell_of_position(p))];
        layout.homeIds.push_back(atoms.globalId[i]);
        layout.homePositions.push_back(p);
    }

    auto local_position = [](const RankLayout& l, std::size_t j) -> const Vec3& {
        return j < l.homePositions.size() ? l.homePositions[j] : l.haloPositions[j - l.homePositions.size()];
    };
    auto local_id = [](const RankLayout& l, std::size_t j) {
        return j < l.homeIds.size() ? l.homeIds[j] : l.haloIds[j - l.homeIds.size()];
    };

    for (int p = 0; p < plan.total_pulses(); ++p) {
        const Dim d = plan.order[p];
        // selections use the pre-pulse state of every sender
        for (int r = 0; r < nRanks; ++r) {
            RankLayout& l = plan.ranks[r];
            const IVec3 cell = grid.cell_of(r);
            const int c = cell[idx(d)];
            const double threshold = grid.plane(d, c + 1) - box.cutoff;

            PulseData pd;
            pd.pulse = p;
            pd.dim = d;
            pd.sendRank = grid.forward_neighbor(r, d);
            pd.recvRank = grid.backward_neighbor(r, d);
            pd.depOffset = l.home_count();
            if (c == grid.np(d) - 1)
                pd.coordShift[idx(d)] = -box.length(d);
            const std::size_t count = l.total_count();
            for (std::size_t j = 0; j < count; ++j) {
                if (local_position(l, j)[idx(d)] >= threshold) {
                    pd.indexMap.push_back(static_cast<std::int32_t>(j));
                    if (j < pd.depOffset) {
                        ++pd.independentCount;
                    } else {
                        const int src = l.haloSourcePulse[j - pd.depOffset];
                        if (!pd.earliestDependency || src < *pd.earliestDependency)
                            pd.earliestDependency = src;
                    }
                }
            }
            pd.sendSize = pd.indexMap.size();
            pd.blocksForPulse = static_cast<int>(std::max<std::size_t>(1, (pd.sendSize + bufLength - 1) / bufLength));
            l.pulses.push_back(std::move(pd));
        }
        for (int r = 0; r < nRanks; ++r) {
            RankLayout& recv = plan.ranks[r];
            PulseData& mine = recv.pulses[p];
            const RankLayout& sender = plan.ranks[mine.recvRank];
            const PulseData& theirs = sender.pulses[p];
            mine.atomOffset = recv.total_count();
            mine.recvSize = theirs.sendSize;
            for (std::int32_t j : theirs.indexMap) {
                recv.haloIds.push_back(local_id(sender, static_cast<std::size_t>(j)));
                recv.haloPositions.push_back(local_position(sender, static_cast<std::size_t>(j)) + theirs.coordShift);
                recv.haloSourcePulse.push_back(p);
            }
        }
        for (int r = 0; r < nRanks; ++r) {
            PulseData& mine = plan.ranks[r].pulses[p];
            mine.remoteAtomOffset = plan.ranks[mine.sendRank].pulses[p].atomOffset;
        }
    }
    return plan;
}

namespace {

void put_vec(std::ostringstream& os, const Vec3& v)
{
    os << std::hexfloat << v[0] << ',' << v[1] << ',' << v[2] << std::defaultfloat;
}

} // namespace

std::string serialize(const PulsePlan& plan)
{
    std::ostringstream os;
    const auto& np = plan.grid.np();
    os << "np " << np[0] << ' ' << np[1] << ' ' << np[2] << " buf " << plan.bufLength << '\n';
    os << "order";
    for (Dim d : plan.order)
        os << ' ' << dim_name(d);
    os << '\n';
    for (const auto& l : plan.ranks) {
        os << "rank " << l.rank << " home " << l.home_count() << " halo " << l.haloIds.size() << '\n';
        for (std::size_t i = 0; i < l.homeIds.size(); ++i) {
            os << " h " << l.homeIds[i] << ' ';
            put_vec(os, l.homePositions[i]);
            os << '\n';
        }
        for (std::size_t i = 0; i < l.haloIds.size(); ++i) {
            os << " g " << l.haloIds[i] << ' ' << l.haloSourcePulse[i] << ' ';
            put_vec(os, l.haloPositions[i]);
            os << '\n';
        }
        for (const auto& pd : l.pulses) {
            os << " pulse " << pd.pulse << ' ' << dim_name(pd.dim) << " send " << pd.sendRank << ' ' << pd.sendSize
               << " recv " << pd.recvRank << ' ' << pd.recvSize << " off " << pd.atomOffset << ' '
               << pd.remoteAtomOffset << " dep " << pd.depOffset << ' ' << pd.independentCount << ' '
               << pd.earliestDependency.value_or(-1) << " blocks " << pd.blocksForPulse << " shift ";
            put_vec(os, pd.coordShift);
            os << " map";
            for (auto j : pd.indexMap)
                os << ' ' << j;
            os << '\n';
        }
    }
    return os.str();
}

} // namespace halox::dd
