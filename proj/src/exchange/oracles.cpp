#include "halox/exchange.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <unordered_map>

namespace halox::ex {

std::vector<std::vector<HaloEntry>> direct_gather_oracle(const dd::DDGrid& grid, const dd::AtomSet& atoms)
{
    const auto& box = grid.box();
    const int nRanks = grid.total_ranks();
    std::vector<Vec3> pos(atoms.size());
    std::vector<IVec3> cell(atoms.size());
    for (std::size_t i = 0; i < atoms.size(); ++i) {
        pos[i] = dd::wrap_position(atoms.positions[i], box);
        cell[i] = grid.cell_of_position(pos[i]);
    }

    std::vector<std::vector<HaloEntry>> out(nRanks);
    for (int r = 0; r < nRanks; ++r) {
        const IVec3 cr = grid.cell_of(r);
        for (std::size_t i = 0; i < atoms.size(); ++i) {
            if (cell[i] == cr)
                continue;
            Vec3 shift{0.0, 0.0, 0.0};
            bool inside = true;
            for (Dim d : kPulseDimOrder) {
                const int k = idx(d);
                const int np = grid.np(d);
                if (np == 1 || cell[i][k] == cr[k])
                    continue;
                // only the slab just below the receiving cell's lower face, seen from the owner's side
                const int below = (cr[k] - 1 + np) % np;
                if (cell[i][k] != below || !(pos[i][k] >= grid.plane(d, below + 1) - box.cutoff)) {
                    inside = false;
                    break;
                }
                if (below == np - 1)
                    shift[k] = -box.length(d);
            }
            if (inside)
                out[r].push_back({atoms.globalId[i], pos[i] + shift});
        }
        std::sort(out[r].begin(), out[r].end(),
                  [](const HaloEntry& a, const HaloEntry& b) { return a.globalId < b.globalId; });
    }
    return out;
}

std::map<std::int64_t, Vec3> direct_scatter_oracle(const std::vector<ForceContribution>& contributions)
{
    std::map<std::int64_t, Vec3> totals;
    for (const auto& c : contributions) {
        auto [it, fresh] = totals.try_emplace(c.globalId, Vec3{0.0, 0.0, 0.0});
        it->second += c.force;
    }
    return totals;
}

std::vector<ForceContribution> synthetic_contributions(const dd::PulsePlan& plan)
{
    std::vector<ForceContribution> out;
    for (const auto& l : plan.ranks) {
        for (auto id : l.homeIds)
            out.push_back({id, synthetic_force(id, l.rank)});
        for (auto id : l.haloIds)
            out.push_back({id, synthetic_force(id, l.rank)});
    }
    return out;
}

namespace {

std::string vec_str(const Vec3& v) { return fmt::format("({:a}, {:a}, {:a})", v[0], v[1], v[2]); }

void mismatch(CheckOutcome& o, std::string what)
{
    o.ok = false;
    if (o.mismatches++ == 0)
        o.firstMismatch = std::move(what);
}

} // namespace

CheckOutcome compare_halo(const HaloExchanger& ex, const std::vector<std::vector<HaloEntry>>& oracle)
{
    CheckOutcome o;
    const auto& plan = ex.plan();
    if (oracle.size() != plan.ranks.size()) {
        mismatch(o, "oracle rank count differs");
        return o;
    }
    for (std::size_t r = 0; r < plan.ranks.size(); ++r) {
        const auto& l = plan.ranks[r];
        const auto c = ex.coords(static_cast<int>(r));
        std::unordered_map<std::int64_t, std::size_t> slot;
        for (std::size_t j = 0; j < l.haloIds.size(); ++j)
            if (!slot.emplace(l.haloIds[j], l.home_count() + j).second)
                mismatch(o, fmt::format("rank {}: atom {} received twice", r, l.haloIds[j]));
        if (slot.size() != oracle[r].size())
            mismatch(o, fmt::format("rank {}: {} halo atoms, oracle expects {}", r, slot.size(), oracle[r].size()));
        for (const auto& e : oracle[r]) {
            auto it = slot.find(e.globalId);
            if (it == slot.end()) {
                mismatch(o, fmt::format("rank {}: atom {} missing from halo", r, e.globalId));
                continue;
            }
            if (!bit_equal(c[it->second], e.position))
                mismatch(o, fmt::format("rank {}: atom {} at {} expected {}", r, e.globalId, vec_str(c[it->second]),
                                        vec_str(e.position)));
        }
        for (std::size_t j = 0; j < l.home_count(); ++j)
            if (!bit_equal(c[j], l.homePositions[j]))
                mismatch(o, fmt::format("rank {}: home atom {} modified", r, l.homeIds[j]));
    }
    return o;
}

CheckOutcome compare_home_forces(const HaloExchanger& ex, const std::map<std::int64_t, Vec3>& totals)
{
    CheckOutcome o;
    std::size_t seen = 0;
    for (const auto& l : ex.plan().ranks) {
        const auto f = ex.forces(l.rank);
        for (std::size_t j = 0; j < l.home_count(); ++j) {
            ++seen;
            auto it = totals.find(l.homeIds[j]);
            if (it == totals.end()) {
                mismatch(o, fmt::format("rank {}: atom {} has no oracle total", l.rank, l.homeIds[j]));
                continue;
            }
            if (!bit_equal(f[j], it->second))
                mismatch(o, fmt::format("rank {}: atom {} force {} expected {}", l.rank, l.homeIds[j], vec_str(f[j]),
                                        vec_str(it->second)));
        }
    }
    if (seen != totals.size())
        mismatch(o, fmt::format("{} home atoms but {} oracle totals", seen, totals.size()));
    return o;
}

std::size_t count_notifications(const pgas::ExecutionRecord& rec, const std::vector<std::string>& arrays)
{
    return static_cast<std::size_t>(std::count_if(rec.events.begin(), rec.events.end(), [&](const pgas::Event& e) {
        return (e.kind == pgas::EventKind::SignalStore || e.kind == pgas::EventKind::PutSignal) &&
               std::find(arrays.begin(), arrays.end(), e.object) != arrays.end();
    }));
}

} // namespace halox::ex
