#include "halox/exchange.hpp"

#include "json.hpp"

#include <fmt/format.h>

#include <memory>
#include <ostream>

namespace halox::ex {

namespace {

struct EngineRun {
    std::unique_ptr<pgas::World> world;
    std::unique_ptr<HaloExchanger> ex;
    StepResult step;
    bool completed = false;
    bool deadlock = false;
    std::string error;
};

EngineRun run_engine(const dd::PulsePlan& plan, const VerifyOptions& opt, std::uint64_t seed, Schedule s)
{
    EngineRun run;
    pgas::WorldConfig wc;
    wc.nPEs = plan.grid.total_ranks();
    wc.islands = opt.islands.empty() ? consecutive_islands(wc.nPEs, opt.ranksPerIsland) : opt.islands;
    wc.mode = opt.mode;
    wc.seed = seed;
    wc.aggressiveness = opt.aggressiveness;
    run.world = std::make_unique<pgas::World>(wc);
    ExchangeConfig cfg = opt.exchange;
    cfg.mutation = s == Schedule::Fused ? opt.mutation : Mutation::None;
    run.ex = std::make_unique<HaloExchanger>(*run.world, plan, cfg);
    run.ex->load_home_coords();
    try {
        run.step = run.ex->run_step(s);
        run.completed = true;
    } catch (const pgas::SimDeadlock& e) {
        run.deadlock = true;
        run.error = e.what();
    } catch (const pgas::PgasError& e) {
        run.error = e.what();
    }
    return run;
}

Vec3 sum_home_forces(const HaloExchanger& ex)
{
    Vec3 s{0.0, 0.0, 0.0};
    for (const auto& l : ex.plan().ranks) {
        const auto f = ex.forces(l.rank);
        for (std::size_t j = 0; j < l.home_count(); ++j)
            s += f[j];
    }
    return s;
}

} // namespace

std::vector<VerifyRecord> verify(const VerifyOptions& opt)
{
    std::vector<VerifyRecord> out;
    for (std::uint64_t seed : opt.seeds) {
        const auto grid = dd::build_grid(opt.box, opt.ranks);
        const dd::AtomSet atoms = opt.atomsOverride ? *opt.atomsOverride : dd::random_atoms(opt.box, opt.atoms, seed);
        const auto plan = dd::build_halo_zones(grid, atoms, opt.exchange.bufLength);
        const auto oracle = direct_gather_oracle(grid, atoms);
        const auto contributions = synthetic_contributions(plan);
        const auto totals = direct_scatter_oracle(contributions);
        Vec3 before{0.0, 0.0, 0.0};
        for (const auto& c : contributions)
            before += c.force;

        auto rec = [&](std::string check, bool pass, std::size_t count, std::string detail) {
            out.push_back({std::move(check), pass, seed, grid.np(), atoms.size(), count, std::move(detail)});
        };

        EngineRun runs[2] = {run_engine(plan, opt, seed, Schedule::Serialized),
                             run_engine(plan, opt, seed, Schedule::Fused)};
        for (const auto& run : runs) {
            const auto name = std::string(to_string(&run == &runs[0] ? Schedule::Serialized : Schedule::Fused));
            rec("liveness", !run.deadlock, run.deadlock ? 1 : 0, name + (run.deadlock ? ": " + run.error : ""));
            if (!run.completed) {
                rec("engine_error", false, 1, name + ": " + run.error);
                continue;
            }
            auto halo = compare_halo(*run.ex, oracle);
            rec("oracle_equivalence", halo.ok, halo.mismatches, name + (halo.ok ? "" : ": " + halo.firstMismatch));

            rec("dependency_safety", run.step.sentinelLeaks == 0, run.step.sentinelLeaks,
                name + fmt::format(": {} sentinel values consumed", run.step.sentinelLeaks));

            auto forces = compare_home_forces(*run.ex, totals);
            const Vec3 after = sum_home_forces(*run.ex);
            const bool sumOk = bit_equal(before, after);
            rec("force_conservation", forces.ok && sumOk, forces.mismatches,
                name + (forces.ok ? "" : ": " + forces.firstMismatch) +
                    (sumOk ? "" : fmt::format(": global sum ({}, {}, {}) became ({}, {}, {})", before[0], before[1],
                                              before[2], after[0], after[1], after[2])));

            std::size_t notes = 0;
            for (const auto& r : run.step.records)
                notes += count_notifications(r, run.ex->notification_arrays());
            const std::size_t expected =
                2 * static_cast<std::size_t>(plan.total_pulses()) * static_cast<std::size_t>(grid.total_ranks());
            rec("notification_minimality", notes == expected, notes,
                name + fmt::format(": {} notifications, expected {}", notes, expected));
        }

        if (runs[0].completed && runs[1].completed) {
            std::size_t diff = 0;
            for (int r = 0; r < grid.total_ranks(); ++r) {
                const auto cs = runs[0].ex->coords(r), cf = runs[1].ex->coords(r);
                const auto fs = runs[0].ex->forces(r), ff = runs[1].ex->forces(r);
                for (std::size_t j = 0; j < cs.size(); ++j)
                    diff += !bit_equal(cs[j], cf[j]) + !bit_equal(fs[j], ff[j]);
            }
            rec("schedule_equivalence", diff == 0, diff, fmt::format("{} differing entries", diff));
        }
    }
    return out;
}

void write_jsonl(std::ostream& os, const std::vector<VerifyRecord>& recs)
{
    for (const auto& r : recs) {
        nlohmann::ordered_json j;
        j["check"] = r.check;
        j["pass"] = r.pass;
        j["seed"] = r.seed;
        j["np"] = {r.np[0], r.np[1], r.np[2]};
        j["atoms"] = r.atoms;
        j["count"] = r.count;
        j["detail"] = r.detail;
        os << j.dump() << '\n';
    }
}

} // namespace halox::ex
