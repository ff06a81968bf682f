#include "halox/bench.hpp"
#include "halox/litmus.hpp"

#include <fmt/format.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <set>

namespace halox::bench {

namespace fs = std::filesystem;

namespace {

std::ofstream open_out(const RunConfig& cfg, const std::string& name)
{
    fs::create_directories(cfg.out);
    const fs::path p = fs::path(cfg.out) / name;
    std::ofstream os(p);
    if (!os)
        throw std::runtime_error(fmt::format("cannot write '{}'", p.string()));
    return os;
}

// One JSON header line so each report carries its own provenance.
void write_header(std::ostream& os, const RunConfig& cfg, const char* command)
{
    nlohmann::ordered_json h;
    h["record"] = "config";
    h["command"] = command;
    h["seeds"] = cfg.seeds;
    h["config"] = to_json(cfg);
    os << h.dump() << '\n';
}

void write_comment_header(std::ostream& os, const RunConfig& cfg, const char* command)
{
    os << "# haloxsim " << command << '\n';
    os << "# seeds " << nlohmann::json(cfg.seeds).dump() << '\n';
    os << "# config " << to_json(cfg).dump() << '\n';
}

ex::VerifyOptions verify_options(const RunConfig& cfg, const dd::AtomSet* atoms)
{
    ex::VerifyOptions o;
    o.box = dd::SimBox{cfg.box, cfg.cutoff};
    o.ranks = cfg.ranks;
    o.atoms = cfg.atomCount;
    o.ranksPerIsland = cfg.ranksPerIsland;
    o.islands = cfg.island_map();
    o.seeds = cfg.seeds;
    o.mode = cfg.memoryModel;
    o.aggressiveness = cfg.aggressiveness;
    o.mutation = cfg.mutation;
    o.exchange = cfg.exchange;
    o.atomsOverride = atoms;
    return o;
}

std::optional<dd::AtomSet> file_atoms(const RunConfig& cfg)
{
    if (!cfg.atomFile)
        return std::nullopt;
    return dd::load_atom_file(*cfg.atomFile);
}

std::vector<std::uint64_t> seed_range(std::uint64_t first, int n)
{
    std::vector<std::uint64_t> s(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        s[static_cast<std::size_t>(i)] = first + static_cast<std::uint64_t>(i);
    return s;
}

struct Calibrated {
    sim::MachineModel model;
    std::optional<sim::CalibrationResult> fit;
};

Calibrated machine_for_sweep(const RunConfig& cfg)
{
    Calibrated c{cfg.machine_model(), std::nullopt};
    if (cfg.calibrate) {
        c.fit = sim::calibrate(sim::default_targets(), c.model);
        c.model = c.fit->model;
    }
    return c;
}

sim::SweepConfig sweep_config(const RunConfig& cfg, const sim::MachineModel& m)
{
    sim::SweepConfig s;
    s.atomsPerRank = cfg.sweep.atomsPerRank;
    s.layouts = cfg.sweep.layouts;
    s.density = cfg.sweep.density;
    s.cutoff = cfg.sweep.cutoff;
    s.ranksPerIsland = cfg.ranksPerIsland;
    s.machine = m;
    if (cfg.schedule)
        s.schedules = {*cfg.schedule == ex::Schedule::Serialized ? sim::Schedule::Serialized : sim::Schedule::Fused};
    return s;
}

void write_calibration(std::ostream& os, const Calibrated& c)
{
    if (!c.fit) {
        os << "# calibration disabled\n";
        return;
    }
    const auto& f = *c.fit;
    os << fmt::format("# calibration compute_rate={:.6g} nonlocal_intensity={:.6g} direct_link_latency={:.6g} "
                      "mpi_overhead={:.6g} iterations={} converged={}\n",
                      f.model.computeRate, f.model.nonLocalIntensity, f.model.directLinkLatency, f.model.mpiOverhead,
                      f.iterations, f.converged ? "true" : "false");
    const auto targets = sim::default_targets();
    for (std::size_t i = 0; i < targets.size(); ++i) {
        const auto& t = targets[i];
        os << fmt::format("# anchor atoms_per_rank={:.0f} ranks={} dims={} schedule={} metric={} target={:.3f} "
                          "model={:.3f}\n",
                          t.system.atomsPerRank, t.system.ranks, t.system.dims, sim::to_string(t.schedule),
                          sim::to_string(t.metric), t.value, f.predicted[i]);
    }
}

} // namespace

int cmd_verify(const RunConfig& cfg, std::ostream& log)
{
    const auto atoms = file_atoms(cfg);
    const auto recs = ex::verify(verify_options(cfg, atoms ? &*atoms : nullptr));

    auto os = open_out(cfg, "verify.jsonl");
    write_header(os, cfg, "verify");
    ex::write_jsonl(os, recs);

    std::map<std::string, std::pair<std::size_t, std::size_t>> tally; // check -> (pass, fail)
    for (const auto& r : recs)
        (r.pass ? tally[r.check].first : tally[r.check].second)++;
    bool ok = !recs.empty();
    for (const auto& [check, pf] : tally) {
        log << fmt::format("{:<24} {:>5} pass {:>5} fail\n", check, pf.first, pf.second);
        ok = ok && pf.second == 0;
    }
    log << (ok ? "verify: all checks passed\n" : "verify: FAILED\n");
    return ok ? kOk : kCheckFailure;
}

int cmd_litmus(const RunConfig& cfg, std::ostream& log)
{
    auto os = open_out(cfg, "litmus.jsonl");
    write_header(os, cfg, "litmus");
    bool ok = true;

    // Memory-model litmus set: trial seeds are derived from every configured seed.
    pgas::LitmusOptions lo;
    lo.mode = cfg.memoryModel;
    lo.aggressiveness = cfg.aggressiveness;
    for (std::uint64_t s : cfg.seeds)
        for (auto t : seed_range(s * 1000003ull, cfg.litmusTrials))
            lo.seeds.push_back(t);
    for (const auto& r : pgas::run_litmus_suite(lo)) {
        nlohmann::ordered_json j;
        j["record"] = "litmus";
        j["test"] = r.name;
        j["expects_violation"] = r.expectsViolation;
        j["trials"] = r.trials;
        j["violations"] = r.violations;
        j["pass"] = r.pass();
        j["detail"] = r.detail;
        os << j.dump() << '\n';
        log << fmt::format("litmus   {:<28} {:>7}/{:<7} {}\n", r.name, r.violations, r.trials,
                           r.pass() ? "ok" : "FAIL");
        ok = ok && r.pass();
    }

    // Exchange protocol mutations must each be caught within mutationSeeds seeds.
    const auto atoms = file_atoms(cfg);
    const std::vector<ex::Mutation> mutations{ex::Mutation::DropPackWait, ex::Mutation::RelaxedNotify,
                                              ex::Mutation::SkipDepMgmtWait,
                                              ex::Mutation::ImmediatePredecessorOnly};
    for (auto m : mutations) {
        auto opt = verify_options(cfg, atoms ? &*atoms : nullptr);
        opt.mode = pgas::MemoryMode::WeakAdversary;
        opt.mutation = m;
        std::size_t tried = 0;
        std::optional<ex::VerifyRecord> caught;
        for (auto s : seed_range(cfg.seeds.front(), cfg.mutationSeeds)) {
            opt.seeds = {s};
            ++tried;
            for (const auto& r : ex::verify(opt))
                if (!r.pass && !caught)
                    caught = r;
            if (caught)
                break;
        }
        nlohmann::ordered_json j;
        j["record"] = "mutation";
        j["mutation"] = std::string(ex::to_string(m));
        j["seeds_tried"] = tried;
        j["caught"] = caught.has_value();
        if (caught) {
            j["seed"] = caught->seed;
            j["check"] = caught->check;
            j["detail"] = caught->detail;
        }
        j["pass"] = caught.has_value();
        os << j.dump() << '\n';
        log << fmt::format("mutation {:<28} {}\n", ex::to_string(m),
                           caught ? fmt::format("caught by {} at seed {}", caught->check, caught->seed)
                                  : fmt::format("NOT caught in {} seeds", tried));
        ok = ok && caught.has_value();
    }

    // With an injected mutation the correct-protocol run is expected to break.
    if (cfg.mutation != ex::Mutation::None) {
        auto opt = verify_options(cfg, atoms ? &*atoms : nullptr);
        opt.mode = pgas::MemoryMode::WeakAdversary;
        opt.seeds = seed_range(cfg.seeds.front(), cfg.mutationSeeds);
        std::optional<ex::VerifyRecord> failure;
        for (const auto& r : ex::verify(opt))
            if (!r.pass && !failure)
                failure = r;
        nlohmann::ordered_json j;
        j["record"] = "injected";
        j["mutation"] = std::string(ex::to_string(cfg.mutation));
        j["caught"] = failure.has_value();
        if (failure) {
            j["seed"] = failure->seed;
            j["check"] = failure->check;
            j["detail"] = failure->detail;
        }
        j["pass"] = !failure.has_value();
        os << j.dump() << '\n';
        if (failure)
            log << fmt::format("injected mutation {} caught by {} at seed {}\n", ex::to_string(cfg.mutation),
                               failure->check, failure->seed);
        else
            log << fmt::format("injected mutation {} went undetected\n", ex::to_string(cfg.mutation));
        ok = ok && !failure;
    }

    log << (ok ? "litmus: all expectations met\n" : "litmus: FAILED\n");
    return ok ? kOk : kCheckFailure;
}

void write_sweep_csv(const RunConfig& cfg, std::ostream& os)
{
    const auto cal = machine_for_sweep(cfg);
    write_comment_header(os, cfg, "sweep");
    write_calibration(os, cal);
    sim::write_csv(os, sim::sweep(sweep_config(cfg, cal.model)));
}

int cmd_sweep(const RunConfig& cfg, std::ostream& log)
{
    auto os = open_out(cfg, "sweep.csv");
    write_sweep_csv(cfg, os);
    log << fmt::format("sweep: wrote {}\n", (fs::path(cfg.out) / "sweep.csv").string());
    return kOk;
}

int cmd_trace(const RunConfig& cfg, std::ostream& log)
{
    const auto cal = machine_for_sweep(cfg);
    const auto sc = sweep_config(cfg, cal.model);
    const fs::path dir = fs::path(cfg.out) / "trace";
    fs::create_directories(dir);
    std::size_t files = 0;

    auto emit = [&](const std::string& name, const sim::Timeline& t) {
        std::ofstream os(dir / name);
        if (!os)
            throw std::runtime_error(fmt::format("cannot write '{}'", (dir / name).string()));
        write_comment_header(os, cfg, "trace");
        write_calibration(os, cal);
        t.write_trace(os);
        ++files;
    };

    for (double atoms : sc.atomsPerRank)
        for (auto [dims, ranks] : sc.layouts) {
            const auto shape =
                sim::analytic_shape({atoms, ranks, dims, sc.density, sc.cutoff, sc.ranksPerIsland});
            for (auto s : sc.schedules)
                emit(fmt::format("timeline_{:.0f}_{}r_{}d_{}.csv", atoms, ranks, dims, sim::to_string(s)),
                     sim::simulate_step(shape, s, sc.machine));
        }

    // The configured system itself: measured plan shape and one exchange event log.
    const dd::SimBox box{cfg.box, cfg.cutoff};
    const auto grid = dd::build_grid(box, cfg.ranks);
    const auto atoms = cfg.atomFile ? dd::load_atom_file(*cfg.atomFile)
                                    : dd::random_atoms(box, cfg.atomCount, cfg.seeds.front());
    const auto plan = dd::build_halo_zones(grid, atoms, cfg.exchange.bufLength);
    const auto islands = cfg.island_map();
    const auto shape = sim::shape_from_plan(plan, islands);
    for (auto s : sc.schedules)
        emit(fmt::format("timeline_system_{}.csv", sim::to_string(s)), sim::simulate_step(shape, s, sc.machine));

    std::vector<ex::Schedule> engines{ex::Schedule::Serialized, ex::Schedule::Fused};
    if (cfg.schedule)
        engines = {*cfg.schedule};
    for (auto s : engines) {
        pgas::WorldConfig wc;
        wc.nPEs = grid.total_ranks();
        wc.islands = islands;
        wc.mode = cfg.memoryModel;
        wc.seed = cfg.seeds.front();
        wc.aggressiveness = cfg.aggressiveness;
        pgas::World world(wc);
        auto ec = cfg.exchange;
        ec.mutation = s == ex::Schedule::Fused ? cfg.mutation : ex::Mutation::None;
        ex::HaloExchanger hx(world, plan, ec);
        hx.load_home_coords();
        const auto step = hx.run_step(s);
        std::ofstream os(dir / fmt::format("events_{}.jsonl", ex::to_string(s)));
        write_header(os, cfg, "trace");
        for (const auto& r : step.records)
            r.write_jsonl(os);
        ++files;
    }

    log << fmt::format("trace: wrote {} files to {}\n", files, dir.string());
    return kOk;
}

} // namespace halox::bench
