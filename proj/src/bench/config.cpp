#include "halox/bench.hpp"

#include <fmt/format.h>

#include <fstream>
#include <map>
#include <set>

namespace halox::bench {

using nlohmann::json;

namespace {

struct MachineField {
    const char* key;
    double sim::MachineModel::*member;
};

const MachineField kMachineFields[] = {
    {"launch_latency", &sim::MachineModel::launchLatency},
    {"event_api_latency", &sim::MachineModel::eventApiLatency},
    {"direct_link_latency", &sim::MachineModel::directLinkLatency},
    {"direct_bandwidth", &sim::MachineModel::directBandwidth},
    {"net_link_latency", &sim::MachineModel::netLinkLatency},
    {"net_bandwidth", &sim::MachineModel::netBandwidth},
    {"mpi_overhead", &sim::MachineModel::mpiOverhead},
    {"compute_rate", &sim::MachineModel::computeRate},
    {"nonlocal_intensity", &sim::MachineModel::nonLocalIntensity},
    {"pack_rate", &sim::MachineModel::packRate},
    {"kernel_floor", &sim::MachineModel::kernelFloor},
    {"update_cost", &sim::MachineModel::updateCost},
    {"sm_contention_penalty", &sim::MachineModel::smContentionPenalty},
    {"other_per_step_cost", &sim::MachineModel::otherPerStepCost},
    {"bytes_per_atom", &sim::MachineModel::bytesPerAtom},
};

void check_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed)
{
    if (!obj.is_object())
        throw ConfigError(fmt::format("{} must be an object", where));
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [k, v] : obj.items())
        if (!ok.count(k))
            throw ConfigError(fmt::format("unknown key '{}' in {}", k, where));
}

template <typename T>
T get(const json& obj, const char* key, const std::string& where)
{
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(fmt::format("{}.{}: {}", where, key, e.what()));
    }
}

double positive(double v, const char* what)
{
    if (!(v > 0.0))
        throw ConfigError(fmt::format("{} must be positive", what));
    return v;
}

} // namespace

sim::MachineModel RunConfig::machine_model() const
{
    sim::MachineModel m;
    for (const auto& f : kMachineFields)
        if (machine.contains(f.key))
            m.*f.member = machine.at(f.key).get<double>();
    return m;
}

std::vector<int> RunConfig::island_map() const
{
    return islands ? *islands : ex::consecutive_islands(ranks, ranksPerIsland);
}

RunConfig parse_config(const json& doc)
{
    check_keys(doc, "config",
               {"schema_version", "box", "cutoff", "atoms", "ranks", "ranks_per_island", "islands", "schedule",
                "memory_model", "aggressiveness", "exchange", "mutation", "seeds", "litmus_trials", "mutation_seeds",
                "calibrate", "machine", "sweep", "out"});
    if (!doc.contains("schema_version"))
        throw ConfigError("config.schema_version is required");
    if (get<int>(doc, "schema_version", "config") != kSchemaVersion)
        throw ConfigError(fmt::format("unsupported schema_version (expected {})", kSchemaVersion));

    RunConfig c;
    if (doc.contains("box")) {
        const auto b = get<std::vector<double>>(doc, "box", "config");
        if (b.size() != 3)
            throw ConfigError("config.box must have three lengths");
        for (int d = 0; d < 3; ++d)
            c.box[d] = positive(b[d], "box length");
    }
    if (doc.contains("cutoff"))
        c.cutoff = positive(get<double>(doc, "cutoff", "config"), "cutoff");
    if (doc.contains("atoms")) {
        const auto& a = doc.at("atoms");
        check_keys(a, "config.atoms", {"count", "file"});
        if (a.contains("count") == a.contains("file"))
            throw ConfigError("config.atoms needs exactly one of 'count' or 'file'");
        if (a.contains("count"))
            c.atomCount = get<std::size_t>(a, "count", "config.atoms");
        else
            c.atomFile = get<std::string>(a, "file", "config.atoms");
    }
    if (doc.contains("ranks")) {
        c.ranks = get<int>(doc, "ranks", "config");
        if (c.ranks < 1)
            throw ConfigError("config.ranks must be at least 1");
    }
    if (doc.contains("ranks_per_island")) {
        c.ranksPerIsland = get<int>(doc, "ranks_per_island", "config");
        if (c.ranksPerIsland < 1)
            throw ConfigError("config.ranks_per_island must be at least 1");
    }
    if (doc.contains("islands")) {
        c.islands = get<std::vector<int>>(doc, "islands", "config");
        if (static_cast<int>(c.islands->size()) != c.ranks)
            throw ConfigError("config.islands must list one island per rank");
    }
    if (doc.contains("schedule")) {
        const auto s = get<std::string>(doc, "schedule", "config");
        if (s != "both") {
            try {
                c.schedule = ex::parse_schedule(s);
            } catch (const std::invalid_argument& e) {
                throw ConfigError(e.what());
            }
        }
    }
    if (doc.contains("memory_model")) {
        const auto m = get<std::string>(doc, "memory_model", "config");
        if (m == "sequential")
            c.memoryModel = pgas::MemoryMode::Sequential;
        else if (m == "weak")
            c.memoryModel = pgas::MemoryMode::WeakAdversary;
        else
            throw ConfigError("config.memory_model must be 'sequential' or 'weak'");
    }
    if (doc.contains("aggressiveness")) {
        c.aggressiveness = get<double>(doc, "aggressiveness", "config");
        if (!(c.aggressiveness >= 0.0 && c.aggressiveness <= 1.0))
            throw ConfigError("config.aggressiveness must lie in [0, 1]");
    }
    if (doc.contains("exchange")) {
        const auto& e = doc.at("exchange");
        check_keys(e, "config.exchange", {"buf_length", "staged_blocks", "workers_per_block", "poison_halo"});
        if (e.contains("buf_length"))
            c.exchange.bufLength = get<std::size_t>(e, "buf_length", "config.exchange");
        if (e.contains("staged_blocks"))
            c.exchange.stagedBlocks = get<int>(e, "staged_blocks", "config.exchange");
        if (e.contains("workers_per_block"))
            c.exchange.workersPerBlock = get<int>(e, "workers_per_block", "config.exchange");
        if (e.contains("poison_halo"))
            c.exchange.poisonHalo = get<bool>(e, "poison_halo", "config.exchange");
        if (c.exchange.bufLength == 0 || c.exchange.stagedBlocks < 1 || c.exchange.workersPerBlock < 1)
            throw ConfigError("config.exchange sizes must be positive");
    }
    if (doc.contains("mutation")) {
        try {
            c.mutation = ex::parse_mutation(get<std::string>(doc, "mutation", "config"));
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
    }
    if (doc.contains("seeds")) {
        c.seeds = get<std::vector<std::uint64_t>>(doc, "seeds", "config");
        if (c.seeds.empty())
            throw ConfigError("config.seeds must not be empty");
    }
    if (doc.contains("litmus_trials")) {
        c.litmusTrials = get<int>(doc, "litmus_trials", "config");
        if (c.litmusTrials < 1)
            throw ConfigError("config.litmus_trials must be at least 1");
    }
    if (doc.contains("mutation_seeds")) {
        c.mutationSeeds = get<int>(doc, "mutation_seeds", "config");
        if (c.mutationSeeds < 1)
            throw ConfigError("config.mutation_seeds must be at least 1");
    }
    if (doc.contains("calibrate"))
        c.calibrate = get<bool>(doc, "calibrate", "config");
    if (doc.contains("machine")) {
        const auto& m = doc.at("machine");
        if (!m.is_object())
            throw ConfigError("config.machine must be an object");
        for (const auto& [k, v] : m.items()) {
            const bool known = std::any_of(std::begin(kMachineFields), std::end(kMachineFields),
                                           [&](const MachineField& f) { return k == f.key; });
            if (!known)
                throw ConfigError(fmt::format("unknown key '{}' in config.machine", k));
            if (!v.is_number())
                throw ConfigError(fmt::format("config.machine.{} must be a number", k));
        }
        c.machine = m;
        try {
            c.machine_model().validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(fmt::format("config.machine: {}", e.what()));
        }
    }
    if (doc.contains("sweep")) {
        const auto& s = doc.at("sweep");
        check_keys(s, "config.sweep", {"atoms_per_rank", "layouts", "density", "cutoff"});
        if (s.contains("atoms_per_rank"))
            c.sweep.atomsPerRank = get<std::vector<double>>(s, "atoms_per_rank", "config.sweep");
        if (s.contains("layouts")) {
            c.sweep.layouts.clear();
            for (const auto& l : get<std::vector<std::vector<int>>>(s, "layouts", "config.sweep")) {
                if (l.size() != 2 || l[0] < 1 || l[0] > 3 || l[1] < 2)
                    throw ConfigError("config.sweep.layouts entries are [dims 1..3, ranks >= 2]");
                c.sweep.layouts.emplace_back(l[0], l[1]);
            }
        }
        if (s.contains("density"))
            c.sweep.density = positive(get<double>(s, "density", "config.sweep"), "sweep density");
        if (s.contains("cutoff"))
            c.sweep.cutoff = positive(get<double>(s, "cutoff", "config.sweep"), "sweep cutoff");
        for (double a : c.sweep.atomsPerRank)
            positive(a, "sweep atoms_per_rank");
    }
    if (doc.contains("out"))
        c.out = get<std::string>(doc, "out", "config");
    return c;
}

RunConfig load_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError(fmt::format("cannot open config '{}'", path));
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(fmt::format("config '{}' is not valid JSON: {}", path, e.what()));
    }
    return parse_config(doc);
}

nlohmann::ordered_json to_json(const RunConfig& c)
{
    nlohmann::ordered_json j;
    j["schema_version"] = kSchemaVersion;
    j["box"] = {c.box[0], c.box[1], c.box[2]};
    j["cutoff"] = c.cutoff;
    if (c.atomFile)
        j["atoms"] = {{"file", *c.atomFile}};
    else
        j["atoms"] = {{"count", c.atomCount}};
    j["ranks"] = c.ranks;
    j["ranks_per_island"] = c.ranksPerIsland;
    j["islands"] = c.island_map();
    j["schedule"] = c.schedule ? std::string(ex::to_string(*c.schedule)) : "both";
    j["memory_model"] = std::string(pgas::to_string(c.memoryModel));
    j["aggressiveness"] = c.aggressiveness;
    j["exchange"] = {{"buf_length", c.exchange.bufLength},
                     {"staged_blocks", c.exchange.stagedBlocks},
                     {"workers_per_block", c.exchange.workersPerBlock},
                     {"poison_halo", c.exchange.poisonHalo}};
    j["mutation"] = std::string(ex::to_string(c.mutation));
    j["seeds"] = c.seeds;
    j["litmus_trials"] = c.litmusTrials;
    j["mutation_seeds"] = c.mutationSeeds;
    j["calibrate"] = c.calibrate;
    const auto m = c.machine_model();
    nlohmann::ordered_json mj;
    for (const auto& f : kMachineFields)
        mj[f.key] = m.*f.member;
    j["machine"] = mj;
    nlohmann::ordered_json layouts = nlohmann::ordered_json::array();
    for (auto [d, r] : c.sweep.layouts)
        layouts.push_back({d, r});
    j["sweep"] = {{"atoms_per_rank", c.sweep.atomsPerRank},
                  {"layouts", layouts},
                  {"density", c.sweep.density},
                  {"cutoff", c.sweep.cutoff}};
    j["out"] = c.out;
    return j;
}

} // namespace halox::bench
