#pragma once

// Run configuration and the verify / litmus / sweep / trace commands.

#include "halox/ddcore.hpp"
#include "halox/exchange.hpp"
#include "halox/pgas.hpp"
#include "halox/simtime.hpp"

#include "json.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace halox::bench {

inline constexpr int kSchemaVersion = 1;

enum ExitCode { kOk = 0, kCheckFailure = 1, kConfigError = 2, kInternalError = 3 };

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct SweepSpec {
    std::vector<double> atomsPerRank{11250, 45000, 90000, 360000, 1440000};
    std::vector<std::pair<int, int>> layouts{{1, 4}, {1, 8}, {2, 16}, {3, 32}};
    double density = 100.0;
    double cutoff = 1.2;
};

struct RunConfig {
    Vec3 box{10.0, 10.0, 10.0};
    double cutoff = 1.0;
    std::size_t atomCount = 2000;
    std::optional<std::string> atomFile;
    int ranks = 8;
    int ranksPerIsland = 4;
    std::optional<std::vector<int>> islands; // explicit map overrides ranksPerIsland
    std::optional<ex::Schedule> schedule;    // unset: both schedules
    pgas::MemoryMode memoryModel = pgas::MemoryMode::WeakAdversary;
    double aggressiveness = 0.5;
    ex::ExchangeConfig exchange{};
    ex::Mutation mutation = ex::Mutation::None;
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5, 6, 7, 8};
    int litmusTrials = 1000;   // trials per litmus test and seed
    int mutationSeeds = 50;    // seeds per exchange mutation in the litmus command
    bool calibrate = true;     // fit the machine model to the anchor points before sweeping
    nlohmann::json machine = nlohmann::json::object(); // machine-model overrides
    SweepSpec sweep{};
    std::string out = "out";

    /// Machine model with overrides applied (before calibration).
    sim::MachineModel machine_model() const;
    std::vector<int> island_map() const;
};

/// Parses and validates a config document. Unknown keys, wrong types and
/// out-of-range values raise ConfigError.
RunConfig parse_config(const nlohmann::json& doc);
RunConfig load_config(const std::string& path);
/// Fully resolved config including every default.
nlohmann::ordered_json to_json(const RunConfig& cfg);

/// Each command writes into cfg.out, logs a summary to `log` and returns an ExitCode.
int cmd_verify(const RunConfig& cfg, std::ostream& log);
int cmd_litmus(const RunConfig& cfg, std::ostream& log);
int cmd_sweep(const RunConfig& cfg, std::ostream& log);
int cmd_trace(const RunConfig& cfg, std::ostream& log);

/// Sweep CSV with the resolved config echoed in leading '#' lines.
void write_sweep_csv(const RunConfig& cfg, std::ostream& os);

} // namespace halox::bench
