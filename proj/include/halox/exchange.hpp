#pragma once

// Halo-exchange engines on the simulated PGAS machine.
//
// Serialized engine: one context per rank, pulses strictly one after another
// with a completion wait, quiet and global barrier between them.
// Fused engine: one cooperative launch per rank spawning task blocks for all
// pulses at once. Independent entries are packed and shipped immediately,
// dependent entries wait on the signals of the pulses that delivered them, and
// only the last block of a pulse notifies the receiver.

#include "halox/ddcore.hpp"
#include "halox/pgas.hpp"

#include <atomic>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace halox::ex {

enum class Schedule { Serialized, Fused };
enum class Transport { Direct, Staged };

/// Protocol fault injection.
enum class Mutation {
    None,
    DropPackWait,             // dependent entries packed without waiting on predecessor signals
    RelaxedNotify,            // direct notifications use relaxed stores despite data writes
    SkipDepMgmtWait,          // force forwarding does not wait for later pulses to unpack
    ImmediatePredecessorOnly, // dependent pack waits only on the immediately preceding pulse
};

std::string_view to_string(Schedule s);
std::string_view to_string(Transport t);
std::string_view to_string(Mutation m);
Schedule parse_schedule(std::string_view s);
Mutation parse_mutation(std::string_view s);

/// Bit pattern written into halo slots before they can legitimately hold data.
inline constexpr std::uint64_t kSentinelBits = 0x7FF8DEADBEEF0000ull;
double sentinel();
bool is_sentinel(double v);
bool has_sentinel(const Vec3& v);

struct ExchangeConfig {
    std::size_t bufLength = dd::kDefaultBufLength;
    int stagedBlocks = 2;    // fixed block count for staged pulses
    int workersPerBlock = 2; // cooperating workers per block
    Mutation mutation = Mutation::None;
    bool poisonHalo = true;
};

/// Integer-valued synthetic force of one local copy of an atom.
Vec3 synthetic_force(std::int64_t globalId, int rank);

struct StepResult {
    std::vector<pgas::ExecutionRecord> records; // one per world run
    std::size_t sentinelLeaks = 0;
};

class HaloExchanger {
public:
    /// world must have one PE per rank of the plan.
    HaloExchanger(pgas::World& world, const dd::PulsePlan& plan, ExchangeConfig cfg = {});

    const dd::PulsePlan& plan() const { return plan_; }
    const ExchangeConfig& config() const { return cfg_; }
    int ranks() const { return nRanks_; }
    int total_pulses() const { return nPulses_; }

    Transport transport(int rank, int pulse) const;
    int blocks(int rank, int pulse) const;

    /// Writes home coordinates from the plan and poisons every halo slot.
    void load_home_coords();
    /// Sets every local force (home and halo) of a rank.
    void set_forces(int rank, const std::vector<Vec3>& forces);
    /// Fills every rank's local forces with synthetic_force of the local copy.
    void load_synthetic_forces();

    std::vector<Vec3> coords(int rank) const;
    std::vector<Vec3> forces(int rank) const;

    pgas::ExecutionRecord coord_exchange(Schedule s);
    pgas::ExecutionRecord force_exchange(Schedule s, bool accumulate = true);

    /// Coordinate exchange, synthetic compute, force exchange, integration note.
    StepResult run_step(Schedule s);

    /// Sentinel values observed in packed, forwarded or consumed data since construction.
    std::size_t sentinel_leaks() const { return leaks_.load(); }

    /// Names of the arrays whose stores are receiver notifications.
    std::vector<std::string> notification_arrays() const;

private:
    struct RankBuffers;

    std::vector<pgas::Program> serialized_coord_programs();
    std::vector<pgas::Program> serialized_force_programs(bool accumulate);
    std::vector<pgas::Program> fused_coord_programs();
    std::vector<pgas::Program> fused_force_programs(bool accumulate, bool afterCompute);
    std::vector<pgas::Program> compute_programs(bool streamOrdered);

    void coord_block(pgas::Pe& pe, int rank, int pulse, int block, int worker);
    void pack_with_deps(pgas::Pe& pe, int rank, int pulse, int block, int worker, std::size_t begin,
                        std::size_t end);
    void sync_and_comm_data(pgas::Pe& pe, int rank, int pulse, int block, int worker);
    void force_block(pgas::Pe& pe, int rank, int pulse, int block, int worker, bool accumulate);
    void sync_and_comm_dep_mgmt(pgas::Pe& pe, int rank, int pulse, int block, int worker);
    void send_initial_forces(pgas::Pe& pe, int rank);
    void compute(pgas::Pe& pe, int rank, bool streamOrdered);

    std::vector<std::pair<std::size_t, std::size_t>> block_chunks(int rank, int pulse, int block) const;
    void check_leaks(pgas::Pe& pe, const std::vector<Vec3>& values, const char* where);
    void begin_run();

    pgas::World& world_;
    dd::PulsePlan plan_;
    ExchangeConfig cfg_;
    int nRanks_;
    int nPulses_;

    pgas::SymmetricBuffer coordsBuf_;
    pgas::SymmetricBuffer forcesBuf_;
    pgas::SymmetricBuffer packBuf_;   // staged coordinate packing
    pgas::SymmetricBuffer recvBufF_;  // staged force arrival
    std::vector<std::size_t> pulseBufOffset_;
    pgas::SignalArray coordSig_;
    pgas::SignalArray forceSig_;
    pgas::SignalArray unpackDone_;
    pgas::SignalArray blockCounters_; // [0, T) coordinates, [T, 2T) forces
    pgas::SignalArray streamSig_;     // 0: coordinate blocks finished, 1: compute finished
    std::vector<std::vector<std::vector<pgas::BarrierId>>> blockBarrier_; // [rank][pulse][block]

    std::uint64_t coordSigVal_ = 0;
    std::uint64_t forceSigVal_ = 0;
    std::atomic<std::size_t> leaks_{0};
};

// ---- oracles ----

struct HaloEntry {
    std::int64_t globalId = 0;
    Vec3 position{};
};

/// Every non-home atom inside the backward (eighth-shell) import zone of each
/// rank, with its periodic image shift applied. Sorted by global id.
std::vector<std::vector<HaloEntry>> direct_gather_oracle(const dd::DDGrid& grid, const dd::AtomSet& atoms);

struct ForceContribution {
    std::int64_t globalId = 0;
    Vec3 force{};
};

/// Sum of all contributions per global id.
std::map<std::int64_t, Vec3> direct_scatter_oracle(const std::vector<ForceContribution>& contributions);

/// Every local copy on every rank with its synthetic force.
std::vector<ForceContribution> synthetic_contributions(const dd::PulsePlan& plan);

struct CheckOutcome {
    bool ok = true;
    std::size_t mismatches = 0;
    std::string firstMismatch;
};

/// Compares the exchanged halo of every rank with the oracle, bit for bit.
CheckOutcome compare_halo(const HaloExchanger& ex, const std::vector<std::vector<HaloEntry>>& oracle);
/// Compares home forces of every rank with per-atom oracle totals.
CheckOutcome compare_home_forces(const HaloExchanger& ex, const std::map<std::int64_t, Vec3>& totals);

/// Number of receiver notifications (signal stores and put-with-signal) in a record.
std::size_t count_notifications(const pgas::ExecutionRecord& rec, const std::vector<std::string>& arrays);

/// Island map with `perIsland` consecutive ranks per island.
std::vector<int> consecutive_islands(int ranks, int perIsland);

// ---- verification suite ----

struct VerifyOptions {
    dd::SimBox box{{10.0, 10.0, 10.0}, 1.0};
    int ranks = 8;
    std::size_t atoms = 2000;
    int ranksPerIsland = 4;
    std::vector<int> islands; // explicit island map; empty uses ranksPerIsland
    std::vector<std::uint64_t> seeds{1, 2, 3, 4};
    pgas::MemoryMode mode = pgas::MemoryMode::WeakAdversary;
    double aggressiveness = 0.5;
    Mutation mutation = Mutation::None;
    ExchangeConfig exchange{};
    const dd::AtomSet* atomsOverride = nullptr; // atoms from a file instead of random generation
};

struct VerifyRecord {
    std::string check;
    bool pass = true;
    std::uint64_t seed = 0;
    IVec3 np{1, 1, 1};
    std::size_t atoms = 0;
    std::size_t count = 0;
    std::string detail;
};

/// Runs oracle, schedule equivalence, dependency safety, conservation,
/// notification and liveness checks for every seed.
std::vector<VerifyRecord> verify(const VerifyOptions& opt);
void write_jsonl(std::ostream& os, const std::vector<VerifyRecord>& recs);

} // namespace halox::ex
