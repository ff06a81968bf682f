#pragma once

// Discrete-event timing model of one steady-state MD step under the
// serialized (host-driven, per-pulse) and fused (device-initiated) halo
// exchange schedules.

#include "halox/ddcore.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace halox::sim {

enum class Schedule { Serialized, Fused };
std::string_view to_string(Schedule s);

enum class LinkKind { Direct, Net };

/// Times in µs, bandwidths in GB/s, compute rates in ns per atom.
struct MachineModel {
    double launchLatency = 5.0;
    double eventApiLatency = 1.0;
    double directLinkLatency = 2.0;
    double directBandwidth = 400.0;
    double netLinkLatency = 5.0;
    double netBandwidth = 40.0;
    double mpiOverhead = 10.0;     // host-side cost per MPI message
    double computeRate = 1.7;      // local non-bonded work
    double nonLocalIntensity = 1.0;
    double packRate = 0.05;        // pack and unpack cost per atom
    double kernelFloor = 2.0;      // minimum duration of a kernel
    double updateCost = 3.0;
    double smContentionPenalty = 0.10;
    double otherPerStepCost = 35.0;
    double bytesPerAtom = 12.0;

    /// Throws std::invalid_argument on negative values or non-positive bandwidths.
    void validate() const;
    double latency(LinkKind k) const { return k == LinkKind::Direct ? directLinkLatency : netLinkLatency; }
    double bandwidth(LinkKind k) const { return k == LinkKind::Direct ? directBandwidth : netBandwidth; }
    /// Duration of moving n atoms over a link.
    double transfer(LinkKind k, double atoms) const;
};

struct PulseShape {
    double sendAtoms = 0.0;
    double independentAtoms = 0.0;
    LinkKind link = LinkKind::Direct;

    double dependent_atoms() const { return sendAtoms - independentAtoms; }
};

/// Per-rank communication shape of one step (worst rank for measured plans).
struct PlanShape {
    double homeAtoms = 0.0;
    double haloAtoms = 0.0;
    std::vector<PulseShape> pulses;
};

/// Worst-rank shape of a built plan; a pulse uses the network link when any
/// rank's pulse crosses an island boundary.
PlanShape shape_from_plan(const dd::PulsePlan& plan, const std::vector<int>& islands);

struct AnalyticSystem {
    double atomsPerRank = 11250.0;
    int ranks = 4;
    int dims = 1;                // decomposed dimensions
    double density = 100.0;      // atoms per nm^3
    double cutoff = 1.2;         // nm
    int ranksPerIsland = 4;
};

/// Domain counts for `dims` decomposed dimensions, balanced, larger factors on z then y then x.
IVec3 balanced_np(int ranks, int dims);

/// Expected shape of a uniform cubic system.
PlanShape analytic_shape(const AnalyticSystem& sys);

struct Interval {
    std::string stream; // host, local, nonlocal, update, prune
    std::string kind;
    int pulse = -1;
    double start = 0.0;
    double end = 0.0;
};

struct Timeline {
    Schedule schedule = Schedule::Serialized;
    std::vector<Interval> intervals; // sequential within each stream
    std::vector<Interval> detail;    // per-pulse activity inside fused kernels
    double otherPerStepCost = 0.0;

    double extent() const;
    std::vector<Interval> stream(const std::string& name) const;
    /// One line per interval: stream,kind,pulse,start,end.
    void write_trace(std::ostream& os) const;
};

Timeline simulate_step(const PlanShape& shape, Schedule schedule, const MachineModel& machine);

struct StepMetrics {
    double localWork = 0.0;
    double nonLocalWork = 0.0;
    double nonOverlap = 0.0;
    double timePerStep = 0.0;
};

/// localWork: local kernel interval. nonLocalWork: first pack start to last
/// unpack end. nonOverlap: last unpack end past local end, clamped at zero.
/// timePerStep: full extent plus the other per-step cost.
StepMetrics metrics(const Timeline& t);

// ---- sweeps ----

struct SweepConfig {
    std::vector<double> atomsPerRank{11250, 45000, 90000, 360000, 1440000};
    std::vector<std::pair<int, int>> layouts{{1, 4}, {1, 8}, {2, 16}, {3, 32}}; // (dims, ranks)
    std::vector<Schedule> schedules{Schedule::Serialized, Schedule::Fused};
    double density = 100.0;
    double cutoff = 1.2;
    int ranksPerIsland = 4;
    MachineModel machine{};
};

struct SweepRow {
    double atomsPerRank = 0.0;
    int ranks = 0;
    int dims = 0;
    Schedule schedule = Schedule::Serialized;
    int pulses = 0;
    StepMetrics m;
    double speedup = 1.0; // serialized timePerStep / this row's timePerStep
};

std::vector<SweepRow> sweep(const SweepConfig& cfg);
/// Header line then one row per config, fixed three-decimal formatting.
void write_csv(std::ostream& os, const std::vector<SweepRow>& rows);
inline constexpr const char* kCsvHeader =
    "atoms_per_rank,ranks,dims,schedule,pulses,local_work_us,nonlocal_work_us,non_overlap_us,time_per_step_us,"
    "speedup_vs_serialized";

// ---- calibration ----

enum class Metric { LocalWork, NonLocalWork, NonOverlap, TimePerStep };
std::string_view to_string(Metric m);

struct CalibrationTarget {
    AnalyticSystem system;
    Schedule schedule = Schedule::Serialized;
    Metric metric = Metric::NonLocalWork;
    double value = 0.0;
};

/// The four anchor observations: 11.25k atoms/rank on 4 ranks in 1D
/// (serialized 116 µs and fused 64 µs non-local work) and 90k atoms/rank
/// (local and fused non-local work both 152 µs).
std::vector<CalibrationTarget> default_targets();

struct CalibrationResult {
    MachineModel model;
    std::vector<double> residuals; // model minus target, µs
    std::vector<double> predicted;
    int iterations = 0;
    bool converged = false;
};

/// Least-squares fit of computeRate, nonLocalIntensity, directLinkLatency and
/// mpiOverhead, starting from `start`; other fields are kept.
CalibrationResult calibrate(const std::vector<CalibrationTarget>& targets, const MachineModel& start = {});

double evaluate(const CalibrationTarget& t, const MachineModel& m);

} // namespace halox::sim
