#pragma once

// Simulated partitioned-global-address-space runtime.
//
// A World owns the memory of every PE: symmetric buffers, signal arrays and
// block barriers. Programs run as contexts bound to one PE and touch shared
// state only through the Pe handle. Two regimes share one semantics contract:
// a deterministic seeded interleaving (one context runs at a time, switch
// points at every operation) and free-running concurrent threads.
//
// Memory model. In Sequential mode every write is visible as soon as it is
// issued. In WeakAdversary mode a plain write to another PE's memory may be
// held in the writer PE's store buffer; the buffer drains (in seeded random
// order) on the writer's next system-scope release operation or quiet.
// put_with_signal delivers its payload before its signal in every mode.
// Writes to the PE's own memory and atomics are immediately visible.

#include "halox/vec3.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace halox::pgas {

class PgasError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class CollectiveMismatch : public PgasError {
public:
    using PgasError::PgasError;
};

class OutOfBounds : public PgasError {
public:
    using PgasError::PgasError;
};

class SignalRegression : public PgasError {
public:
    using PgasError::PgasError;
};

class NoDirectAccess : public PgasError {
public:
    using PgasError::PgasError;
};

struct BlockedWaiter {
    int context = 0;
    int pe = 0;
    std::string label;
    std::string waitingFor;
};

class SimDeadlock : public PgasError {
public:
    SimDeadlock(const std::string& what, std::vector<BlockedWaiter> waiters)
        : PgasError(what), waiters_(std::move(waiters))
    {
    }
    const std::vector<BlockedWaiter>& waiters() const { return waiters_; }

private:
    std::vector<BlockedWaiter> waiters_;
};

enum class ElemKind { Real3, Real, Integer };
enum class MemoryMode { Sequential, WeakAdversary };
enum class Ordering { Release, Relaxed };
enum class Regime { Deterministic, Concurrent };

std::string_view to_string(MemoryMode m);
std::string_view to_string(Ordering o);
std::string_view to_string(Regime r);

using Word = std::uint64_t;

struct SymmetricBuffer {
    std::uint32_t handle = 0;
    std::size_t length = 0; // elements
    ElemKind kind = ElemKind::Real;

    std::size_t words_per_elem() const { return kind == ElemKind::Real3 ? 3 : 1; }
};

/// Symmetric array of 64-bit signal counters, one instance per PE.
struct SignalArray {
    std::uint32_t handle = 0;
    std::size_t slots = 0;
};

struct BarrierId {
    std::uint32_t id = 0;
};

/// Direct load/store reference to a peer's instance of a buffer. Only
/// obtainable for PEs in the caller's island.
struct PeerRef {
    SymmetricBuffer buf;
    int pe = 0;
};

struct WorldConfig {
    int nPEs = 1;
    std::vector<int> islands; // island id per PE; empty puts every PE in island 0
    MemoryMode mode = MemoryMode::Sequential;
    Regime regime = Regime::Deterministic;
    std::uint64_t seed = 0;
    /// Probability that an individual plain remote write is held in the store buffer.
    double aggressiveness = 0.5;
    /// Per switch point probability that one in-flight put_with_signal is delivered.
    double deliveryProbability = 0.5;
    bool recordEvents = true;
};

enum class EventKind {
    Read,
    Write,
    Put,
    PutSignal,
    Deliver,
    Get,
    SignalStore,
    SignalWait,
    AtomicInc,
    AtomicAdd,
    Flush,
    Quiet,
    Barrier,
    Note,
};

std::string_view to_string(EventKind k);

struct Event {
    EventKind kind = EventKind::Note;
    int pe = 0;
    int context = 0;
    std::uint64_t time = 0; // logical clock, one tick per event
    int target = -1;        // target PE, -1 if none
    std::string object;     // buffer or signal array name
    std::uint64_t slot = 0; // element offset or signal slot
    std::uint64_t value = 0;
    std::uint64_t count = 0;
    std::string detail;
};

struct ExecutionRecord {
    std::vector<Event> events;
    std::uint64_t switches = 0;
    std::size_t contexts = 0;

    /// One JSON object per line: kind, pe, ctx, t, target, object, slot, value, count, detail.
    void write_jsonl(std::ostream& os) const;
    std::size_t count(EventKind k) const;
};

class World;

/// Per-context handle. Every operation is a scheduling point.
class Pe {
public:
    int id() const { return pe_; }
    int context() const { return ctx_; }
    int n_pes() const;
    const std::string& label() const;

    std::optional<PeerRef> peer_ref(const SymmetricBuffer& buf, int target) const;

    // Own-memory access.
    std::vector<Vec3> read_real3(const SymmetricBuffer& buf, std::size_t offset, std::size_t count);
    std::vector<Vec3> gather_real3(const SymmetricBuffer& buf, std::span<const std::int32_t> indices);
    void write_real3(const SymmetricBuffer& buf, std::size_t offset, std::span<const Vec3> values);
    void scatter_real3(const SymmetricBuffer& buf, std::span<const std::int32_t> indices,
                       std::span<const Vec3> values);
    /// Atomic component-wise add of values into buf[indices[i]].
    void atomic_add_real3(const SymmetricBuffer& buf, std::span<const std::int32_t> indices,
                          std::span<const Vec3> values);
    std::vector<double> read_real(const SymmetricBuffer& buf, std::size_t offset, std::size_t count);
    void write_real(const SymmetricBuffer& buf, std::size_t offset, std::span<const double> values);

    // Direct peer access (load/store through a PeerRef).
    void write_direct(const PeerRef& ref, std::size_t offset, std::span<const Vec3> values);
    std::vector<Vec3> read_direct(const PeerRef& ref, std::size_t offset, std::size_t count);
    void write_direct_real(const PeerRef& ref, std::size_t offset, std::span<const double> values);
    std::vector<double> read_direct_real(const PeerRef& ref, std::size_t offset, std::size_t count);

    // One-sided transfers.
    void put(const SymmetricBuffer& dest, int target, std::size_t offset, std::span<const Vec3> src);
    void put_real(const SymmetricBuffer& dest, int target, std::size_t offset, std::span<const double> src);
    void put_with_signal(const SymmetricBuffer& dest, int target, std::size_t offset, std::span<const Vec3> src,
                         const SignalArray& sig, std::size_t slot, std::uint64_t value);
    void put_with_signal_real(const SymmetricBuffer& dest, int target, std::size_t offset,
                              std::span<const double> src, const SignalArray& sig, std::size_t slot,
                              std::uint64_t value);
    /// Blocking bulk read of another PE's memory.
    std::vector<Vec3> get(const SymmetricBuffer& src, int target, std::size_t offset, std::size_t count);
    std::vector<double> get_real(const SymmetricBuffer& src, int target, std::size_t offset, std::size_t count);

    // Signals.
    void signal_store(const SignalArray& sig, std::size_t slot, int target, std::uint64_t value, Ordering order);
    /// Acquire-waits until the local counter reaches at least value.
    void signal_wait_until(const SignalArray& sig, std::size_t slot, std::uint64_t value);
    std::uint64_t signal_read(const SignalArray& sig, std::size_t slot);
    /// Device-scope release increment of a local counter; returns the previous value.
    /// Orders the caller's writes for later observers on this PE but does not drain
    /// the store buffer to other PEs.
    std::uint64_t atomic_inc_release(const SignalArray& counters, std::size_t slot);

    void quiet();
    void barrier_all();
    void barrier_wait(BarrierId b);

    /// Free-form annotation in the execution record.
    void note(std::string detail, std::uint64_t value = 0);

private:
    friend class World;
    Pe(World& w, int pe, int ctx) : world_(&w), pe_(pe), ctx_(ctx) {}
    World* world_;
    int pe_;
    int ctx_;
};

struct Program {
    int pe = 0;
    std::string label;
    std::function<void(Pe&)> body;
};

class World {
public:
    explicit World(WorldConfig cfg);
    ~World();
    World(const World&) = delete;
    World& operator=(const World&) = delete;

    const WorldConfig& config() const;
    int n_pes() const;
    int island_of(int pe) const;
    bool same_island(int a, int b) const { return island_of(a) == island_of(b); }

    /// Collective allocation. lengthPerPe must hold one identical entry per PE.
    SymmetricBuffer alloc_symmetric(std::span<const std::size_t> lengthPerPe, ElemKind kind, std::string name);
    SymmetricBuffer alloc_symmetric(std::size_t length, ElemKind kind, std::string name);
    SignalArray alloc_signals(std::size_t slots, std::string name);
    /// Barrier for `participants` contexts, valid across runs.
    BarrierId create_barrier(int participants);

    const std::string& name_of(const SymmetricBuffer& buf) const;
    const std::string& name_of(const SignalArray& sig) const;

    /// Host access between runs; bypasses the memory model.
    std::vector<Vec3> host_read_real3(const SymmetricBuffer& buf, int pe, std::size_t offset, std::size_t count) const;
    void host_write_real3(const SymmetricBuffer& buf, int pe, std::size_t offset, std::span<const Vec3> values);
    std::vector<double> host_read_real(const SymmetricBuffer& buf, int pe, std::size_t offset, std::size_t count) const;
    void host_write_real(const SymmetricBuffer& buf, int pe, std::size_t offset, std::span<const double> values);
    std::uint64_t host_signal(const SignalArray& sig, int pe, std::size_t slot) const;
    /// Resets counters; only for arrays used as per-launch completion counters.
    void host_reset_counters(const SignalArray& sig);

    /// Host-side direct reference query, same island rule as Pe::peer_ref.
    std::optional<PeerRef> peer_ref(const SymmetricBuffer& buf, int from, int target) const;

    /// Runs the programs to completion. All buffered writes and in-flight
    /// messages are completed when the run ends. Throws SimDeadlock when every
    /// live context is blocked and nothing is in flight, and rethrows the
    /// first exception raised by a program.
    ExecutionRecord run(std::vector<Program> programs);

    /// Re-seeds the scheduler and adversary for subsequent runs.
    void reseed(std::uint64_t seed);

    struct Impl;

private:
    friend class Pe;
    std::unique_ptr<Impl> impl_;
};

/// Convenience: builds a world and runs one program per PE.
ExecutionRecord run_world(const WorldConfig& cfg, std::vector<std::function<void(Pe&)>> perPe);

} // namespace halox::pgas
