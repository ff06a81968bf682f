#include "halox/exchange.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <stdexcept>

namespace halox::ex {

using pgas::Ordering;
using pgas::Pe;
using pgas::Program;

std::string_view to_string(Schedule s) { return s == Schedule::Serialized ? "serialized" : "fused"; }

std::string_view to_string(Transport t) { return t == Transport::Direct ? "direct" : "staged"; }

std::string_view to_string(Mutation m)
{
    switch (m) {
    case Mutation::None: return "none";
    case Mutation::DropPackWait: return "drop-pack-wait";
    case Mutation::RelaxedNotify: return "relaxed-notify";
    case Mutation::SkipDepMgmtWait: return "skip-depmgmt-wait";
    case Mutation::ImmediatePredecessorOnly: return "immediate-predecessor-only";
    }
    return "unknown";
}

Schedule parse_schedule(std::string_view s)
{
    if (s == "serialized")
        return Schedule::Serialized;
    if (s == "fused")
        return Schedule::Fused;
    throw std::invalid_argument(fmt::format("unknown schedule '{}'", s));
}

Mutation parse_mutation(std::string_view s)
{
    for (Mutation m : {Mutation::None, Mutation::DropPackWait, Mutation::RelaxedNotify, Mutation::SkipDepMgmtWait,
                       Mutation::ImmediatePredecessorOnly})
        if (s == to_string(m))
            return m;
    throw std::invalid_argument(fmt::format("unknown mutation '{}'", s));
}

double sentinel() { return std::bit_cast<double>(kSentinelBits); }

bool is_sentinel(double v) { return std::bit_cast<std::uint64_t>(v) == kSentinelBits; }

bool has_sentinel(const Vec3& v) { return is_sentinel(v[0]) || is_sentinel(v[1]) || is_sentinel(v[2]); }

Vec3 synthetic_force(std::int64_t globalId, int rank)
{
    std::uint64_t h = static_cast<std::uint64_t>(globalId) * 0x9E3779B97F4A7C15ull +
                      static_cast<std::uint64_t>(rank + 1) * 0xC2B2AE3D27D4EB4Full;
    h ^= h >> 29;
    Vec3 f;
    for (int d = 0; d < 3; ++d)
        f[d] = static_cast<double>(static_cast<int>((h >> (16 * d)) % 21) - 10);
    return f;
}

std::vector<int> consecutive_islands(int ranks, int perIsland)
{
    if (perIsland < 1)
        throw std::invalid_argument("ranks per island must be positive");
    std::vector<int> islands(ranks);
    for (int r = 0; r < ranks; ++r)
        islands[r] = r / perIsland;
    return islands;
}

HaloExchanger::HaloExchanger(pgas::World& world, const dd::PulsePlan& plan, ExchangeConfig cfg)
    : world_(world), plan_(plan), cfg_(cfg), nRanks_(plan.grid.total_ranks()), nPulses_(plan.total_pulses())
{
    if (world_.n_pes() != nRanks_)
        throw std::invalid_argument(
            fmt::format("world has {} PEs but the plan has {} ranks", world_.n_pes(), nRanks_));
    if (cfg_.bufLength == 0 || cfg_.stagedBlocks < 1 || cfg_.workersPerBlock < 1)
        throw std::invalid_argument("bufLength, stagedBlocks and workersPerBlock must be positive");

    std::size_t maxTotal = 1;
    for (const auto& l : plan_.ranks)
        maxTotal = std::max(maxTotal, l.total_count());
    pulseBufOffset_.assign(nPulses_ + 1, 0);
    for (int p = 0; p < nPulses_; ++p) {
        std::size_t widest = 0;
        for (const auto& l : plan_.ranks)
            widest = std::max(widest, l.pulses[p].sendSize);
        pulseBufOffset_[p + 1] = pulseBufOffset_[p] + widest;
    }
    const std::size_t staging = std::max<std::size_t>(1, pulseBufOffset_[nPulses_]);

    coordsBuf_ = world_.alloc_symmetric(maxTotal, pgas::ElemKind::Real3, "coords");
    forcesBuf_ = world_.alloc_symmetric(maxTotal, pgas::ElemKind::Real3, "forces");
    packBuf_ = world_.alloc_symmetric(staging, pgas::ElemKind::Real3, "sendBuf");
    recvBufF_ = world_.alloc_symmetric(staging, pgas::ElemKind::Real3, "recvBufF");
    const std::size_t slots = std::max(1, nPulses_);
    coordSig_ = world_.alloc_signals(slots, "coordSignal");
    forceSig_ = world_.alloc_signals(slots, "forceSignal");
    unpackDone_ = world_.alloc_signals(slots, "unpackDone");
    blockCounters_ = world_.alloc_signals(2 * slots, "blockCounter");
    streamSig_ = world_.alloc_signals(3, "stream");

    blockBarrier_.resize(nRanks_);
    for (int r = 0; r < nRanks_; ++r) {
        blockBarrier_[r].resize(nPulses_);
        for (int p = 0; p < nPulses_; ++p)
            for (int b = 0; b < blocks(r, p); ++b)
                blockBarrier_[r][p].push_back(world_.create_barrier(cfg_.workersPerBlock));
    }
}

Transport HaloExchanger::transport(int rank, int pulse) const
{
    const auto& pd = plan_.ranks[rank].pulses[pulse];
    return world_.same_island(rank, pd.sendRank) ? Transport::Direct : Transport::Staged;
}

int HaloExchanger::blocks(int rank, int pulse) const
{
    if (transport(rank, pulse) == Transport::Staged)
        return cfg_.stagedBlocks;
    const std::size_t n = plan_.ranks[rank].pulses[pulse].sendSize;
    return static_cast<int>(std::max<std::size_t>(1, (n + cfg_.bufLength - 1) / cfg_.bufLength));
}

std::vector<std::pair<std::size_t, std::size_t>> HaloExchanger::block_chunks(int rank, int pulse, int block) const
{
    const std::size_t n = plan_.ranks[rank].pulses[pulse].sendSize;
    const std::size_t stride = static_cast<std::size_t>(blocks(rank, pulse));
    std::vector<std::pair<std::size_t, std::size_t>> chunks;
    // direct pulses have exactly one chunk per block; staged blocks stride over chunks
    for (std::size_t c = static_cast<std::size_t>(block); c * cfg_.bufLength < n; c += stride)
        chunks.emplace_back(c * cfg_.bufLength, std::min(n, (c + 1) * cfg_.bufLength));
    return chunks;
}

std::vector<std::string> HaloExchanger::notification_arrays() const
{
    return {world_.name_of(coordSig_), world_.name_of(forceSig_)};
}

void HaloExchanger::load_home_coords()
{
    for (int r = 0; r < nRanks_; ++r) {
        const auto& l = plan_.ranks[r];
        std::vector<Vec3> c(l.total_count(), Vec3{0.0, 0.0, 0.0});
        std::copy(l.homePositions.begin(), l.homePositions.end(), c.begin());
        if (cfg_.poisonHalo)
            std::fill(c.begin() + static_cast<std::ptrdiff_t>(l.home_count()), c.end(),
                      Vec3{sentinel(), sentinel(), sentinel()});
        world_.host_write_real3(coordsBuf_, r, 0, c);
    }
}

void HaloExchanger::set_forces(int rank, const std::vector<Vec3>& forces)
{
    if (forces.size() != plan_.ranks.at(rank).total_count())
        throw std::invalid_argument("force array must cover every local atom");
    world_.host_write_real3(forcesBuf_, rank, 0, forces);
}

void HaloExchanger::load_synthetic_forces()
{
    for (int r = 0; r < nRanks_; ++r) {
        const auto& l = plan_.ranks[r];
        std::vector<Vec3> f;
        f.reserve(l.total_count());
        for (auto id : l.homeIds)
            f.push_back(synthetic_force(id, r));
        for (auto id : l.haloIds)
            f.push_back(synthetic_force(id, r));
        world_.host_write_real3(forcesBuf_, r, 0, f);
    }
}

std::vector<Vec3> HaloExchanger::coords(int rank) const
{
    return world_.host_read_real3(coordsBuf_, rank, 0, plan_.ranks.at(rank).total_count());
}

std::vector<Vec3> HaloExchanger::forces(int rank) const
{
    return world_.host_read_real3(forcesBuf_, rank, 0, plan_.ranks.at(rank).total_count());
}

void HaloExchanger::check_leaks(Pe& pe, const std::vector<Vec3>& values, const char* where)
{
    const auto n = static_cast<std::size_t>(std::count_if(values.begin(), values.end(), has_sentinel));
    if (n == 0)
        return;
    leaks_ += n;
    pe.note(fmt::format("sentinel:{}", where), n);
}

void HaloExchanger::begin_run()
{
    world_.host_reset_counters(blockCounters_);
    world_.host_reset_counters(streamSig_);
}

// ---- fused coordinates ----

void HaloExchanger::pack_with_deps(Pe& pe, int rank, int pulse, int block, int worker, std::size_t begin,
                                   std::size_t end)
{
    const auto& pd = plan_.ranks[rank].pulses[pulse];
    const std::size_t len = end - begin;
    const std::size_t W = static_cast<std::size_t>(cfg_.workersPerBlock);
    const std::size_t ws = begin + len * static_cast<std::size_t>(worker) / W;
    const std::size_t we = begin + len * static_cast<std::size_t>(worker + 1) / W;
    const bool direct = transport(rank, pulse) == Transport::Direct;

    auto emit = [&](std::size_t from, std::size_t to, bool dependent) {
        if (from >= to)
            return;
        std::span<const std::int32_t> idx(pd.indexMap.data() + from, to - from);
        auto vals = pe.gather_real3(coordsBuf_, idx);
        if (dependent)
            check_leaks(pe, vals, "pack");
        for (auto& v : vals)
            v += pd.coordShift;
        if (direct)
            pe.write_direct(pe.peer_ref(coordsBuf_, pd.sendRank).value(), pd.remoteAtomOffset + from, vals);
        else
            pe.write_real3(packBuf_, pulseBufOffset_[pulse] + from, vals);
    };

    // phase 1: home atoms
    emit(ws, std::min(we, pd.independentCount), false);

    if (worker == 0 && end > pd.independentCount && cfg_.mutation != Mutation::DropPackWait) {
        const int last = cfg_.mutation == Mutation::ImmediatePredecessorOnly ? pulse - 1 : *pd.earliestDependency;
        for (int k = pulse - 1; k >= last; --k)
            pe.signal_wait_until(coordSig_, static_cast<std::size_t>(k), coordSigVal_);
    }
    pe.barrier_wait(blockBarrier_[rank][pulse][block]);

    // phase 2: forwarded halo atoms
    emit(std::max(ws, pd.independentCount), we, true);
}

void HaloExchanger::sync_and_comm_data(Pe& pe, int rank, int pulse, int block, int worker)
{
    pe.barrier_wait(blockBarrier_[rank][pulse][block]);
    if (worker != 0)
        return;
    const int nb = blocks(rank, pulse);
    if (nb > 1 && pe.atomic_inc_release(blockCounters_, static_cast<std::size_t>(pulse)) !=
                      static_cast<std::uint64_t>(nb - 1))
        return;
    const auto& pd = plan_.ranks[rank].pulses[pulse];
    if (transport(rank, pulse) == Transport::Direct) {
        const bool release = pd.sendSize > 0 && cfg_.mutation != Mutation::RelaxedNotify;
        pe.signal_store(coordSig_, static_cast<std::size_t>(pulse), pd.sendRank, coordSigVal_,
                        release ? Ordering::Release : Ordering::Relaxed);
    } else {
        auto vals = pe.read_real3(packBuf_, pulseBufOffset_[pulse], pd.sendSize);
        check_leaks(pe, vals, "send");
        pe.put_with_signal(coordsBuf_, pd.sendRank, pd.remoteAtomOffset, vals, coordSig_,
                           static_cast<std::size_t>(pulse), coordSigVal_);
    }
}

void HaloExchanger::coord_block(Pe& pe, int rank, int pulse, int block, int worker)
{
    for (auto [begin, end] : block_chunks(rank, pulse, block))
        pack_with_deps(pe, rank, pulse, block, worker, begin, end);
    sync_and_comm_data(pe, rank, pulse, block, worker);
    pe.atomic_inc_release(streamSig_, 0);
}

std::vector<Program> HaloExchanger::fused_coord_programs()
{
    std::vector<Program> progs;
    for (int r = 0; r < nRanks_; ++r)
        for (int p = 0; p < nPulses_; ++p)
            for (int b = 0; b < blocks(r, p); ++b)
                for (int w = 0; w < cfg_.workersPerBlock; ++w)
                    progs.push_back({r, fmt::format("r{}.coord.p{}.b{}.w{}", r, p, b, w),
                                     [this, r, p, b, w](Pe& pe) { coord_block(pe, r, p, b, w); }});
    return progs;
}

// ---- fused forces ----

void HaloExchanger::send_initial_forces(Pe& pe, int rank)
{
    const int q = nPulses_ - 1;
    const auto& pd = plan_.ranks[rank].pulses[q];
    if (world_.same_island(rank, pd.recvRank)) {
        pe.signal_store(forceSig_, static_cast<std::size_t>(q), pd.recvRank, forceSigVal_, Ordering::Relaxed);
    } else {
        auto vals = pe.read_real3(forcesBuf_, pd.atomOffset, pd.recvSize);
        pe.put_with_signal(recvBufF_, pd.recvRank, pulseBufOffset_[q], vals, forceSig_, static_cast<std::size_t>(q),
                           forceSigVal_);
    }
}

void HaloExchanger::sync_and_comm_dep_mgmt(Pe& pe, int rank, int pulse, int block, int worker)
{
    pe.barrier_wait(blockBarrier_[rank][pulse][block]);
    if (worker != 0)
        return;
    const int nb = blocks(rank, pulse);
    if (nb > 1 && pe.atomic_inc_release(blockCounters_, static_cast<std::size_t>(nPulses_ + pulse)) !=
                      static_cast<std::uint64_t>(nb - 1))
        return;
    pe.signal_store(unpackDone_, static_cast<std::size_t>(pulse), rank, forceSigVal_, Ordering::Release);
    if (cfg_.mutation != Mutation::SkipDepMgmtWait)
        for (int k = pulse + 1; k < nPulses_; ++k)
            pe.signal_wait_until(unpackDone_, static_cast<std::size_t>(k), forceSigVal_);

    const int q = pulse - 1;
    const auto& prev = plan_.ranks[rank].pulses[q];
    if (world_.same_island(rank, prev.recvRank)) {
        const auto order = cfg_.mutation == Mutation::RelaxedNotify ? Ordering::Relaxed : Ordering::Release;
        pe.signal_store(forceSig_, static_cast<std::size_t>(q), prev.recvRank, forceSigVal_, order);
    } else {
        auto vals = pe.read_real3(forcesBuf_, prev.atomOffset, prev.recvSize);
        check_leaks(pe, vals, "forward");
        pe.put_with_signal(recvBufF_, prev.recvRank, pulseBufOffset_[q], vals, forceSig_,
                           static_cast<std::size_t>(q), forceSigVal_);
    }
}

void HaloExchanger::force_block(Pe& pe, int rank, int pulse, int block, int worker, bool accumulate)
{
    const auto& pd = plan_.ranks[rank].pulses[pulse];
    const bool direct = transport(rank, pulse) == Transport::Direct;
    if (worker == 0)
        pe.signal_wait_until(forceSig_, static_cast<std::size_t>(pulse), forceSigVal_);
    pe.barrier_wait(blockBarrier_[rank][pulse][block]);

    const std::size_t W = static_cast<std::size_t>(cfg_.workersPerBlock);
    for (auto [begin, end] : block_chunks(rank, pulse, block)) {
        const std::size_t len = end - begin;
        const std::size_t ws = begin + len * static_cast<std::size_t>(worker) / W;
        const std::size_t we = begin + len * static_cast<std::size_t>(worker + 1) / W;
        if (ws >= we)
            continue;
        auto vals = direct ? pe.read_direct(pe.peer_ref(forcesBuf_, pd.sendRank).value(), pd.remoteAtomOffset + ws,
                                            we - ws)
                           : pe.read_real3(recvBufF_, pulseBufOffset_[pulse] + ws, we - ws);
        check_leaks(pe, vals, "unpack");
        std::span<const std::int32_t> idx(pd.indexMap.data() + ws, we - ws);
        if (accumulate)
            pe.atomic_add_real3(forcesBuf_, idx, vals);
        else
            pe.scatter_real3(forcesBuf_, idx, vals);
    }
    if (pulse > 0)
        sync_and_comm_dep_mgmt(pe, rank, pulse, block, worker);
}

std::vector<Program> HaloExchanger::fused_force_programs(bool accumulate, bool afterCompute)
{
    std::vector<Program> progs;
    for (int r = 0; r < nRanks_; ++r)
        for (int p = nPulses_ - 1; p >= 0; --p)
            for (int b = 0; b < blocks(r, p); ++b)
                for (int w = 0; w < cfg_.workersPerBlock; ++w) {
                    const bool initiator = p == nPulses_ - 1 && b == 0 && w == 0;
                    progs.push_back({r, fmt::format("r{}.force.p{}.b{}.w{}", r, p, b, w),
                                     [this, r, p, b, w, initiator, accumulate, afterCompute](Pe& pe) {
                                         if (afterCompute)
                                             pe.signal_wait_until(streamSig_, 1, 1);
                                         if (initiator)
                                             send_initial_forces(pe, r);
                                         force_block(pe, r, p, b, w, accumulate);
                                         pe.atomic_inc_release(streamSig_, 2);
                                     }});
                }
    return progs;
}

// ---- serialized ----

std::vector<Program> HaloExchanger::serialized_coord_programs()
{
    std::vector<Program> progs;
    for (int r = 0; r < nRanks_; ++r)
        progs.push_back({r, fmt::format("r{}.serial.coord", r), [this, r](Pe& pe) {
                             for (int p = 0; p < nPulses_; ++p) {
                                 const auto& pd = plan_.ranks[r].pulses[p];
                                 auto vals = pe.gather_real3(coordsBuf_, pd.indexMap);
                                 check_leaks(pe, vals, "pack");
                                 for (auto& v : vals)
                                     v += pd.coordShift;
                                 if (transport(r, p) == Transport::Direct) {
                                     pe.write_direct(pe.peer_ref(coordsBuf_, pd.sendRank).value(),
                                                     pd.remoteAtomOffset, vals);
                                     pe.signal_store(coordSig_, static_cast<std::size_t>(p), pd.sendRank,
                                                     coordSigVal_, Ordering::Release);
                                 } else {
                                     pe.write_real3(packBuf_, pulseBufOffset_[p], vals);
                                     pe.put_with_signal(coordsBuf_, pd.sendRank, pd.remoteAtomOffset, vals, coordSig_,
                                                        static_cast<std::size_t>(p), coordSigVal_);
                                 }
                                 pe.signal_wait_until(coordSig_, static_cast<std::size_t>(p), coordSigVal_);
                                 pe.quiet();
                                 pe.barrier_all();
                             }
                         }});
    return progs;
}

std::vector<Program> HaloExchanger::serialized_force_programs(bool accumulate)
{
    std::vector<Program> progs;
    for (int r = 0; r < nRanks_; ++r)
        progs.push_back({r, fmt::format("r{}.serial.force", r), [this, r, accumulate](Pe& pe) {
                             for (int p = nPulses_ - 1; p >= 0; --p) {
                                 const auto& pd = plan_.ranks[r].pulses[p];
                                 const auto slot = static_cast<std::size_t>(p);
                                 if (world_.same_island(r, pd.recvRank)) {
                                     pe.signal_store(forceSig_, slot, pd.recvRank, forceSigVal_, Ordering::Release);
                                 } else {
                                     auto out = pe.read_real3(forcesBuf_, pd.atomOffset, pd.recvSize);
                                     pe.put_with_signal(recvBufF_, pd.recvRank, pulseBufOffset_[p], out, forceSig_,
                                                        slot, forceSigVal_);
                                 }
                                 pe.signal_wait_until(forceSig_, slot, forceSigVal_);
                                 auto vals = transport(r, p) == Transport::Direct
                                                 ? pe.read_direct(pe.peer_ref(forcesBuf_, pd.sendRank).value(),
                                                                  pd.remoteAtomOffset, pd.sendSize)
                                                 : pe.read_real3(recvBufF_, pulseBufOffset_[p], pd.sendSize);
                                 check_leaks(pe, vals, "unpack");
                                 if (accumulate)
                                     pe.atomic_add_real3(forcesBuf_, pd.indexMap, vals);
                                 else
                                     pe.scatter_real3(forcesBuf_, pd.indexMap, vals);
                                 pe.quiet();
                                 pe.barrier_all();
                             }
                         }});
    return progs;
}

// ---- compute and step ----

void HaloExchanger::compute(Pe& pe, int rank, bool streamOrdered)
{
    const auto& l = plan_.ranks[rank];
    if (streamOrdered) {
        std::uint64_t workers = 0;
        for (int p = 0; p < nPulses_; ++p)
            workers += static_cast<std::uint64_t>(blocks(rank, p) * cfg_.workersPerBlock);
        pe.signal_wait_until(streamSig_, 0, workers);
    }
    for (int p = 0; p < nPulses_; ++p)
        pe.signal_wait_until(coordSig_, static_cast<std::size_t>(p), coordSigVal_);
    auto halo = pe.read_real3(coordsBuf_, l.home_count(), l.haloIds.size());
    check_leaks(pe, halo, "compute");
    std::vector<Vec3> f;
    f.reserve(l.total_count());
    for (auto id : l.homeIds)
        f.push_back(synthetic_force(id, rank));
    for (auto id : l.haloIds)
        f.push_back(synthetic_force(id, rank));
    pe.write_real3(forcesBuf_, 0, f);
    pe.note("compute", f.size());
    pe.atomic_inc_release(streamSig_, 1);
}

std::vector<Program> HaloExchanger::compute_programs(bool streamOrdered)
{
    std::vector<Program> progs;
    for (int r = 0; r < nRanks_; ++r)
        progs.push_back(
            {r, fmt::format("r{}.compute", r), [this, r, streamOrdered](Pe& pe) { compute(pe, r, streamOrdered); }});
    return progs;
}

namespace {

void poison(pgas::World& world, const pgas::SymmetricBuffer& buf, int pe, std::size_t offset, std::size_t count)
{
    std::vector<Vec3> s(count, Vec3{sentinel(), sentinel(), sentinel()});
    world.host_write_real3(buf, pe, offset, s);
}

} // namespace

pgas::ExecutionRecord HaloExchanger::coord_exchange(Schedule s)
{
    ++coordSigVal_;
    begin_run();
    if (cfg_.poisonHalo)
        for (int r = 0; r < nRanks_; ++r) {
            const auto& l = plan_.ranks[r];
            poison(world_, coordsBuf_, r, l.home_count(), l.haloIds.size());
            poison(world_, packBuf_, r, 0, packBuf_.length);
        }
    return world_.run(s == Schedule::Serialized ? serialized_coord_programs() : fused_coord_programs());
}

pgas::ExecutionRecord HaloExchanger::force_exchange(Schedule s, bool accumulate)
{
    ++forceSigVal_;
    begin_run();
    if (cfg_.poisonHalo)
        for (int r = 0; r < nRanks_; ++r)
            poison(world_, recvBufF_, r, 0, recvBufF_.length);
    return world_.run(s == Schedule::Serialized ? serialized_force_programs(accumulate)
                                                : fused_force_programs(accumulate, false));
}

StepResult HaloExchanger::run_step(Schedule s)
{
    const std::size_t before = leaks_.load();
    StepResult out;
    if (nPulses_ == 0) {
        begin_run();
        auto progs = compute_programs(false);
        out.records.push_back(world_.run(std::move(progs)));
        return out;
    }
    if (s == Schedule::Serialized) {
        out.records.push_back(coord_exchange(Schedule::Serialized));
        begin_run();
        out.records.push_back(world_.run(compute_programs(false)));
        out.records.push_back(force_exchange(Schedule::Serialized, true));
    } else {
        ++coordSigVal_;
        ++forceSigVal_;
        begin_run();
        if (cfg_.poisonHalo)
            for (int r = 0; r < nRanks_; ++r) {
                const auto& l = plan_.ranks[r];
                poison(world_, coordsBuf_, r, l.home_count(), l.haloIds.size());
                poison(world_, packBuf_, r, 0, packBuf_.length);
                poison(world_, recvBufF_, r, 0, recvBufF_.length);
            }
        auto progs = fused_coord_programs();
        for (auto& p : compute_programs(true))
            progs.push_back(std::move(p));
        for (auto& p : fused_force_programs(true, true))
            progs.push_back(std::move(p));
        for (int r = 0; r < nRanks_; ++r) {
            std::uint64_t workers = 0;
            for (int p = 0; p < nPulses_; ++p)
                workers += static_cast<std::uint64_t>(blocks(r, p) * cfg_.workersPerBlock);
            progs.push_back({r, fmt::format("r{}.update", r), [this, workers](Pe& pe) {
                                 pe.signal_wait_until(streamSig_, 2, workers);
                                 pe.note("integrate");
                             }});
        }
        out.records.push_back(world_.run(std::move(progs)));
    }
    out.sentinelLeaks = leaks_.load() - before;
    return out;
}

} // namespace halox::ex
