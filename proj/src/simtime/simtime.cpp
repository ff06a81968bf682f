#include "halox/simtime.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

namespace halox::sim {

std::string_view to_string(Schedule s) { return s == Schedule::Serialized ? "serialized" : "fused"; }

void MachineModel::validate() const
{
    const double all[] = {launchLatency, eventApiLatency,   directLinkLatency,   netLinkLatency,
                          mpiOverhead,   computeRate,       nonLocalIntensity,   packRate,
                          kernelFloor,   updateCost,        smContentionPenalty, otherPerStepCost,
                          bytesPerAtom,  directBandwidth,   netBandwidth};
    for (double v : all)
        if (!(v >= 0.0) || !std::isfinite(v))
            throw std::invalid_argument("machine model parameters must be finite and non-negative");
    if (!(directBandwidth > 0.0) || !(netBandwidth > 0.0))
        throw std::invalid_argument("bandwidths must be positive");
}

double MachineModel::transfer(LinkKind k, double atoms) const
{
    // GB/s is 1e3 bytes per µs
    return latency(k) + atoms * bytesPerAtom / (bandwidth(k) * 1e3);
}

PlanShape shape_from_plan(const dd::PulsePlan& plan, const std::vector<int>& islands)
{
    PlanShape s;
    const int nRanks = plan.grid.total_ranks();
    if (static_cast<int>(islands.size()) != nRanks)
        throw std::invalid_argument("island map must have one entry per rank");
    for (const auto& l : plan.ranks) {
        s.homeAtoms = std::max(s.homeAtoms, static_cast<double>(l.home_count()));
        s.haloAtoms = std::max(s.haloAtoms, static_cast<double>(l.haloIds.size()));
    }
    for (int p = 0; p < plan.total_pulses(); ++p) {
        PulseShape ps;
        for (const auto& l : plan.ranks) {
            const auto& pd = l.pulses[p];
            if (static_cast<double>(pd.sendSize) > ps.sendAtoms || (ps.sendAtoms == 0.0 && pd.sendSize == 0)) {
                ps.sendAtoms = static_cast<double>(pd.sendSize);
                ps.independentAtoms = static_cast<double>(pd.independentCount);
            }
            if (islands[l.rank] != islands[pd.sendRank])
                ps.link = LinkKind::Net;
        }
        s.pulses.push_back(ps);
    }
    return s;
}

IVec3 balanced_np(int ranks, int dims)
{
    if (ranks < 1 || dims < 0 || dims > 3)
        throw std::invalid_argument("ranks must be positive and dims in [0, 3]");
    std::vector<int> primes;
    for (int n = ranks, f = 2; n > 1;) {
        if (f * f > n) {
            primes.push_back(n);
            break;
        }
        if (n % f == 0) {
            primes.push_back(f);
            n /= f;
        } else {
            ++f;
        }
    }
    std::sort(primes.rbegin(), primes.rend());
    IVec3 np{1, 1, 1};
    if (dims == 0) {
        if (ranks != 1)
            throw std::invalid_argument("more than one rank needs at least one decomposed dimension");
        return np;
    }
    const Dim slots[3] = {Dim::Z, Dim::Y, Dim::X};
    for (int f : primes) {
        int best = 0;
        for (int i = 1; i < dims; ++i)
            if (np[idx(slots[i])] < np[idx(slots[best])])
                best = i;
        np[idx(slots[best])] *= f;
    }
    return np;
}

PlanShape analytic_shape(const AnalyticSystem& sys)
{
    const IVec3 np = balanced_np(sys.ranks, sys.dims);
    const double side = std::cbrt(sys.atomsPerRank * sys.ranks / sys.density);
    Vec3 w;
    for (int d = 0; d < 3; ++d)
        w[d] = side / np[d];

    PlanShape s;
    s.homeAtoms = sys.atomsPerRank;
    std::vector<Dim> order;
    for (Dim d : kPulseDimOrder)
        if (np[idx(d)] > 1)
            order.push_back(d);

    auto rank_of = [&](const IVec3& c) { return c[2] + np[2] * (c[1] + np[1] * c[0]); };
    for (std::size_t p = 0; p < order.size(); ++p) {
        const int d = idx(order[p]);
        double full = sys.density * sys.cutoff, home = sys.density * sys.cutoff;
        for (int e = 0; e < 3; ++e) {
            if (e == d)
                continue;
            const bool forwarded =
                std::find(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(p), static_cast<Dim>(e)) !=
                order.begin() + static_cast<std::ptrdiff_t>(p);
            full *= forwarded ? w[e] + sys.cutoff : w[e];
            home *= w[e];
        }
        PulseShape ps{full, home, LinkKind::Direct};
        for (int x = 0; x < np[0] && ps.link == LinkKind::Direct; ++x)
            for (int y = 0; y < np[1]; ++y)
                for (int z = 0; z < np[2]; ++z) {
                    IVec3 c{x, y, z}, n = c;
                    n[d] = (n[d] + 1) % np[d];
                    if (rank_of(c) / sys.ranksPerIsland != rank_of(n) / sys.ranksPerIsland)
                        ps.link = LinkKind::Net;
                }
        s.haloAtoms += full;
        s.pulses.push_back(ps);
    }
    return s;
}

// ---- timeline ----

double Timeline::extent() const
{
    double e = 0.0;
    for (const auto& i : intervals)
        e = std::max(e, i.end);
    return e;
}

std::vector<Interval> Timeline::stream(const std::string& name) const
{
    std::vector<Interval> out;
    for (const auto& i : intervals)
        if (i.stream == name)
            out.push_back(i);
    return out;
}

void Timeline::write_trace(std::ostream& os) const
{
    os << "stream,kind,pulse,start_us,end_us\n";
    auto line = [&](const Interval& i) {
        os << fmt::format("{},{},{},{:.3f},{:.3f}\n", i.stream, i.kind, i.pulse, i.start, i.end);
    };
    for (const auto& i : intervals)
        line(i);
    for (const auto& i : detail)
        line(i);
}

namespace {

class Builder {
public:
    explicit Builder(const MachineModel& m) : m_(m) {}

    Timeline t;
    double host = 0.0;

    double add(std::string stream, std::string kind, int pulse, double start, double dur)
    {
        t.intervals.push_back({std::move(stream), std::move(kind), pulse, start, start + dur});
        return start + dur;
    }
    void detail(std::string lane, std::string kind, int pulse, double start, double end)
    {
        t.detail.push_back({std::move(lane), std::move(kind), pulse, start, end});
    }
    /// Host launches a kernel; returns the time the kernel may start.
    double launch(const std::string& kind, int pulse = -1)
    {
        host = add("host", "launch_" + kind, pulse, host, m_.launchLatency);
        return host;
    }
    /// Host blocks until `until`, then pays the synchronisation cost.
    void sync(double until, const std::string& kind, int pulse)
    {
        host = add("host", kind, pulse, std::max(host, until), m_.launchLatency + m_.eventApiLatency);
    }

private:
    const MachineModel& m_;
};

double us(double atoms, double nsPerAtom) { return atoms * nsPerAtom * 1e-3; }

// Runs `work` µs of kernel time from `start`, slowed while any `busy` interval is active.
double contended_end(double start, double work, std::vector<std::pair<double, double>> busy, double penalty)
{
    std::sort(busy.begin(), busy.end());
    std::vector<std::pair<double, double>> merged;
    for (auto [a, b] : busy) {
        if (b <= a)
            continue;
        if (!merged.empty() && a <= merged.back().second)
            merged.back().second = std::max(merged.back().second, b);
        else
            merged.emplace_back(a, b);
    }
    const double slow = 1.0 / (1.0 + penalty);
    double t = start, left = work;
    for (auto [a, b] : merged) {
        if (b <= t)
            continue;
        if (a > t) {
            if (a - t >= left)
                return t + left;
            left -= a - t;
            t = a;
        }
        const double span = b - t;
        if (span * slow >= left)
            return t + left / slow;
        left -= span * slow;
        t = b;
    }
    return t + left;
}

Timeline serialized(const PlanShape& s, const MachineModel& m)
{
    Builder b(m);
    const int T = static_cast<int>(s.pulses.size());
    const double localStart = b.launch("nb_local");
    const double localEnd = b.add("local", "nb_local", -1, localStart, us(s.homeAtoms, m.computeRate));

    double ns = 0.0;
    for (int p = 0; p < T; ++p) {
        const auto& ps = s.pulses[p];
        const double ready = b.launch("pack_x", p);
        ns = b.add("nonlocal", "pack_x", p, std::max(ready, ns), m.kernelFloor + us(ps.sendAtoms, m.packRate));
        b.sync(ns, "sync_pack_x", p);
        b.host = b.add("host", "mpi_x", p, b.host, m.mpiOverhead + m.transfer(ps.link, ps.sendAtoms));
    }
    if (T > 0) {
        const double ready = b.launch("nb_nonlocal");
        ns = b.add("nonlocal", "nb_nonlocal", -1, std::max(ready, ns),
                   us(s.haloAtoms, m.computeRate) * m.nonLocalIntensity);
        for (int p = T - 1; p >= 0; --p) {
            const auto& ps = s.pulses[p];
            b.sync(ns, "sync_f", p);
            b.host = b.add("host", "mpi_f", p, b.host, m.mpiOverhead + m.transfer(ps.link, ps.sendAtoms));
            const double r = b.launch("unpack_f", p);
            ns = b.add("nonlocal", "unpack_f", p, std::max(r, ns), m.kernelFloor + us(ps.sendAtoms, m.packRate));
        }
    }
    const double ready = b.launch("update");
    b.add("update", "update", -1, std::max({ready, localEnd, ns}), m.updateCost);
    b.t.schedule = Schedule::Serialized;
    b.t.otherPerStepCost = m.otherPerStepCost;
    return b.t;
}

Timeline fused(const PlanShape& s, const MachineModel& m)
{
    Builder b(m);
    const int T = static_cast<int>(s.pulses.size());
    const double localStart = b.launch("nb_local");
    std::vector<std::pair<double, double>> busy;
    double forceEnd = 0.0;

    if (T > 0) {
        const double coordReady = b.launch("coord_kernel");
        const double nlReady = b.launch("nb_nonlocal");
        const double forceReady = b.launch("force_kernel");

        // coordinate kernel: every pulse starts at once
        const double t0 = coordReady + m.kernelFloor;
        std::vector<double> arrival(T, t0);
        for (int p = 0; p < T; ++p) {
            const auto& ps = s.pulses[p];
            const std::string lane = fmt::format("comm.p{}", p);
            const double indEnd = t0 + us(ps.independentAtoms, m.packRate);
            b.detail(lane, "pack_independent", p, t0, indEnd);
            double depReady = indEnd;
            if (ps.dependent_atoms() > 0.0)
                for (int k = 0; k < p; ++k)
                    depReady = std::max(depReady, arrival[k]);
            const double depEnd = depReady + us(ps.dependent_atoms(), m.packRate);
            b.detail(lane, "pack_dependent", p, depReady, depEnd);
            if (ps.link == LinkKind::Direct) {
                const double a = indEnd + m.transfer(ps.link, ps.independentAtoms);
                const double c = depEnd + m.transfer(ps.link, ps.dependent_atoms());
                b.detail(lane, "store_independent", p, indEnd, a);
                b.detail(lane, "store_dependent", p, depEnd, c);
                arrival[p] = std::max(a, c);
            } else {
                arrival[p] = depEnd + m.transfer(ps.link, ps.sendAtoms);
                b.detail(lane, "put_signal", p, depEnd, arrival[p]);
            }
        }
        const double coordEnd = *std::max_element(arrival.begin(), arrival.end());
        b.add("nonlocal", "coord_kernel", -1, coordReady, coordEnd - coordReady);
        busy.emplace_back(coordReady, coordEnd);

        const double nlEnd = b.add("nonlocal", "nb_nonlocal", -1, std::max(nlReady, coordEnd),
                                   us(s.haloAtoms, m.computeRate) * m.nonLocalIntensity);

        // force kernel: last pulse first, each forward waits for every later unpack
        const double fs = std::max(forceReady, nlEnd);
        double sendAt = fs;
        for (int p = T - 1; p >= 0; --p) {
            const auto& ps = s.pulses[p];
            const std::string lane = fmt::format("comm.p{}", p);
            const double arrive = sendAt + m.transfer(ps.link, ps.sendAtoms);
            b.detail(lane, "force_transfer", p, sendAt, arrive);
            const double unpacked = arrive + us(ps.sendAtoms, m.packRate);
            b.detail(lane, "unpack", p, arrive, unpacked);
            sendAt = unpacked;
        }
        forceEnd = sendAt;
        b.add("nonlocal", "force_kernel", -1, fs, forceEnd - fs);
        busy.emplace_back(fs, forceEnd);
    }

    const double localEnd =
        contended_end(localStart, us(s.homeAtoms, m.computeRate), busy, m.smContentionPenalty);
    b.add("local", "nb_local", -1, localStart, localEnd - localStart);
    const double ready = b.launch("update");
    b.add("update", "update", -1, std::max({ready, localEnd, forceEnd}), m.updateCost);
    b.t.schedule = Schedule::Fused;
    b.t.otherPerStepCost = m.otherPerStepCost;
    return b.t;
}

} // namespace

Timeline simulate_step(const PlanShape& shape, Schedule schedule, const MachineModel& machine)
{
    machine.validate();
    return schedule == Schedule::Serialized ? serialized(shape, machine) : fused(shape, machine);
}

StepMetrics metrics(const Timeline& t)
{
    StepMetrics m;
    double localStart = 0.0, localEnd = 0.0;
    double first = std::numeric_limits<double>::infinity(), last = -std::numeric_limits<double>::infinity();
    for (const auto& i : t.intervals) {
        if (i.stream == "local" && i.kind == "nb_local") {
            localStart = i.start;
            localEnd = i.end;
        }
        if (i.stream == "nonlocal" && (i.kind == "pack_x" || i.kind == "coord_kernel"))
            first = std::min(first, i.start);
        if (i.stream == "nonlocal" && (i.kind == "unpack_f" || i.kind == "force_kernel"))
            last = std::max(last, i.end);
    }
    m.localWork = localEnd - localStart;
    if (std::isfinite(first) && std::isfinite(last)) {
        m.nonLocalWork = last - first;
        m.nonOverlap = std::max(0.0, last - localEnd);
    }
    m.timePerStep = t.extent() + t.otherPerStepCost;
    return m;
}

// ---- sweep ----

std::vector<SweepRow> sweep(const SweepConfig& cfg)
{
    std::vector<SweepRow> rows;
    for (double atoms : cfg.atomsPerRank)
        for (auto [dims, ranks] : cfg.layouts) {
            AnalyticSystem sys{atoms, ranks, dims, cfg.density, cfg.cutoff, cfg.ranksPerIsland};
            const auto shape = analytic_shape(sys);
            const double base = metrics(simulate_step(shape, Schedule::Serialized, cfg.machine)).timePerStep;
            for (Schedule s : cfg.schedules) {
                SweepRow r;
                r.atomsPerRank = atoms;
                r.ranks = ranks;
                r.dims = dims;
                r.schedule = s;
                r.pulses = static_cast<int>(shape.pulses.size());
                r.m = metrics(simulate_step(shape, s, cfg.machine));
                r.speedup = base / r.m.timePerStep;
                rows.push_back(r);
            }
        }
    return rows;
}

void write_csv(std::ostream& os, const std::vector<SweepRow>& rows)
{
    os << kCsvHeader << '\n';
    for (const auto& r : rows)
        os << fmt::format("{:.0f},{},{},{},{},{:.3f},{:.3f},{:.3f},{:.3f},{:.4f}\n", r.atomsPerRank, r.ranks, r.dims,
                          to_string(r.schedule), r.pulses, r.m.localWork, r.m.nonLocalWork, r.m.nonOverlap,
                          r.m.timePerStep, r.speedup);
}

} // namespace halox::sim
