#include "halox/litmus.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <mutex>
#include <numeric>
#include <stdexcept>

namespace halox::pgas {

namespace {

WorldConfig world_config(const LitmusOptions& opt, int nPEs, std::uint64_t seed)
{
    WorldConfig cfg;
    cfg.nPEs = nPEs;
    cfg.mode = opt.mode;
    cfg.regime = opt.regime;
    cfg.seed = seed;
    cfg.aggressiveness = opt.aggressiveness;
    cfg.recordEvents = false;
    return cfg;
}

std::vector<double> payload_values(std::size_t n)
{
    std::vector<double> v(n);
    std::iota(v.begin(), v.end(), 1.0);
    return v;
}

enum class Publish { PutSignal, PutRelease, PutQuiet, PutBarrier, PutRelaxed, DirectRelaxed };

// Message passing: PE 0 publishes a payload to PE 1, PE 1 reads it after synchronising.
bool message_passing(const LitmusOptions& opt, std::uint64_t seed, Publish how)
{
    World world(world_config(opt, 2, seed));
    const auto buf = world.alloc_symmetric(std::max<std::size_t>(1, opt.payload), ElemKind::Real, "data");
    const auto sig = world.alloc_signals(1, "flag");
    const auto data = payload_values(opt.payload);
    bool stale = false;

    auto writer = [&](Pe& pe) {
        switch (how) {
        case Publish::PutSignal:
            pe.put_with_signal_real(buf, 1, 0, data, sig, 0, 1);
            break;
        case Publish::PutRelease:
            pe.put_real(buf, 1, 0, data);
            pe.signal_store(sig, 0, 1, 1, Ordering::Release);
            break;
        case Publish::PutQuiet:
            pe.put_real(buf, 1, 0, data);
            pe.quiet();
            pe.signal_store(sig, 0, 1, 1, Ordering::Relaxed);
            break;
        case Publish::PutBarrier:
            pe.put_real(buf, 1, 0, data);
            pe.barrier_all();
            break;
        case Publish::PutRelaxed:
            pe.put_real(buf, 1, 0, data);
            pe.signal_store(sig, 0, 1, 1, Ordering::Relaxed);
            break;
        case Publish::DirectRelaxed:
            pe.write_direct_real(pe.peer_ref(buf, 1).value(), 0, data);
            pe.signal_store(sig, 0, 1, 1, Ordering::Relaxed);
            break;
        }
    };
    auto reader = [&](Pe& pe) {
        if (how == Publish::PutBarrier)
            pe.barrier_all();
        else
            pe.signal_wait_until(sig, 0, 1);
        const auto got = pe.read_real(buf, 0, data.size());
        stale = got != data;
    };
    world.run({{0, "writer", writer}, {1, "reader", reader}});
    return stale;
}

bool atomic_inc_permutation(const LitmusOptions& opt, std::uint64_t seed)
{
    constexpr int k = 8;
    World world(world_config(opt, 1, seed));
    const auto counter = world.alloc_signals(1, "counter");
    std::mutex mu;
    std::vector<std::uint64_t> seen;
    std::vector<Program> progs;
    for (int c = 0; c < k; ++c)
        progs.push_back({0, "inc" + std::to_string(c), [&](Pe& pe) {
                             const auto old = pe.atomic_inc_release(counter, 0);
                             std::lock_guard lk(mu);
                             seen.push_back(old);
                         }});
    world.run(std::move(progs));
    std::sort(seen.begin(), seen.end());
    std::vector<std::uint64_t> expect(k);
    std::iota(expect.begin(), expect.end(), 0);
    return seen != expect || world.host_signal(counter, 0, 0) != static_cast<std::uint64_t>(k);
}

bool signal_monotonicity(const LitmusOptions& opt, std::uint64_t seed)
{
    World world(world_config(opt, 2, seed));
    const auto sig = world.alloc_signals(1, "counter");
    bool decreased = false;
    bool regressionCaught = false;
    auto writer = [&](Pe& pe) {
        for (std::uint64_t v = 1; v <= 5; ++v)
            pe.signal_store(sig, 0, 1, v, Ordering::Release);
        try {
            pe.signal_store(sig, 0, 1, 2, Ordering::Relaxed);
        } catch (const SignalRegression&) {
            regressionCaught = true;
        }
    };
    auto reader = [&](Pe& pe) {
        std::uint64_t last = 0;
        for (int i = 0; i < 10; ++i) {
            const auto v = pe.signal_read(sig, 0);
            decreased = decreased || v < last;
            last = v;
        }
    };
    world.run({{0, "writer", writer}, {1, "reader", reader}});
    return decreased || !regressionCaught;
}

// Two PEs each wait for a signal only the other would store after its own wait.
bool circular_wait(const LitmusOptions& opt, std::uint64_t seed)
{
    World world(world_config(opt, 2, seed));
    const auto sig = world.alloc_signals(1, "token");
    auto body = [&](Pe& pe) {
        pe.signal_wait_until(sig, 0, 1);
        pe.signal_store(sig, 0, 1 - pe.id(), 1, Ordering::Release);
    };
    try {
        world.run({{0, "left", body}, {1, "right", body}});
    } catch (const SimDeadlock& e) {
        return e.waiters().size() == 2;
    }
    return false;
}

// A chain of waits that always resolves must never be reported as a deadlock.
bool false_deadlock(const LitmusOptions& opt, std::uint64_t seed)
{
    constexpr int n = 4;
    World world(world_config(opt, n, seed));
    const auto sig = world.alloc_signals(1, "token");
    std::vector<Program> progs;
    for (int pe = 0; pe < n; ++pe)
        progs.push_back({pe, "link" + std::to_string(pe), [&](Pe& p) {
                             if (p.id() > 0)
                                 p.signal_wait_until(sig, 0, 1);
                             if (p.id() + 1 < n)
                                 p.signal_store(sig, 0, p.id() + 1, 1, Ordering::Release);
                         }});
    try {
        world.run(std::move(progs));
    } catch (const SimDeadlock&) {
        return true;
    }
    return false;
}

struct Test {
    bool expectsViolation;
    std::function<bool(const LitmusOptions&, std::uint64_t)> trial;
    const char* describe;
};

const std::map<std::string, Test>& registry()
{
    using P = Publish;
    static const std::map<std::string, Test> tests{
        {"put_signal_publish",
         {false, [](auto& o, auto s) { return message_passing(o, s, P::PutSignal); },
          "put_with_signal then acquire-wait: stale payload reads"}},
        {"release_publish",
         {false, [](auto& o, auto s) { return message_passing(o, s, P::PutRelease); },
          "plain put then release store: stale payload reads"}},
        {"quiet_publish",
         {false, [](auto& o, auto s) { return message_passing(o, s, P::PutQuiet); },
          "plain put, quiet, relaxed store: stale payload reads"}},
        {"barrier_publish",
         {false, [](auto& o, auto s) { return message_passing(o, s, P::PutBarrier); },
          "plain put then barrier_all: stale payload reads"}},
        {"atomic_inc_permutation",
         {false, [](auto& o, auto s) { return atomic_inc_permutation(o, s); },
          "8 concurrent increments: returns not a permutation of 0..7"}},
        {"signal_monotonicity",
         {false, [](auto& o, auto s) { return signal_monotonicity(o, s); },
          "counter observed decreasing or decreasing store accepted"}},
        {"no_false_deadlock",
         {false, [](auto& o, auto s) { return false_deadlock(o, s); }, "resolvable wait chain reported as deadlock"}},
        {"put_relaxed_signal",
         {true, [](auto& o, auto s) { return message_passing(o, s, P::PutRelaxed); },
          "injected bug, plain put then relaxed store: stale reads observed"}},
        {"direct_relaxed_signal",
         {true, [](auto& o, auto s) { return message_passing(o, s, P::DirectRelaxed); },
          "injected bug, direct stores then relaxed store: stale reads observed"}},
        {"circular_wait",
         {true, [](auto& o, auto s) { return circular_wait(o, s); }, "circular wait fixture: deadlock detected"}},
    };
    return tests;
}

} // namespace

std::vector<std::string> litmus_names()
{
    std::vector<std::string> correct, bugs;
    for (const auto& [name, t] : registry())
        (t.expectsViolation ? bugs : correct).push_back(name);
    correct.insert(correct.end(), bugs.begin(), bugs.end());
    return correct;
}

LitmusResult run_litmus(const std::string& name, const LitmusOptions& opt)
{
    auto it = registry().find(name);
    if (it == registry().end())
        throw std::invalid_argument("unknown litmus test '" + name + "'");
    LitmusResult r;
    r.name = name;
    r.expectsViolation = it->second.expectsViolation;
    r.detail = it->second.describe;
    for (auto seed : opt.seeds) {
        ++r.trials;
        if (it->second.trial(opt, seed))
            ++r.violations;
    }
    return r;
}

std::vector<LitmusResult> run_litmus_suite(const LitmusOptions& opt)
{
    std::vector<LitmusResult> out;
    for (const auto& name : litmus_names())
        out.push_back(run_litmus(name, opt));
    return out;
}

} // namespace halox::pgas
