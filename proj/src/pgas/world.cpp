#include "halox/pgas.hpp"

#include "json.hpp"

#include <algorithm>
#include <bit>
#include <condition_variable>
#include <mutex>
#include <ostream>
#include <random>
#include <thread>
#include <unordered_map>

namespace halox::pgas {

std::string_view to_string(MemoryMode m)
{
    return m == MemoryMode::Sequential ? "sequential" : "weak";
}

std::string_view to_string(Ordering o)
{
    return o == Ordering::Release ? "release" : "relaxed";
}

std::string_view to_string(Regime r)
{
    return r == Regime::Deterministic ? "deterministic" : "concurrent";
}

std::string_view to_string(EventKind k)
{
    switch (k) {
    case EventKind::Read: return "read";
    case EventKind::Write: return "write";
    case EventKind::Put: return "put";
    case EventKind::PutSignal: return "put_signal";
    case EventKind::Deliver: return "deliver";
    case EventKind::Get: return "get";
    case EventKind::SignalStore: return "signal_store";
    case EventKind::SignalWait: return "signal_wait";
    case EventKind::AtomicInc: return "atomic_inc";
    case EventKind::AtomicAdd: return "atomic_add";
    case EventKind::Flush: return "flush";
    case EventKind::Quiet: return "quiet";
    case EventKind::Barrier: return "barrier";
    case EventKind::Note: return "note";
    }
    return "unknown";
}

void ExecutionRecord::write_jsonl(std::ostream& os) const
{
    for (const auto& e : events) {
        nlohmann::ordered_json j;
        j["kind"] = to_string(e.kind);
        j["pe"] = e.pe;
        j["ctx"] = e.context;
        j["t"] = e.time;
        j["target"] = e.target;
        j["object"] = e.object;
        j["slot"] = e.slot;
        j["value"] = e.value;
        j["count"] = e.count;
        j["detail"] = e.detail;
        os << j.dump() << '\n';
    }
}

std::size_t ExecutionRecord::count(EventKind k) const
{
    return static_cast<std::size_t>(std::count_if(events.begin(), events.end(), [k](const Event& e) { return e.kind == k; }));
}

namespace {

// Unwinds a context after the run was aborted.
struct SimAbort {};

std::uint64_t location_key(std::uint32_t handle, int target, std::size_t word)
{
    return (static_cast<std::uint64_t>(handle) << 48) | (static_cast<std::uint64_t>(target) << 36) |
           static_cast<std::uint64_t>(word);
}

} // namespace

struct World::Impl {
    struct Buffer {
        std::string name;
        SymmetricBuffer desc;
        std::vector<std::vector<Word>> mem; // [pe][word]
    };
    struct Signals {
        std::string name;
        std::vector<std::vector<std::uint64_t>> value; // [pe][slot]
    };
    struct Barrier {
        int participants = 0;
        int arrived = 0;
        std::uint64_t generation = 0;
    };
    struct StoreBuffer {
        std::vector<std::uint64_t> order; // keys in first-write order
        std::unordered_map<std::uint64_t, Word> latest;
        bool empty() const { return order.empty(); }
    };
    struct Message {
        int issuer = 0;
        std::uint32_t handle = 0;
        int target = 0;
        std::size_t wordOffset = 0;
        std::vector<Word> payload;
        std::uint32_t sig = 0;
        std::size_t slot = 0;
        std::uint64_t value = 0;
    };
    struct Context {
        int id = 0;
        int pe = 0;
        std::string label;
        std::function<void(Pe&)> body;
        std::thread thread;
        std::condition_variable cv;
        bool done = false;
        bool blocked = false;
        std::function<bool()> pred;
        std::string waitDesc;
    };

    WorldConfig cfg;
    std::mt19937_64 rng;
    mutable std::mutex mu;

    std::vector<Buffer> buffers;
    std::vector<Signals> signals;
    std::vector<Barrier> barriers;
    std::vector<StoreBuffer> storeBuffers; // per writer PE
    std::vector<Message> inflight;

    // run state
    bool running = false;
    std::vector<std::unique_ptr<Context>> ctxs;
    int current = -1;
    int live = 0;
    int blockedCount = 0;
    bool aborted = false;
    std::exception_ptr error;
    std::optional<SimDeadlock> deadlock;
    std::condition_variable stateCv; // concurrent regime
    BarrierId allBarrier;
    ExecutionRecord record;
    std::uint64_t clock = 0;

    explicit Impl(WorldConfig c) : cfg(std::move(c)), rng(cfg.seed)
    {
        if (cfg.nPEs < 1)
            throw PgasError("world needs at least one PE");
        if (cfg.islands.empty())
            cfg.islands.assign(cfg.nPEs, 0);
        if (static_cast<int>(cfg.islands.size()) != cfg.nPEs)
            throw PgasError("island map must have one entry per PE");
        storeBuffers.resize(cfg.nPEs);
    }

    bool weak() const { return cfg.mode == MemoryMode::WeakAdversary; }
    bool deterministic() const { return cfg.regime == Regime::Deterministic; }

    double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }
    std::size_t pick(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); }

    void log(EventKind kind, int pe, int ctx, int target, std::string object, std::uint64_t slot,
             std::uint64_t value, std::uint64_t count, std::string detail = {})
    {
        ++clock;
        if (!cfg.recordEvents)
            return;
        record.events.push_back(
            Event{kind, pe, ctx, clock, target, std::move(object), slot, value, count, std::move(detail)});
    }

    Buffer& buffer(const SymmetricBuffer& b)
    {
        if (b.handle >= buffers.size())
            throw PgasError("unknown buffer handle");
        return buffers[b.handle];
    }
    Signals& sigs(const SignalArray& s)
    {
        if (s.handle >= signals.size())
            throw PgasError("unknown signal handle");
        return signals[s.handle];
    }

    void check_pe(int pe) const
    {
        if (pe < 0 || pe >= cfg.nPEs)
            throw OutOfBounds("PE id " + std::to_string(pe) + " out of range");
    }

    std::size_t word_range(const SymmetricBuffer& b, std::size_t offset, std::size_t count, std::size_t wpe)
    {
        const Buffer& buf = buffer(b);
        if (wpe != buf.desc.words_per_elem())
            throw PgasError("element kind mismatch on buffer '" + buf.name + "'");
        if (offset > buf.desc.length || count > buf.desc.length - offset)
            throw OutOfBounds("range [" + std::to_string(offset) + ", " + std::to_string(offset + count) +
                              ") outside buffer '" + buf.name + "' of length " + std::to_string(buf.desc.length));
        return offset * wpe;
    }

    // ---- memory model ----

    Word load(int reader, std::uint32_t handle, int target, std::size_t word)
    {
        if (target != reader) {
            const auto& sb = storeBuffers[reader];
            if (!sb.empty()) {
                auto it = sb.latest.find(location_key(handle, target, word));
                if (it != sb.latest.end())
                    return it->second;
            }
        }
        return buffers[handle].mem[target][word];
    }

    void store(int writer, std::uint32_t handle, int target, std::size_t word, Word value)
    {
        if (target == writer || !weak()) {
            buffers[handle].mem[target][word] = value;
            return;
        }
        auto& sb = storeBuffers[writer];
        const auto key = location_key(handle, target, word);
        auto it = sb.latest.find(key);
        if (it != sb.latest.end()) {
            it->second = value; // keep coherence order with the buffered write
            return;
        }
        if (uniform() < cfg.aggressiveness) {
            sb.order.push_back(key);
            sb.latest.emplace(key, value);
        } else {
            buffers[handle].mem[target][word] = value;
        }
    }

    void flush(int writer, int ctx)
    {
        auto& sb = storeBuffers[writer];
        if (sb.empty())
            return;
        std::shuffle(sb.order.begin(), sb.order.end(), rng);
        for (auto key : sb.order) {
            const auto handle = static_cast<std::uint32_t>(key >> 48);
            const auto target = static_cast<int>((key >> 36) & 0xFFF);
            const auto word = static_cast<std::size_t>(key & ((std::uint64_t{1} << 36) - 1));
            buffers[handle].mem[target][word] = sb.latest.at(key);
        }
        log(EventKind::Flush, writer, ctx, -1, {}, 0, 0, sb.order.size());
        sb.order.clear();
        sb.latest.clear();
    }

    void set_signal(int target, std::uint32_t sig, std::size_t slot, std::uint64_t value)
    {
        auto& v = signals[sig].value[target][slot];
        if (value < v)
            throw SignalRegression("signal '" + signals[sig].name + "'[" + std::to_string(slot) + "] on PE " +
                                   std::to_string(target) + " would decrease from " + std::to_string(v) + " to " +
                                   std::to_string(value));
        v = value;
    }

    void deliver(std::size_t i, int ctx)
    {
        Message m = std::move(inflight[i]);
        inflight.erase(inflight.begin() + static_cast<std::ptrdiff_t>(i));
        auto& mem = buffers[m.handle].mem[m.target];
        std::copy(m.payload.begin(), m.payload.end(), mem.begin() + static_cast<std::ptrdiff_t>(m.wordOffset));
        set_signal(m.target, m.sig, m.slot, m.value);
        log(EventKind::Deliver, m.issuer, ctx, m.target, signals[m.sig].name, m.slot, m.value, m.payload.size());
        stateCv.notify_all();
    }

    void deliver_from(int issuer, int ctx)
    {
        for (std::size_t i = 0; i < inflight.size();) {
            if (inflight[i].issuer == issuer)
                deliver(i, ctx);
            else
                ++i;
        }
    }

    void adversary_step(int ctx)
    {
        if (!inflight.empty() && uniform() < cfg.deliveryProbability)
            deliver(pick(inflight.size()), ctx);
    }

    // ---- scheduling ----

    bool runnable(const Context& c) const { return !c.done && (!c.blocked || c.pred()); }

    int pick_runnable()
    {
        std::vector<int> ready;
        for (const auto& c : ctxs)
            if (runnable(*c))
                ready.push_back(c->id);
        if (ready.empty())
            return -1;
        return ready[pick(ready.size())];
    }

    void abort_all()
    {
        aborted = true;
        for (auto& c : ctxs)
            c->cv.notify_all();
        stateCv.notify_all();
    }

    void declare_deadlock()
    {
        std::vector<BlockedWaiter> waiters;
        std::string msg = "simulated deadlock: every live context is blocked";
        for (const auto& c : ctxs)
            if (!c->done && c->blocked) {
                waiters.push_back({c->id, c->pe, c->label, c->waitDesc});
                msg += "\n  ctx " + std::to_string(c->id) + " (" + c->label + ", PE " + std::to_string(c->pe) +
                       ") waits for " + c->waitDesc;
            }
        deadlock.emplace(msg, std::move(waiters));
        abort_all();
    }

    void hand_over(std::unique_lock<std::mutex>& lk, Context& self, int next)
    {
        ++record.switches;
        current = next;
        ctxs[next]->cv.notify_all();
        self.cv.wait(lk, [&] { return current == self.id || aborted; });
        if (aborted)
            throw SimAbort{};
    }

    void switch_point(std::unique_lock<std::mutex>& lk, Context& self)
    {
        if (aborted)
            throw SimAbort{};
        if (weak())
            adversary_step(self.id);
        if (!deterministic())
            return;
        const int next = pick_runnable();
        if (next >= 0 && next != self.id)
            hand_over(lk, self, next);
    }

    void block_until(std::unique_lock<std::mutex>& lk, Context& self, std::function<bool()> pred, std::string desc)
    {
        if (pred())
            return;
        self.blocked = true;
        self.pred = std::move(pred);
        self.waitDesc = std::move(desc);
        if (deterministic()) {
            while (!self.pred()) {
                const int next = pick_runnable();
                if (next < 0) {
                    if (!inflight.empty()) {
                        deliver(pick(inflight.size()), self.id);
                        continue;
                    }
                    declare_deadlock();
                    throw SimAbort{};
                }
                if (next != self.id)
                    hand_over(lk, self, next);
            }
        } else {
            ++blockedCount;
            while (!self.pred()) {
                if (aborted) {
                    --blockedCount;
                    throw SimAbort{};
                }
                if (blockedCount == live && !any_blocked_ready()) {
                    if (!inflight.empty()) {
                        while (!inflight.empty())
                            deliver(0, self.id);
                        continue;
                    }
                    declare_deadlock();
                    --blockedCount;
                    throw SimAbort{};
                }
                stateCv.wait(lk);
            }
            --blockedCount;
        }
        self.blocked = false;
        self.pred = nullptr;
    }

    bool any_blocked_ready() const
    {
        return std::any_of(ctxs.begin(), ctxs.end(), [](const auto& c) { return !c->done && c->blocked && c->pred(); });
    }

    void finish_context(Context& self)
    {
        self.done = true;
        self.blocked = false;
        --live;
        if (deterministic()) {
            if (!aborted && live > 0) {
                const int next = pick_runnable();
                if (next < 0) {
                    if (!inflight.empty()) {
                        // nothing runnable but messages can still unblock someone
                        while (!inflight.empty() && pick_runnable() < 0)
                            deliver(pick(inflight.size()), self.id);
                    }
                    const int retry = pick_runnable();
                    if (retry < 0) {
                        declare_deadlock();
                        return;
                    }
                    current = retry;
                    ctxs[retry]->cv.notify_all();
                    return;
                }
                current = next;
                ctxs[next]->cv.notify_all();
            }
        } else {
            stateCv.notify_all();
        }
    }

    void thread_main(Context& self, World& world)
    {
        {
            std::unique_lock lk(mu);
            if (deterministic())
                self.cv.wait(lk, [&] { return current == self.id || aborted; });
        }
        Pe pe(world, self.pe, self.id);
        try {
            if (!aborted)
                self.body(pe);
        } catch (const SimAbort&) {
        } catch (...) {
            std::unique_lock lk(mu);
            if (!error)
                error = std::current_exception();
            abort_all();
        }
        std::unique_lock lk(mu);
        finish_context(self);
    }
};

World::World(WorldConfig cfg) : impl_(std::make_unique<Impl>(std::move(cfg))) {}
World::~World() = default;

const WorldConfig& World::config() const { return impl_->cfg; }
int World::n_pes() const { return impl_->cfg.nPEs; }

int World::island_of(int pe) const
{
    impl_->check_pe(pe);
    return impl_->cfg.islands[pe];
}

void World::reseed(std::uint64_t seed)
{
    std::lock_guard lk(impl_->mu);
    impl_->cfg.seed = seed;
    impl_->rng.seed(seed);
}

SymmetricBuffer World::alloc_symmetric(std::span<const std::size_t> lengthPerPe, ElemKind kind, std::string name)
{
    std::lock_guard lk(impl_->mu);
    if (impl_->running)
        throw PgasError("symmetric allocation during a run");
    if (static_cast<int>(lengthPerPe.size()) != impl_->cfg.nPEs)
        throw CollectiveMismatch("allocation of '" + name + "' not called by every PE");
    for (std::size_t pe = 1; pe < lengthPerPe.size(); ++pe)
        if (lengthPerPe[pe] != lengthPerPe[0])
            throw CollectiveMismatch("allocation of '" + name + "': PE " + std::to_string(pe) + " asked for " +
                                     std::to_string(lengthPerPe[pe]) + " elements, PE 0 for " +
                                     std::to_string(lengthPerPe[0]));
    SymmetricBuffer desc{static_cast<std::uint32_t>(impl_->buffers.size()), lengthPerPe[0], kind};
    Impl::Buffer buf;
    buf.name = std::move(name);
    buf.desc = desc;
    buf.mem.assign(impl_->cfg.nPEs, std::vector<Word>(desc.length * desc.words_per_elem(), 0));
    impl_->buffers.push_back(std::move(buf));
    return desc;
}

SymmetricBuffer World::alloc_symmetric(std::size_t length, ElemKind kind, std::string name)
{
    std::vector<std::size_t> lengths(impl_->cfg.nPEs, length);
    return alloc_symmetric(lengths, kind, std::move(name));
}

SignalArray World::alloc_signals(std::size_t slots, std::string name)
{
    std::lock_guard lk(impl_->mu);
    if (impl_->running)
        throw PgasError("signal allocation during a run");
    SignalArray s{static_cast<std::uint32_t>(impl_->signals.size()), slots};
    impl_->signals.push_back({std::move(name), std::vector<std::vector<std::uint64_t>>(
                                                   impl_->cfg.nPEs, std::vector<std::uint64_t>(slots, 0))});
    return s;
}

BarrierId World::create_barrier(int participants)
{
    std::lock_guard lk(impl_->mu);
    if (participants < 1)
        throw PgasError("barrier needs at least one participant");
    impl_->barriers.push_back({participants, 0, 0});
    return BarrierId{static_cast<std::uint32_t>(impl_->barriers.size() - 1)};
}

const std::string& World::name_of(const SymmetricBuffer& buf) const { return impl_->buffer(buf).name; }
const std::string& World::name_of(const SignalArray& sig) const { return impl_->sigs(sig).name; }

std::vector<Vec3> World::host_read_real3(const SymmetricBuffer& buf, int pe, std::size_t offset,
                                         std::size_t count) const
{
    std::lock_guard lk(impl_->mu);
    impl_->check_pe(pe);
    const std::size_t w0 = impl_->word_range(buf, offset, count, 3);
    const auto& mem = impl_->buffers[buf.handle].mem[pe];
    std::vector<Vec3> out(count);
    for (std::size_t i = 0; i < count; ++i)
        for (int d = 0; d < 3; ++d)
            out[i][d] = std::bit_cast<double>(mem[w0 + 3 * i + d]);
    return out;
}

void World::host_write_real3(const SymmetricBuffer& buf, int pe, std::size_t offset, std::span<const Vec3> values)
{
    std::lock_guard lk(impl_->mu);
    impl_->check_pe(pe);
    const std::size_t w0 = impl_->word_range(buf, offset, values.size(), 3);
    auto& mem = impl_->buffers[buf.handle].mem[pe];
    for (std::size_t i = 0; i < values.size(); ++i)
        for (int d = 0; d < 3; ++d)
            mem[w0 + 3 * i + d] = std::bit_cast<Word>(values[i][d]);
}

std::vector<double> World::host_read_real(const SymmetricBuffer& buf, int pe, std::size_t offset,
                                          std::size_t count) const
{
    std::lock_guard lk(impl_->mu);
    impl_->check_pe(pe);
    const std::size_t w0 = impl_->word_range(buf, offset, count, 1);
    const auto& mem = impl_->buffers[buf.handle].mem[pe];
    std::vector<double> out(count);
    for (std::size_t i = 0; i < count; ++i)
        out[i] = std::bit_cast<double>(mem[w0 + i]);
    return out;
}

void World::host_write_real(const SymmetricBuffer& buf, int pe, std::size_t offset, std::span<const double> values)
{
    std::lock_guard lk(impl_->mu);
    impl_->check_pe(pe);
    const std::size_t w0 = impl_->word_range(buf, offset, values.size(), 1);
    auto& mem = impl_->buffers[buf.handle].mem[pe];
    for (std::size_t i = 0; i < values.size(); ++i)
        mem[w0 + i] = std::bit_cast<Word>(values[i]);
}

std::uint64_t World::host_signal(const SignalArray& sig, int pe, std::size_t slot) const
{
    std::lock_guard lk(impl_->mu);
    impl_->check_pe(pe);
    const auto& s = impl_->sigs(sig);
    if (slot >= sig.slots)
        throw OutOfBounds("signal slot out of range");
    return s.value[pe][slot];
}

void World::host_reset_counters(const SignalArray& sig)
{
    std::lock_guard lk(impl_->mu);
    for (auto& v : impl_->sigs(sig).value)
        std::fill(v.begin(), v.end(), 0);
}

std::optional<PeerRef> World::peer_ref(const SymmetricBuffer& buf, int from, int target) const
{
    impl_->check_pe(from);
    impl_->check_pe(target);
    if (!same_island(from, target))
        return std::nullopt;
    return PeerRef{buf, target};
}

ExecutionRecord World::run(std::vector<Program> programs)
{
    auto& im = *impl_;
    {
        std::lock_guard lk(im.mu);
        if (im.running)
            throw PgasError("world is already running");
        im.running = true;
        im.ctxs.clear();
        im.record = ExecutionRecord{};
        im.aborted = false;
        im.error = nullptr;
        im.deadlock.reset();
        im.blockedCount = 0;
        im.current = -1;
        for (auto& p : programs) {
            im.check_pe(p.pe);
            auto c = std::make_unique<Impl::Context>();
            c->id = static_cast<int>(im.ctxs.size());
            c->pe = p.pe;
            c->label = std::move(p.label);
            c->body = std::move(p.body);
            im.ctxs.push_back(std::move(c));
        }
        im.live = static_cast<int>(im.ctxs.size());
        im.record.contexts = im.ctxs.size();
        im.barriers.push_back({std::max(1, im.live), 0, 0});
        im.allBarrier = BarrierId{static_cast<std::uint32_t>(im.barriers.size() - 1)};
    }
    for (auto& c : im.ctxs) {
        Impl::Context* raw = c.get();
        c->thread = std::thread([this, raw] { impl_->thread_main(*raw, *this); });
    }
    {
        std::lock_guard lk(im.mu);
        if (im.deterministic() && !im.ctxs.empty()) {
            im.current = im.pick_runnable();
            im.ctxs[im.current]->cv.notify_all();
        }
    }
    for (auto& c : im.ctxs)
        c->thread.join();

    std::lock_guard lk(im.mu);
    im.running = false;
    im.barriers.pop_back();
    if (im.error) {
        im.storeBuffers.assign(im.cfg.nPEs, {});
        im.inflight.clear();
        std::rethrow_exception(im.error);
    }
    if (im.deadlock) {
        im.storeBuffers.assign(im.cfg.nPEs, {});
        im.inflight.clear();
        throw *im.deadlock;
    }
    // end of launch: everything issued completes
    for (int pe = 0; pe < im.cfg.nPEs; ++pe)
        im.flush(pe, -1);
    while (!im.inflight.empty())
        im.deliver(0, -1);
    im.ctxs.clear();
    return std::move(im.record);
}

// ---- Pe ----

namespace {

template <typename Fn>
auto with_ctx(World::Impl& im, int ctx, Fn&& fn)
{
    std::unique_lock lk(im.mu);
    auto& self = *im.ctxs[ctx];
    im.switch_point(lk, self);
    return fn(lk, self);
}

std::vector<Word> to_words(std::span<const Vec3> v)
{
    std::vector<Word> w(v.size() * 3);
    for (std::size_t i = 0; i < v.size(); ++i)
        for (int d = 0; d < 3; ++d)
            w[3 * i + d] = std::bit_cast<Word>(v[i][d]);
    return w;
}

std::vector<Word> to_words(std::span<const double> v)
{
    std::vector<Word> w(v.size());
    for (std::size_t i = 0; i < v.size(); ++i)
        w[i] = std::bit_cast<Word>(v[i]);
    return w;
}

} // namespace

int Pe::n_pes() const { return world_->n_pes(); }

const std::string& Pe::label() const { return world_->impl_->ctxs[ctx_]->label; }

std::optional<PeerRef> Pe::peer_ref(const SymmetricBuffer& buf, int target) const
{
    return world_->peer_ref(buf, pe_, target);
}

std::vector<Vec3> Pe::read_real3(const SymmetricBuffer& buf, std::size_t offset, std::size_t count)
{
    auto& im = *world_->impl_;
    return with_ctx(im, ctx_, [&](auto&, auto&) {
        const std::size_t w0 = im.word_range(buf, offset, count, 3);
        std::vector<Vec3> out(count);
        for (std::size_t i = 0; i < count; ++i)
            for (int d = 0; d < 3; ++d)
                out[i][d] = std::bit_cast<double>(im.load(pe_, buf.handle, pe_, w0 + 3 * i + d));
        return out;
    });
}

std::vector<Vec3> Pe::gather_real3(const SymmetricBuffer& buf, std::span<const std::int32_t> indices)
{
    auto& im = *world_->impl_;
    return with_ctx(im, ctx_, [&](auto&, auto&) {
        std::vector<Vec3> out(indices.size());
        for (std::size_t i = 0; i < indices.size(); ++i) {
            const std::size_t w0 = im.word_range(buf, static_cast<std::size_t>(indices[i]), 1, 3);
            for (int d = 0; d < 3; ++d)
                out[i][d] = std::bit_cast<double>(im.load(pe_, buf.handle, pe_, w0 + d));
        }
        return out;
    });
}

void Pe::write_real3(const SymmetricBuffer& buf, std::size_t offset, std::span<const Vec3> values)
{
    auto& im = *world_->impl_;
    with_ctx(im, ctx_, [&](auto&, auto&) {
        const std::size_t w0 = im.word_range(buf, offset, values.size(), 3);
        for (std::size_t i = 0; i < values.size(); ++i)
            for (int d = 0; d < 3; ++d)
                im.store(pe_, buf.handle, pe_, w0 + 3 * i + d, std::bit_cast<Word>(values[i][d]));
        return 0;
    });
}

void Pe::scatter_real3(const SymmetricBuffer& buf, std::span<const std::int32_t> indices,
                       std::span<const Vec3> values)
{
    if (indices.size() != values.size())
        throw PgasError("scatter: index and value counts differ");
    auto& im = *world_->impl_;
    with_ctx(im, ctx_, [&](auto&, auto&) {
        for (std::size_t i = 0; i < indices.size(); ++i) {
            const std::size_t w0 = im.word_range(buf, static_cast<std::size_t>(indices[i]), 1, 3);
            for (int d = 0; d < 3; ++d)
                im.store(pe_, buf.handle, pe_, w0 + d, std::bit_cast<Word>(values[i][d]));
        }
        return 0;
    });
}

void Pe::atomic_add_real3(const SymmetricBuffer& buf, std::span<const std::int32_t> indices,
                          std::span<const Vec3> values)
{
    if (indices.size() != values.size())
        throw PgasError("atomic add: index and value counts differ");
    auto& im = *world_->impl_;
    with_ctx(im, ctx_, [&](auto&, auto& self) {
        auto& mem = im.buffers[buf.handle].mem[pe_];
        for (std::size_t i = 0; i < indices.size(); ++i) {
            const std::size_t w0 = im.word_range(buf, static_cast<std::size_t>(indices[i]), 1, 3);
            for (int d = 0; d < 3; ++d)
                mem[w0 + d] = std::bit_cast<Word>(std::bit_cast<double>(mem[w0 + d]) + values[i][d]);
        }
        im.log(EventKind::AtomicAdd, pe_, self.id, pe_, im.buffers[buf.handle].name, 0, 0, indices.size());
        return 0;
    });
}

std::vector<double> Pe::read_real(const SymmetricBuffer& buf, std::size_t offset, std::size_t count)
{
    auto& im = *world_->impl_;
    return with_ctx(im, ctx_, [&](auto&, auto&) {
        const std::size_t w0 = im.word_range(buf, offset, count, 1);
        std::vector<double> out(count);
        for (std::size_t i = 0; i < count; ++i)
            out[i] = std::bit_cast<double>(im.load(pe_, buf.handle, pe_, w0 + i));
        return out;
    });
}

void Pe::write_real(const SymmetricBuffer& buf, std::size_t offset, std::span<const double> values)
{
    auto& im = *world_->impl_;
    with_ctx(im, ctx_, [&](auto&, auto&) {
        const std::size_t w0 = im.word_range(buf, offset, values.size(), 1);
        for (std::size_t i = 0; i < values.size(); ++i)
            im.store(pe_, buf.handle, pe_, w0 + i, std::bit_cast<Word>(values[i]));
        return 0;
    });
}

namespace {

void require_direct(const World& w, int from, const PeerRef& ref)
{
    if (!w.same_island(from, ref.pe))
        throw NoDirectAccess("PE " + std::to_string(from) + " has no direct access to PE " + std::to_string(ref.pe));
}

} // namespace

void Pe::write_direct(const PeerRef& ref, std::size_t offset, std::span<const Vec3> values)
{
    require_direct(*world_, pe_, ref);
    auto& im = *world_->impl_;
    with_ctx(im, ctx_, [&](auto&, auto& self) {
        const std::size_t w0 = im.word_range(ref.buf, offset, values.size(), 3);
        const auto words = to_words(values);
        for (std::size_t i = 0; i < words.size(); ++i)
            im.store(pe_, ref.buf.handle, ref.pe, w0 + i, words[i]);
        im.log(EventKind::Write, pe_, self.id, ref.pe, im.buffers[ref.buf.handle].name, offset, 0, values.size());
        return 0;
    });
}

std::vector<Vec3> Pe::read_direct(const PeerRef& ref, std::size_t offset, std::size_t count)
{
    require_direct(*world_, pe_, ref);
    auto& im = *world_->impl_;
    return with_ctx(im, ctx_, [&](auto&, auto& self) {
        const std::size_t w0 = im.word_range(ref.buf, offset, count, 3);
        std::vector<Vec3> out(count);
        for (std::size_t i = 0; i < count; ++i)
            for (int d = 0; d < 3; ++d)
                out[i][d] = std::bit_cast<double>(im.load(pe_, ref.buf.handle, ref.pe, w0 + 3 * i + d));
        im.log(EventKind::Get, pe_, self.id, ref.pe, im.buffers[ref.buf.handle].name, offset, 0, count, "direct");
        return out;
    });
}

void Pe::write_direct_real(const PeerRef& ref, std::size_t offset, std::span<const double> values)
{
    require_direct(*world_, pe_, ref);
    auto& im = *world_->impl_;
    with_ctx(im, ctx_, [&](auto&, auto& self) {
        const std::size_t w0 = im.word_range(ref.buf, offset, values.size(), 1);
        for (std::size_t i = 0; i < values.size(); ++i)
            im.store(pe_, ref.buf.handle, ref.pe, w0 + i, std::bit_cast<Word>(values[i]));
        im.log(EventKind::Write, pe_, self.id, ref.pe, im.buffers[ref.buf.handle].name, offset, 0, values.size());
        return 0;
    });
}

std::vector<double> Pe::read_direct_real(const PeerRef& ref, std::size_t offset, std::size_t count)
{
    require_direct(*world_, pe_, ref);
    auto& im = *world_->impl_;
    return with_ctx(im, ctx_, [&](auto&, auto& self) {
        const std::size_t w0 = im.word_range(ref.buf, offset, count, 1);
        std::vector<double> out(count);
        for (std::size_t i = 0; i < count; ++i)
            out[i] = std::bit_cast<double>(im.load(pe_, ref.buf.handle, ref.pe, w0 + i));
        im.log(EventKind::Get, pe_, self.id, ref.pe, im.buffers[ref.buf.handle].name, offset, 0, count, "direct");
        return out;
    });
}

namespace {

void put_words(World::Impl& im, int pe, int ctx, const SymmetricBuffer& dest, int target, std::size_t offset,
               std::size_t count, std::size_t wpe, const std::vector<Word>& words)
{
    with_ctx(im, ctx, [&](auto&, auto& self) {
        im.check_pe(target);
        const std::size_t w0 = im.word_range(dest, offset, count, wpe);
        for (std::size_t i = 0; i < words.size(); ++i)
            im.store(pe, dest.handle, target, w0 + i, words[i]);
        im.log(EventKind::Put, pe, self.id, target, im.buffers[dest.handle].name, offset, 0, count);
        return 0;
    });
}

void put_signal_words(World::Impl& im, int pe, int ctx, const SymmetricBuffer& dest, int target, std::size_t offset,
                      std::size_t count, std::size_t wpe, std::vector<Word> words, const SignalArray& sig,
                      std::size_t slot, std::uint64_t value)
{
    with_ctx(im, ctx, [&](auto&, auto& self) {
        im.check_pe(target);
        const std::size_t w0 = im.word_range(dest, offset, count, wpe);
        if (slot >= sig.slots)
            throw OutOfBounds("signal slot " + std::to_string(slot) + " out of range");
        im.sigs(sig);
        im.log(EventKind::PutSignal, pe, self.id, target, im.signals[sig.handle].name, slot, value, count,
               im.buffers[dest.handle].name);
        im.inflight.push_back({pe, dest.handle, target, w0, std::move(words), sig.handle, slot, value});
        if (!im.weak())
            im.deliver(im.inflight.size() - 1, self.id);
        return 0;
    });
}

} // namespace

void Pe::put(const SymmetricBuffer& dest, int target, std::size_t offset, std::span<const Vec3> src)
{
    put_words(*world_->impl_, pe_, ctx_, dest, target, offset, src.size(), 3, to_words(src));
}

void Pe::put_real(const SymmetricBuffer& dest, int target, std::size_t offset, std::span<const double> src)
{
    put_words(*world_->impl_, pe_, ctx_, dest, target, offset, src.size(), 1, to_words(src));
}

void Pe::put_with_signal(const SymmetricBuffer& dest, int target, std::size_t offset, std::span<const Vec3> src,
                         const SignalArray& sig, std::size_t slot, std::uint64_t value)
{
    put_signal_words(*world_->impl_, pe_, ctx_, dest, target, offset, src.size(), 3, to_words(src), sig, slot, value);
}

void Pe::put_with_signal_real(const SymmetricBuffer& dest, int target, std::size_t offset,
                              std::span<const double> src, const SignalArray& sig, std::size_t slot,
                              std::uint64_t value)
{
    put_signal_words(*world_->impl_, pe_, ctx_, dest, target, offset, src.size(), 1, to_words(src), sig, slot, value);
}

std::vector<Vec3> Pe::get(const SymmetricBuffer& src, int target, std::size_t offset, std::size_t count)
{
    auto& im = *world_->impl_;
    return with_ctx(im, ctx_, [&](auto&, auto& self) {
        im.check_pe(target);
        const std::size_t w0 = im.word_range(src, offset, count, 3);
        std::vector<Vec3> out(count);
        for (std::size_t i = 0; i < count; ++i)
            for (int d = 0; d < 3; ++d)
                out[i][d] = std::bit_cast<double>(im.load(pe_, src.handle, target, w0 + 3 * i + d));
        im.log(EventKind::Get, pe_, self.id, target, im.buffers[src.handle].name, offset, 0, count);
        return out;
    });
}

std::vector<double> Pe::get_real(const SymmetricBuffer& src, int target, std::size_t offset, std::size_t count)
{
    auto& im = *world_->impl_;
    return with_ctx(im, ctx_, [&](auto&, auto& self) {
        im.check_pe(target);
        const std::size_t w0 = im.word_range(src, offset, count, 1);
        std::vector<double> out(count);
        for (std::size_t i = 0; i < count; ++i)
            out[i] = std::bit_cast<double>(im.load(pe_, src.handle, target, w0 + i));
        im.log(EventKind::Get, pe_, self.id, target, im.buffers[src.handle].name, offset, 0, count);
        return out;
    });
}

void Pe::signal_store(const SignalArray& sig, std::size_t slot, int target, std::uint64_t value, Ordering order)
{
    auto& im = *world_->impl_;
    with_ctx(im, ctx_, [&](auto&, auto& self) {
        im.check_pe(target);
        im.sigs(sig);
        if (slot >= sig.slots)
            throw OutOfBounds("signal slot " + std::to_string(slot) + " out of range");
        if (order == Ordering::Release)
            im.flush(pe_, self.id);
        im.set_signal(target, sig.handle, slot, value);
        im.log(EventKind::SignalStore, pe_, self.id, target, im.signals[sig.handle].name, slot, value, 0,
               std::string(to_string(order)));
        im.stateCv.notify_all();
        return 0;
    });
}

void Pe::signal_wait_until(const SignalArray& sig, std::size_t slot, std::uint64_t value)
{
    auto& im = *world_->impl_;
    with_ctx(im, ctx_, [&](auto& lk, auto& self) {
        im.sigs(sig);
        if (slot >= sig.slots)
            throw OutOfBounds("signal slot " + std::to_string(slot) + " out of range");
        const auto& counter = im.signals[sig.handle].value[pe_][slot];
        im.block_until(
            lk, self, [&counter, value] { return counter >= value; },
            im.signals[sig.handle].name + "[" + std::to_string(slot) + "] >= " + std::to_string(value));
        im.log(EventKind::SignalWait, pe_, self.id, pe_, im.signals[sig.handle].name, slot, counter, 0);
        return 0;
    });
}

std::uint64_t Pe::signal_read(const SignalArray& sig, std::size_t slot)
{
    auto& im = *world_->impl_;
    return with_ctx(im, ctx_, [&](auto&, auto&) {
        im.sigs(sig);
        if (slot >= sig.slots)
            throw OutOfBounds("signal slot " + std::to_string(slot) + " out of range");
        return im.signals[sig.handle].value[pe_][slot];
    });
}

std::uint64_t Pe::atomic_inc_release(const SignalArray& counters, std::size_t slot)
{
    auto& im = *world_->impl_;
    return with_ctx(im, ctx_, [&](auto&, auto& self) {
        im.sigs(counters);
        if (slot >= counters.slots)
            throw OutOfBounds("counter slot " + std::to_string(slot) + " out of range");
        auto& v = im.signals[counters.handle].value[pe_][slot];
        const std::uint64_t old = v++;
        im.log(EventKind::AtomicInc, pe_, self.id, pe_, im.signals[counters.handle].name, slot, old, 0);
        im.stateCv.notify_all();
        return old;
    });
}

void Pe::quiet()
{
    auto& im = *world_->impl_;
    with_ctx(im, ctx_, [&](auto&, auto& self) {
        im.flush(pe_, self.id);
        im.deliver_from(pe_, self.id);
        im.log(EventKind::Quiet, pe_, self.id, -1, {}, 0, 0, 0);
        return 0;
    });
}

void Pe::barrier_wait(BarrierId b)
{
    auto& im = *world_->impl_;
    with_ctx(im, ctx_, [&](auto& lk, auto& self) {
        if (b.id >= im.barriers.size())
            throw PgasError("unknown barrier");
        auto& bar = im.barriers[b.id];
        const std::uint64_t gen = bar.generation;
        if (++bar.arrived == bar.participants) {
            bar.arrived = 0;
            ++bar.generation;
            im.stateCv.notify_all();
        } else {
            im.block_until(
                lk, self, [&bar, gen] { return bar.generation != gen; }, "barrier " + std::to_string(b.id));
        }
        return 0;
    });
}

void Pe::barrier_all()
{
    quiet();
    BarrierId all;
    {
        std::lock_guard lk(world_->impl_->mu);
        all = world_->impl_->allBarrier;
    }
    barrier_wait(all);
    auto& im = *world_->impl_;
    std::lock_guard lk(im.mu);
    im.log(EventKind::Barrier, pe_, ctx_, -1, {}, 0, 0, 0);
}

void Pe::note(std::string detail, std::uint64_t value)
{
    auto& im = *world_->impl_;
    std::lock_guard lk(im.mu);
    im.log(EventKind::Note, pe_, ctx_, -1, {}, 0, value, 0, std::move(detail));
}

ExecutionRecord run_world(const WorldConfig& cfg, std::vector<std::function<void(Pe&)>> perPe)
{
    World world(cfg);
    std::vector<Program> programs;
    for (std::size_t pe = 0; pe < perPe.size(); ++pe)
        programs.push_back({static_cast<int>(pe), "pe" + std::to_string(pe), std::move(perPe[pe])});
    return world.run(std::move(programs));
}

} // namespace halox::pgas
