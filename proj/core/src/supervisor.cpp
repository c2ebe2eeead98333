#include "msnet/supervisor.hpp"

#include "msnet/error.hpp"

#include <algorithm>
#include <cstring>

namespace msnet {

// ---------------------------------------------------------------- IpPool

IpPool::IpPool(Ipv4Addr first, Ipv4Addr last) : first_(first.to_u32()), last_(last.to_u32())
{
    if (first_ > last_)
        throw Error(Errc::InvalidArgument, "empty IP pool range");
}

Ipv4Addr IpPool::alloc()
{
    std::uint32_t candidate = first_;
    for (auto used : allocated_) {
        if (used != candidate)
            break;
        if (candidate == last_)
            throw Error(Errc::PoolExhausted, "no free address in pool");
        ++candidate;
    }
    if (candidate > last_ || allocated_.size() == size())
        throw Error(Errc::PoolExhausted, "no free address in pool");
    allocated_.insert(candidate);
    return Ipv4Addr::from_u32(candidate);
}

void IpPool::free(Ipv4Addr ip)
{
    if (allocated_.erase(ip.to_u32()) == 0)
        throw Error(Errc::NotAllocated, ip.to_string());
}

void IpPool::claim(Ipv4Addr ip)
{
    const auto v = ip.to_u32();
    if (v < first_ || v > last_)
        throw Error(Errc::NotAllocated, ip.to_string() + " outside pool");
    if (!allocated_.insert(v).second)
        throw Error(Errc::IpConflict, ip.to_string());
}

std::vector<Ipv4Addr> IpPool::allocated() const
{
    std::vector<Ipv4Addr> out;
    for (auto v : allocated_)
        out.push_back(Ipv4Addr::from_u32(v));
    return out;
}

// ------------------------------------------------------------ Supervisor

Supervisor::Supervisor(Medium& medium, SupervisorConfig config)
    : medium_(medium)
    , config_(config)
    , portmap_(config.dynamic_range)
    , pool_(config.pool_first, config.pool_last)
    , server_signal_(medium.pf_signal())
{
}

Supervisor::~Supervisor() = default;

AppRecord& Supervisor::record_locked(AppId id)
{
    auto it = apps_.find(id);
    if (it == apps_.end())
        throw Error(Errc::UnknownApp, "app " + std::to_string(id.value));
    return it->second;
}

HandlerSpec Supervisor::handler_spec_locked(const AppRecord& r) const
{
    return HandlerSpec{r.id, r.mac, r.ip, r.link};
}

Registration Supervisor::app_register(const std::string& name, Mode mode,
                                      std::shared_ptr<ConsumerSignal> app_signal,
                                      bool fallback_to_server)
{
    std::lock_guard lock(mu_);
    if (!app_signal)
        app_signal = std::make_shared<ConsumerSignal>();

    AppRecord* reattach = nullptr;
    for (auto& [id, r] : apps_) {
        if (r.name != name)
            continue;
        if (!r.detached)
            throw Error(Errc::InvalidArgument, "app name '" + name + "' already registered");
        reattach = &r;
    }

    const AppId id = reattach ? reattach->id : AppId{next_app_id_};
    const Ipv4Addr ip = reattach ? reattach->ip : pool_.alloc();

    Registration reg;
    reg.id = id;
    reg.ip = ip;
    if (mode == Mode::Direct) {
        try {
            reg.vf = medium_.vf_alloc(id, app_signal);
        } catch (const Error& e) {
            if (e.code() != Errc::VfExhausted || !fallback_to_server) {
                if (!reattach)
                    pool_.free(ip);
                throw;
            }
            reg.fell_back = true;
            mode = Mode::Server;
        }
    }
    reg.mode = mode;
    if (mode == Mode::Direct) {
        medium_.ip_assign(*reg.vf, ip);
        reg.mac = reg.vf->mac();
    } else {
        reg.link = std::make_shared<ServerLink>(id, config_.ring_capacity, server_signal_,
                                                app_signal);
        medium_.ip_assign(*medium_.pf(), ip);
        reg.mac = medium_.pf()->mac();
    }

    AppRecord rec;
    rec.id = id;
    rec.name = name;
    rec.mac = reg.mac;
    rec.ip = ip;
    rec.mode = mode;
    rec.link = reg.link;
    rec.vf = reg.vf;
    rec.signal = app_signal;
    if (reattach)
        *reattach = rec;
    else
        apps_.emplace(id, rec);
    if (!reattach)
        ++next_app_id_;

    if (mode == Mode::Server && server_ && server_->alive())
        server_->add_handler(handler_spec_locked(rec));
    return reg;
}

void Supervisor::app_unregister(AppId app)
{
    std::lock_guard lock(mu_);
    AppRecord& r = record_locked(app);
    if (server_ && server_->alive() && r.link)
        server_->remove_handler(app);
    portmap_.release_all(app);
    if (!r.detached) {
        const auto holder = medium_.ip_holder(r.ip);
        if (r.vf) {
            if (holder == r.vf->id())
                medium_.ip_unassign(*r.vf, r.ip);
            medium_.vf_free(*r.vf);
        } else if (holder == medium_.pf()->id()) {
            medium_.ip_unassign(*medium_.pf(), r.ip);
        }
    }
    if (pool_.is_allocated(r.ip))
        pool_.free(r.ip);
    apps_.erase(app);
}

void Supervisor::attach_vif(AppId app, std::shared_ptr<Vif> vif)
{
    std::lock_guard lock(mu_);
    record_locked(app).vif = std::move(vif);
}

std::optional<AppRecord> Supervisor::app(AppId id) const
{
    std::lock_guard lock(mu_);
    auto it = apps_.find(id);
    if (it == apps_.end())
        return std::nullopt;
    return it->second;
}

std::optional<AppRecord> Supervisor::app_by_name(const std::string& name) const
{
    std::lock_guard lock(mu_);
    for (const auto& [id, r] : apps_)
        if (r.name == name)
            return r;
    return std::nullopt;
}

std::vector<AppRecord> Supervisor::apps() const
{
    std::lock_guard lock(mu_);
    std::vector<AppRecord> out;
    for (const auto& [id, r] : apps_)
        out.push_back(r);
    return out;
}

std::uint16_t Supervisor::portbind(AppId app, Proto proto, std::uint16_t port)
{
    std::lock_guard lock(mu_);
    record_locked(app);
    return portmap_.portbind(app, proto, port);
}

void Supervisor::port_release(AppId app, Proto proto, std::uint16_t port)
{
    std::lock_guard lock(mu_);
    portmap_.port_release(app, proto, port);
}

std::size_t Supervisor::release_all(AppId app)
{
    std::lock_guard lock(mu_);
    return portmap_.release_all(app);
}

Ipv4Addr Supervisor::ip_alloc()
{
    std::lock_guard lock(mu_);
    return pool_.alloc();
}

void Supervisor::ip_free(Ipv4Addr ip)
{
    std::lock_guard lock(mu_);
    pool_.free(ip);
}

std::size_t Supervisor::ip_allocated_count() const
{
    std::lock_guard lock(mu_);
    return pool_.allocated_count();
}

std::shared_ptr<NetServer> Supervisor::server_start(sched::WorkerPool* pool)
{
    std::lock_guard lock(mu_);
    if (server_ && !server_->halted())
        throw Error(Errc::AlreadyRunning, "network server epoch " +
                                              std::to_string(server_->epoch()) + " still running");
    std::vector<HandlerSpec> handlers;
    for (const auto& [id, r] : apps_)
        if (r.mode == Mode::Server && r.link && !r.detached)
            handlers.push_back(handler_spec_locked(r));
    auto server = std::make_shared<NetServer>(medium_, PortmapView(portmap_), epoch_ + 1,
                                              std::move(handlers));
    ++epoch_;
    server_ = server;
    if (pool)
        server->attach(*pool);
    return server;
}

void Supervisor::server_crash()
{
    std::shared_ptr<NetServer> s;
    {
        std::lock_guard lock(mu_);
        s = server_;
    }
    if (s)
        s->crash();
}

std::shared_ptr<NetServer> Supervisor::server() const
{
    std::lock_guard lock(mu_);
    return server_;
}

std::uint64_t Supervisor::server_epoch() const
{
    std::lock_guard lock(mu_);
    return epoch_;
}

// -------------------------------------------------------------- snapshot

namespace {

constexpr std::array<std::uint8_t, 4> kMagic{'M', 'S', 'N', 'S'};
constexpr std::uint16_t kVersion = 1;

enum RecordType : std::uint8_t {
    kRecMeta = 1,
    kRecPool = 2,
    kRecApp = 3,
    kRecPort = 4,
    kRecEnd = 0xff,
};

class Writer {
  public:
    void u8(std::uint8_t v) { out_.push_back(v); }
    void u16(std::uint16_t v)
    {
        u8(static_cast<std::uint8_t>(v));
        u8(static_cast<std::uint8_t>(v >> 8));
    }
    void u32(std::uint32_t v)
    {
        u16(static_cast<std::uint16_t>(v));
        u16(static_cast<std::uint16_t>(v >> 16));
    }
    void bytes(std::span<const std::uint8_t> b) { out_.insert(out_.end(), b.begin(), b.end()); }

    /// Starts a record; returns the offset of its length field.
    std::size_t begin(std::uint8_t type)
    {
        u8(type);
        const auto at = out_.size();
        u32(0);
        return at;
    }
    void end(std::size_t len_at)
    {
        const auto len = static_cast<std::uint32_t>(out_.size() - len_at - 4);
        for (int i = 0; i < 4; ++i)
            out_[len_at + i] = static_cast<std::uint8_t>(len >> (8 * i));
    }

    std::vector<std::uint8_t> take() { return std::move(out_); }

  private:
    std::vector<std::uint8_t> out_;
};

class Reader {
  public:
    Reader(std::span<const std::uint8_t> b, std::size_t base) : b_(b), base_(base) {}

    std::size_t offset() const noexcept { return base_ + pos_; }
    bool done() const noexcept { return pos_ == b_.size(); }

    void need(std::size_t n, const char* what) const
    {
        if (b_.size() - pos_ < n)
            throw CorruptSnapshot(offset(), std::string("truncated ") + what);
    }
    std::uint8_t u8(const char* what)
    {
        need(1, what);
        return b_[pos_++];
    }
    std::uint16_t u16(const char* what)
    {
        need(2, what);
        const auto v = static_cast<std::uint16_t>(b_[pos_] | (b_[pos_ + 1] << 8));
        pos_ += 2;
        return v;
    }
    std::uint32_t u32(const char* what)
    {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= std::uint32_t{b_[pos_ + i]} << (8 * i);
        pos_ += 4;
        return v;
    }
    std::span<const std::uint8_t> take(std::size_t n, const char* what)
    {
        need(n, what);
        auto s = b_.subspan(pos_, n);
        pos_ += n;
        return s;
    }

  private:
    std::span<const std::uint8_t> b_;
    std::size_t base_;
    std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> Supervisor::registry_snapshot() const
{
    std::lock_guard lock(mu_);
    Writer w;
    w.bytes(kMagic);
    w.u16(kVersion);
    w.u16(0);

    auto at = w.begin(kRecMeta);
    w.u32(next_app_id_);
    w.end(at);

    at = w.begin(kRecPool);
    w.u32(pool_.first().to_u32());
    w.u32(pool_.last().to_u32());
    const auto allocated = pool_.allocated();
    w.u32(static_cast<std::uint32_t>(allocated.size()));
    for (auto ip : allocated)
        w.u32(ip.to_u32());
    w.end(at);

    for (const auto& [id, r] : apps_) {
        at = w.begin(kRecApp);
        w.u32(id.value);
        w.u16(static_cast<std::uint16_t>(r.name.size()));
        w.bytes(std::span(reinterpret_cast<const std::uint8_t*>(r.name.data()), r.name.size()));
        w.bytes(r.mac.octets);
        w.u32(r.ip.to_u32());
        w.u8(static_cast<std::uint8_t>(r.mode));
        w.u8(r.link || r.had_link ? 1 : 0);
        w.end(at);
    }

    for (const auto& e : portmap_.entries()) {
        at = w.begin(kRecPort);
        w.u8(static_cast<std::uint8_t>(e.proto));
        w.u16(e.port);
        w.u32(e.binding.app.value);
        w.u8(static_cast<std::uint8_t>(e.binding.kind));
        w.end(at);
    }

    at = w.begin(kRecEnd);
    w.end(at);
    return w.take();
}

void Supervisor::registry_restore(std::span<const std::uint8_t> bytes)
{
    Reader header(bytes, 0);
    const auto magic = header.take(4, "magic");
    if (!std::equal(magic.begin(), magic.end(), kMagic.begin()))
        throw CorruptSnapshot(0, "bad magic");
    if (const auto v = header.u16("version"); v != kVersion)
        throw CorruptSnapshot(4, "unsupported version " + std::to_string(v));
    header.u16("reserved");

    struct PortRec {
        Proto proto;
        std::uint16_t port;
        PortBinding binding;
    };
    std::optional<std::uint32_t> next_id;
    std::optional<IpPool> pool;
    std::map<AppId, AppRecord> apps;
    std::vector<PortRec> ports;
    bool ended = false;

    std::size_t pos = 8;
    while (!ended) {
        Reader rh(bytes.subspan(pos), pos);
        const auto type = rh.u8("record type");
        const auto len = rh.u32("record length");
        const std::size_t payload_at = pos + 5;
        if (bytes.size() - payload_at < len)
            throw CorruptSnapshot(payload_at, "record length " + std::to_string(len) +
                                                  " exceeds remaining bytes");
        Reader r(bytes.subspan(payload_at, len), payload_at);
        switch (type) {
        case kRecMeta:
            next_id = r.u32("next app id");
            break;
        case kRecPool: {
            const auto first = r.u32("pool first");
            const auto last = r.u32("pool last");
            if (first > last)
                throw CorruptSnapshot(payload_at, "inverted pool range");
            pool.emplace(Ipv4Addr::from_u32(first), Ipv4Addr::from_u32(last));
            const auto n = r.u32("pool count");
            for (std::uint32_t i = 0; i < n; ++i) {
                const auto at = r.offset();
                try {
                    pool->claim(Ipv4Addr::from_u32(r.u32("pool address")));
                } catch (const CorruptSnapshot&) {
                    throw;
                } catch (const Error& e) {
                    throw CorruptSnapshot(at, e.what());
                }
            }
            break;
        }
        case kRecApp: {
            AppRecord rec;
            rec.id = AppId{r.u32("app id")};
            const auto name_len = r.u16("name length");
            const auto name = r.take(name_len, "name");
            rec.name.assign(name.begin(), name.end());
            const auto mac = r.take(6, "mac");
            std::copy(mac.begin(), mac.end(), rec.mac.octets.begin());
            rec.ip = Ipv4Addr::from_u32(r.u32("ip"));
            const auto mode_at = r.offset();
            const auto mode = r.u8("mode");
            if (mode > 1)
                throw CorruptSnapshot(mode_at, "bad mode " + std::to_string(mode));
            rec.mode = static_cast<Mode>(mode);
            // Flags record whether a ring pair existed; a reattaching app gets
            // fresh handles for whatever mode it registers in.
            const auto flags_at = r.offset();
            const auto flags = r.u8("flags");
            if (flags > 1)
                throw CorruptSnapshot(flags_at, "bad app flags");
            rec.had_link = flags != 0;
            rec.detached = true;
            if (!rec.id || apps.contains(rec.id))
                throw CorruptSnapshot(payload_at, "bad or duplicate app id");
            apps.emplace(rec.id, std::move(rec));
            break;
        }
        case kRecPort: {
            PortRec p;
            const auto proto_at = r.offset();
            const auto proto = r.u8("proto");
            if (proto > 1)
                throw CorruptSnapshot(proto_at, "bad proto");
            p.proto = static_cast<Proto>(proto);
            p.port = r.u16("port");
            p.binding.app = AppId{r.u32("port owner")};
            const auto kind_at = r.offset();
            const auto kind = r.u8("bind kind");
            if (kind > 1 || p.port == 0 || !p.binding.app)
                throw CorruptSnapshot(kind_at, "bad port entry");
            p.binding.kind = static_cast<BindKind>(kind);
            ports.push_back(p);
            break;
        }
        case kRecEnd:
            ended = true;
            break;
        default:
            throw CorruptSnapshot(pos, "unknown record type " + std::to_string(type));
        }
        if (!r.done())
            throw CorruptSnapshot(r.offset(), "record has trailing bytes");
        pos = payload_at + len;
    }
    if (pos != bytes.size())
        throw CorruptSnapshot(pos, "trailing bytes after end record");
    if (!next_id || !pool)
        throw CorruptSnapshot(pos, "missing meta or pool record");

    std::lock_guard lock(mu_);
    for (auto& [id, rec] : apps) {
        auto live = apps_.find(id);
        if (live != apps_.end() && !live->second.detached && live->second.name == rec.name) {
            rec.link = live->second.link;
            rec.vf = live->second.vf;
            rec.vif = live->second.vif;
            rec.signal = live->second.signal;
            rec.detached = false;
            rec.had_link = false;
        }
    }
    apps_ = std::move(apps);
    pool_ = std::move(*pool);
    next_app_id_ = *next_id;
    portmap_.clear();
    for (const auto& p : ports)
        portmap_.restore(p.proto, p.port, p.binding);
}

}  // namespace msnet
