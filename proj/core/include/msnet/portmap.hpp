#pragma once

#include "msnet/types.hpp"

#include <array>
#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

namespace msnet {

inline constexpr std::uint32_t kPortCount = 65536;

enum class BindKind : std::uint8_t { Static = 0, Dynamic = 1 };

struct PortBinding {
    AppId app;
    BindKind kind = BindKind::Static;

    friend bool operator==(const PortBinding&, const PortBinding&) = default;
};

struct PortRange {
    std::uint16_t lo = 49152;
    std::uint16_t hi = 65535;
};

/// Per-protocol 64K port to application table. Writers are serialized by the
/// owner (the supervisor); readers may look up entries from any thread, each
/// entry being a single atomic word.
class PortmapTable {
  public:
    explicit PortmapTable(PortRange dynamic_range = {});
    PortmapTable(const PortmapTable&) = delete;
    PortmapTable& operator=(const PortmapTable&) = delete;

    /// port == 0 allocates the lowest free port in the dynamic range.
    /// Throws PortInUse or Exhausted. Re-binding a port the app already holds
    /// returns it unchanged.
    std::uint16_t portbind(AppId app, Proto proto, std::uint16_t port);
    /// Throws NotOwner or NotBound.
    void port_release(AppId app, Proto proto, std::uint16_t port);
    /// Returns the number of entries freed.
    std::size_t release_all(AppId app);
    void clear();
    /// Writes one entry verbatim, kind included; used by snapshot restore.
    void restore(Proto proto, std::uint16_t port, PortBinding binding);

    std::optional<PortBinding> binding(Proto proto, std::uint16_t port) const noexcept;
    std::optional<AppId> lookup(Proto proto, std::uint16_t port) const noexcept;

    /// Every bound entry, ordered by (proto, port).
    struct Entry {
        Proto proto;
        std::uint16_t port;
        PortBinding binding;
    };
    std::vector<Entry> entries() const;

    const PortRange& dynamic_range() const noexcept { return range_; }

  private:
    std::atomic<std::uint64_t>& slot(Proto proto, std::uint16_t port) noexcept;
    const std::atomic<std::uint64_t>& slot(Proto proto, std::uint16_t port) const noexcept;

    PortRange range_;
    std::array<std::unique_ptr<std::atomic<std::uint64_t>[]>, 2> tables_;
};

/// Read-only window onto a PortmapTable, the only form handed to the network
/// server. It has no mutating members.
class PortmapView {
  public:
    PortmapView() = default;
    explicit PortmapView(const PortmapTable& table) : table_(&table) {}

    std::optional<AppId> lookup(Proto proto, std::uint16_t port) const noexcept
    {
        return table_ ? table_->lookup(proto, port) : std::nullopt;
    }
    std::optional<PortBinding> binding(Proto proto, std::uint16_t port) const noexcept
    {
        return table_ ? table_->binding(proto, port) : std::nullopt;
    }

  private:
    const PortmapTable* table_ = nullptr;
};

}  // namespace msnet
