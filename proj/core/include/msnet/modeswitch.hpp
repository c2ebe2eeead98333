#pragma once

#include "msnet/types.hpp"

#include <chrono>
#include <optional>
#include <string_view>
#include <vector>

namespace msnet {

class Supervisor;

enum class SwitchStep : std::uint8_t {
    VfAlloc,
    IpDeactivate,
    IpActivate,
    ArpAnnounce,
    VifRetarget,
    HandlerAdd,
    HandlerRemove,
    VfFree,
};

std::string_view switch_step_name(SwitchStep s) noexcept;

/// Record of one mode switch. Timestamps are wall-clock; the steps list holds
/// those that completed, in execution order.
struct SwitchPlan {
    AppId app;
    Mode from = Mode::Server;
    Mode to = Mode::Direct;
    std::vector<SwitchStep> steps;
    std::chrono::steady_clock::time_point started_at;
    std::chrono::steady_clock::time_point finished_at;
    bool aborted = false;
};

/// Moves an app from the server path onto a freshly allocated VF, keeping its
/// IP: VF alloc, IP off the PF, IP onto the VF, ARP announce, Vif retarget,
/// server handler removal. No pause-and-drain: frames in flight during the
/// switch may be lost and are recovered by retransmission. Throws WrongMode,
/// UnknownApp, or VfExhausted (after rolling back to no change).
SwitchPlan switch_to_direct(Supervisor& sup, AppId app);

/// The same steps in reverse: handler back, Vif onto the server rings, IP off
/// the VF and back onto the PF, ARP announce from the PF, VF freed. Throws
/// WrongMode, UnknownApp, or NoServerChannel for apps registered Direct.
SwitchPlan switch_to_server(Supervisor& sup, AppId app);

/// finished_at - started_at; nullopt for aborted plans.
std::optional<std::chrono::nanoseconds> measure_switch_latency(const SwitchPlan& plan);

}  // namespace msnet
