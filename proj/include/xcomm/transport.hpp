#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace xcomm {

using Bytes = std::vector<std::byte>;
using Tag   = std::uint32_t;

/// Wildcard for source filters.
inline constexpr int any_source = -1;

/// Matches a tag against a value under a mask; mask 0 accepts every tag.
struct TagFilter {
    Tag value = 0;
    Tag mask  = 0;

    static constexpr TagFilter any() noexcept {
        return {};
    }
    static constexpr TagFilter exact(Tag tag) noexcept {
        return {tag, ~Tag{0}};
    }
    constexpr bool matches(Tag tag) const noexcept {
        return (tag & mask) == (value & mask);
    }
};

struct Envelope {
    int   src = 0;
    int   dst = 0;
    Tag   tag = 0;
    Bytes payload;
};

struct ProbeInfo {
    int         src;
    Tag         tag;
    std::size_t size;

    friend bool operator==(ProbeInfo const&, ProbeInfo const&) = default;
};

/// Envelopes carrying user or collective data are `payload`; barrier tokens, headers and other
/// control traffic are `protocol`. Both count as envelopes; they are tallied separately.
enum class MessageClass { payload, protocol };

/// Per-rank counters for one measurement window.
struct TransportStats {
    std::uint64_t messages_sent         = 0; ///< payload envelopes, self-sends included
    std::uint64_t protocol_messages     = 0;
    std::uint64_t bytes_sent            = 0; ///< payload bytes of all envelopes
    std::uint64_t distinct_destinations = 0; ///< distinct non-self destinations of any envelope

    std::uint64_t envelopes() const noexcept {
        return messages_sent + protocol_messages;
    }
};

/// Completion flag of an acknowledged send. Becomes true once the receiver has consumed the envelope.
class SendHandle {
public:
    SendHandle() = default;
    explicit SendHandle(std::shared_ptr<std::atomic<bool>> done) : done_(std::move(done)) {}

    bool is_complete() const noexcept {
        return done_ && done_->load(std::memory_order_acquire);
    }

private:
    std::shared_ptr<std::atomic<bool>> done_;
};

/// One rank's attachment to a group. Owned by a single worker at a time; enqueueing into it from other
/// workers (or transport threads) is safe.
class Endpoint {
public:
    Endpoint(int rank, int size);
    Endpoint(Endpoint const&)            = delete;
    Endpoint& operator=(Endpoint const&) = delete;
    virtual ~Endpoint()                  = default;

    int rank() const noexcept {
        return rank_;
    }
    int size() const noexcept {
        return size_;
    }

    /// Buffered send: returns as soon as the payload has been taken over.
    void send(int dst, Tag tag, Bytes payload, MessageClass cls = MessageClass::payload);

    /// Acknowledged send: the handle completes once `dst` has consumed the envelope via recv/try_recv.
    SendHandle ssend_async(int dst, Tag tag, Bytes payload, MessageClass cls = MessageClass::payload);

    /// Metadata of the first pending envelope matching the filters, without consuming it.
    std::optional<ProbeInfo> probe(int src, TagFilter tag);

    /// Blocks until a matching envelope is available and consumes it.
    Envelope recv(int src, TagFilter tag);

    /// Consumes the first matching envelope if one is pending.
    std::optional<Envelope> try_recv(int src, TagFilter tag);

    /// Sleeps until a new envelope or acknowledgement arrives, or until `timeout` expires.
    void wait_for_activity(std::chrono::microseconds timeout);

    TransportStats stats() const;
    void           reset_stats();

    /// Wakes blocked receivers; further blocking receives on an empty queue throw TransportError.
    void close();
    bool closed() const;

protected:
    struct Pending {
        Envelope              env;
        std::function<void()> on_consume;
    };

    /// Delivers an envelope to a remote rank. `done` is non-null for acknowledged sends.
    virtual void transmit(Envelope env, std::shared_ptr<std::atomic<bool>> done) = 0;

    /// Called by the transport to hand an arriving envelope to this endpoint.
    void enqueue(Envelope env, std::function<void()> on_consume = {});

    /// Wakes anyone sleeping in wait_for_activity (used when an acknowledgement lands).
    void notify_activity();

private:
    void check_destination(int dst) const;
    void account(int dst, std::size_t bytes, MessageClass cls);
    std::optional<Envelope> take_locked(int src, TagFilter tag, std::unique_lock<std::mutex>& lock);

    int const rank_;
    int const size_;

    mutable std::mutex      queue_mutex_;
    std::condition_variable queue_cv_;
    std::deque<Pending>     queue_;
    std::uint64_t           activity_ = 0;
    bool                    closed_   = false;

    mutable std::mutex stats_mutex_;
    TransportStats     stats_;
    std::set<int>      destinations_;
};

enum class TransportKind { inproc, tcp };

struct TransportConfig {
    /// TCP: rank r listens on `host:port_base + r`. A port_base of 0 lets the OS pick ports, which only works
    /// when the whole group is spawned inside one process.
    std::string host      = "127.0.0.1";
    int         port_base = 0;
    /// TCP: explicit "host:port" per rank; overrides host/port_base when non-empty.
    std::vector<std::string>  addresses;
    std::chrono::milliseconds connect_timeout{10000};
};

/// A set of endpoints forming one communication group.
class Group {
public:
    explicit Group(std::vector<std::shared_ptr<Endpoint>> endpoints);
    Group(Group&&) noexcept            = default;
    Group& operator=(Group&&) noexcept = default;
    ~Group();

    int size() const noexcept {
        return static_cast<int>(endpoints_.size());
    }
    std::shared_ptr<Endpoint> const& endpoint(int rank) const;

    std::vector<TransportStats> stats() const;
    void                        reset_stats();

    /// Closes every endpoint; blocked receivers wake with TransportError.
    void shutdown();

    /// Runs `fn(endpoint)` on one thread per rank and joins them. If any worker throws, the group is shut
    /// down so the others cannot block forever, and the first exception is rethrown.
    void run(std::function<void(std::shared_ptr<Endpoint> const&)> const& fn);

private:
    std::vector<std::shared_ptr<Endpoint>> endpoints_;
};

Group spawn_group(int size, TransportKind kind = TransportKind::inproc, TransportConfig const& config = {});

/// TCP endpoint for a single rank of a group spread over OS processes. Listens on its own address and
/// connects to every other rank listed in `config`; blocks until the full mesh is established.
std::shared_ptr<Endpoint> connect_tcp_endpoint(int rank, int size, TransportConfig const& config);

std::string   to_string(TransportKind kind);
TransportKind parse_transport_kind(std::string const& name);

} // namespace xcomm
