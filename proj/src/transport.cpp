#include "xcomm/transport.hpp"

#include <exception>
#include <thread>

#include "transport_impl.hpp"
#include "xcomm/errors.hpp"

namespace xcomm {

Endpoint::Endpoint(int rank, int size) : rank_(rank), size_(size) {
    if (size < 1 || rank < 0 || rank >= size) {
        throw UsageError("endpoint rank " + std::to_string(rank) + " invalid for group of size " + std::to_string(size));
    }
}

void Endpoint::check_destination(int dst) const {
    if (dst < 0 || dst >= size_) {
        throw UsageError(
            "destination rank " + std::to_string(dst) + " out of range for group of size " + std::to_string(size_)
        );
    }
    if (closed()) {
        throw TransportError("send on a group that has been shut down");
    }
}

void Endpoint::account(int dst, std::size_t bytes, MessageClass cls) {
    std::lock_guard lock(stats_mutex_);
    if (cls == MessageClass::payload) {
        ++stats_.messages_sent;
    } else {
        ++stats_.protocol_messages;
    }
    stats_.bytes_sent += bytes;
    if (dst != rank_ && destinations_.insert(dst).second) {
        stats_.distinct_destinations = destinations_.size();
    }
}

void Endpoint::send(int dst, Tag tag, Bytes payload, MessageClass cls) {
    check_destination(dst);
    account(dst, payload.size(), cls);
    Envelope env{rank_, dst, tag, std::move(payload)};
    if (dst == rank_) {
        enqueue(std::move(env));
    } else {
        transmit(std::move(env), nullptr);
    }
}

SendHandle Endpoint::ssend_async(int dst, Tag tag, Bytes payload, MessageClass cls) {
    check_destination(dst);
    account(dst, payload.size(), cls);
    auto     done = std::make_shared<std::atomic<bool>>(false);
    Envelope env{rank_, dst, tag, std::move(payload)};
    if (dst == rank_) {
        enqueue(std::move(env), [done] { done->store(true, std::memory_order_release); });
    } else {
        transmit(std::move(env), done);
    }
    return SendHandle{std::move(done)};
}

void Endpoint::enqueue(Envelope env, std::function<void()> on_consume) {
    {
        std::lock_guard lock(queue_mutex_);
        queue_.push_back(Pending{std::move(env), std::move(on_consume)});
        ++activity_;
    }
    queue_cv_.notify_all();
}

void Endpoint::notify_activity() {
    {
        std::lock_guard lock(queue_mutex_);
        ++activity_;
    }
    queue_cv_.notify_all();
}

std::optional<ProbeInfo> Endpoint::probe(int src, TagFilter tag) {
    std::lock_guard lock(queue_mutex_);
    for (auto const& pending: queue_) {
        auto const& env = pending.env;
        if ((src == any_source || env.src == src) && tag.matches(env.tag)) {
            return ProbeInfo{env.src, env.tag, env.payload.size()};
        }
    }
    return std::nullopt;
}

std::optional<Envelope> Endpoint::take_locked(int src, TagFilter tag, std::unique_lock<std::mutex>& lock) {
    for (auto it = queue_.begin(); it != queue_.end(); ++it) {
        if ((src == any_source || it->env.src == src) && tag.matches(it->env.tag)) {
            Pending pending = std::move(*it);
            queue_.erase(it);
            lock.unlock();
            if (pending.on_consume) {
                pending.on_consume();
            }
            return std::move(pending.env);
        }
    }
    return std::nullopt;
}

std::optional<Envelope> Endpoint::try_recv(int src, TagFilter tag) {
    std::unique_lock lock(queue_mutex_);
    return take_locked(src, tag, lock);
}

Envelope Endpoint::recv(int src, TagFilter tag) {
    std::unique_lock lock(queue_mutex_);
    while (true) {
        if (auto env = take_locked(src, tag, lock)) {
            return std::move(*env);
        }
        if (closed_) {
            throw TransportError("receive on a group that has been shut down");
        }
        queue_cv_.wait(lock);
    }
}

void Endpoint::wait_for_activity(std::chrono::microseconds timeout) {
    std::unique_lock lock(queue_mutex_);
    auto const       seen = activity_;
    queue_cv_.wait_for(lock, timeout, [&] { return activity_ != seen || closed_; });
}

TransportStats Endpoint::stats() const {
    std::lock_guard lock(stats_mutex_);
    return stats_;
}

void Endpoint::reset_stats() {
    std::lock_guard lock(stats_mutex_);
    stats_ = {};
    destinations_.clear();
}

void Endpoint::close() {
    {
        std::lock_guard lock(queue_mutex_);
        closed_ = true;
    }
    queue_cv_.notify_all();
}

bool Endpoint::closed() const {
    std::lock_guard lock(queue_mutex_);
    return closed_;
}

Group::Group(std::vector<std::shared_ptr<Endpoint>> endpoints) : endpoints_(std::move(endpoints)) {}

Group::~Group() {
    shutdown();
}

std::shared_ptr<Endpoint> const& Group::endpoint(int rank) const {
    if (rank < 0 || rank >= size()) {
        throw UsageError("no endpoint for rank " + std::to_string(rank));
    }
    return endpoints_[static_cast<std::size_t>(rank)];
}

std::vector<TransportStats> Group::stats() const {
    std::vector<TransportStats> result;
    result.reserve(endpoints_.size());
    for (auto const& ep: endpoints_) {
        result.push_back(ep->stats());
    }
    return result;
}

void Group::reset_stats() {
    for (auto const& ep: endpoints_) {
        ep->reset_stats();
    }
}

void Group::shutdown() {
    for (auto const& ep: endpoints_) {
        if (ep) {
            ep->close();
        }
    }
}

void Group::run(std::function<void(std::shared_ptr<Endpoint> const&)> const& fn) {
    std::mutex               error_mutex;
    std::exception_ptr       first_error;
    std::vector<std::thread> workers;
    workers.reserve(endpoints_.size());
    for (auto const& ep: endpoints_) {
        workers.emplace_back([&, ep] {
            try {
                fn(ep);
            } catch (...) {
                {
                    std::lock_guard lock(error_mutex);
                    if (!first_error) {
                        first_error = std::current_exception();
                    }
                }
                shutdown();
            }
        });
    }
    for (auto& worker: workers) {
        worker.join();
    }
    if (first_error) {
        std::rethrow_exception(first_error);
    }
}

Group spawn_group(int size, TransportKind kind, TransportConfig const& config) {
    if (size < 1) {
        throw UsageError("group size must be at least 1, got " + std::to_string(size));
    }
    if (kind == TransportKind::inproc) {
        return Group(detail::make_inproc_endpoints(size));
    }
    return Group(detail::make_tcp_endpoints(size, config));
}

std::string to_string(TransportKind kind) {
    return kind == TransportKind::inproc ? "inproc" : "tcp";
}

TransportKind parse_transport_kind(std::string const& name) {
    if (name == "inproc") {
        return TransportKind::inproc;
    }
    if (name == "tcp") {
        return TransportKind::tcp;
    }
    throw UsageError("unknown transport '" + name + "' (expected inproc or tcp)");
}

} // namespace xcomm
