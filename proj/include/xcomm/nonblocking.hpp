#pragma once

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include "xcomm/p2p.hpp"
#include "xcomm/request.hpp"

namespace xcomm {

/// When set, destroying a result that was never completed aborts the process instead of completing it.
inline std::atomic<bool>& abort_on_drop() {
    static std::atomic<bool> flag{false};
    return flag;
}

/// A pending operation that yields a value once complete.
template <typename V>
class ValueOperation : public Operation {
public:
    /// Called exactly once, after progress() returned true.
    virtual V take() = 0;
};

/// A pending result. The values it holds (including buffers handed over at initiation) are reachable only
/// through wait() and test(), each of which hands them out at most once.
template <typename V>
class NonBlockingResult {
public:
    explicit NonBlockingResult(std::unique_ptr<ValueOperation<V>> op) : op_(std::move(op)) {}
    NonBlockingResult(NonBlockingResult&&) noexcept            = default;
    NonBlockingResult& operator=(NonBlockingResult&&) noexcept = default;
    NonBlockingResult(NonBlockingResult const&)                = delete;
    NonBlockingResult& operator=(NonBlockingResult const&)     = delete;

    ~NonBlockingResult() {
        if (!op_ || consumed_) {
            return;
        }
        if (abort_on_drop().load()) {
            std::abort();
        }
        try {
            drive();
        } catch (...) {
        }
    }

    /// Blocks, driving progress, until complete; returns the values.
    V wait() {
        ensure_available();
        consumed_ = true; // a failed operation is not retried by the destructor
        drive();
        return op_->take();
    }

    /// One progress step. Returns the values if the operation is complete, otherwise nothing.
    std::optional<V> test() {
        ensure_available();
        bool done = complete_;
        if (!done) {
            try {
                done = op_->progress();
            } catch (...) {
                consumed_ = true;
                throw;
            }
        }
        if (!done) {
            return std::nullopt;
        }
        complete_ = true;
        consumed_ = true;
        return op_->take();
    }

    bool consumed() const noexcept {
        return consumed_;
    }

private:
    void ensure_available() const {
        if (!op_) {
            throw UsageError("non-blocking result is empty (moved from)");
        }
        if (consumed_) {
            throw UsageError("non-blocking result already consumed");
        }
    }
    void drive() {
        while (!complete_) {
            if (op_->progress()) {
                complete_ = true;
                break;
            }
            op_->endpoint().wait_for_activity(std::chrono::milliseconds(1));
        }
    }

    std::unique_ptr<ValueOperation<V>> op_;
    bool                               complete_ = false;
    bool                               consumed_ = false;
};

/// Completes many results together.
template <typename V>
class RequestPool {
public:
    void submit(NonBlockingResult<V> result) {
        pending_.push_back(std::move(result));
    }

    std::size_t size() const noexcept {
        return pending_.size();
    }

    /// Completes every submitted result; values in submission order. A second call returns nothing.
    std::vector<V> wait_all() {
        std::vector<V> values;
        values.reserve(pending_.size());
        for (auto& result: pending_) {
            values.push_back(result.wait());
        }
        pending_.clear();
        return values;
    }

private:
    std::vector<NonBlockingResult<V>> pending_;
};

namespace detail {

/// Buffered send: the payload is encoded and handed to the transport at initiation; the held buffer is
/// returned on completion.
template <typename T>
class IsendOperation : public ValueOperation<std::vector<T>> {
public:
    IsendOperation(Endpoint& endpoint, std::vector<T> held) : endpoint_(&endpoint), held_(std::move(held)) {}
    bool progress() override {
        return true;
    }
    Endpoint& endpoint() override {
        return *endpoint_;
    }
    std::vector<T> take() override {
        return std::move(held_);
    }

private:
    Endpoint*      endpoint_;
    std::vector<T> held_;
};

template <typename T>
class IrecvOperation : public ValueOperation<std::vector<T>> {
public:
    IrecvOperation(Communicator comm, int src, TagFilter filter, std::optional<int> expected)
        : comm_(std::move(comm)),
          src_(src),
          filter_(filter),
          expected_(expected) {}

    bool progress() override {
        if (values_) {
            return true;
        }
        auto env = comm_.try_recv_raw(src_, filter_);
        if (!env) {
            return false;
        }
        auto values = decode<T>(env->payload);
        if (expected_ && static_cast<int>(values.size()) != *expected_) {
            throw CountsError(
                "irecv: expected " + std::to_string(*expected_) + " elements, received " + std::to_string(values.size())
            );
        }
        values_ = std::move(values);
        return true;
    }
    Endpoint& endpoint() override {
        return comm_.endpoint();
    }
    std::vector<T> take() override {
        return std::move(*values_);
    }

private:
    Communicator                  comm_;
    int                           src_;
    TagFilter                     filter_;
    std::optional<int>            expected_;
    std::optional<std::vector<T>> values_;
};

} // namespace detail

/// isend(send_buf(std::move(v)), destination(d) [, tag(t)]) -> result whose wait() returns v. A buffer
/// passed by reference stays with the caller and the result yields an empty vector.
template <typename... Params>
auto Communicator::isend(Params&&... params) const {
    detail::check_params<Params...>(
        {"isend", {ParamKind::send_buf, ParamKind::destination}, {ParamKind::send_buf, ParamKind::destination, ParamKind::tag}, {}}
    );
    using T = detail::element_type_t<Params...>;
    static_assert(FixedWidth<T>, "isend takes a fixed-width send_buf");
    if constexpr (detail::has_in<ParamKind::send_buf, Params...> && detail::has_in<ParamKind::destination, Params...>) {
        int const dst = detail::get_in<ParamKind::destination>(params...).value;
        check_rank(dst, "destination");
        Tag const t  = user_tag(detail::int_value_or<ParamKind::tag>(0, params...));
        auto&     sb = detail::get_in<ParamKind::send_buf>(params...);
        send_raw(dst, t, encode(sb.data.view()));
        std::vector<T> held = sb.data.owns() ? std::move(sb.data).release() : std::vector<T>{};
        return NonBlockingResult<std::vector<T>>(
            std::make_unique<detail::IsendOperation<T>>(endpoint(), std::move(held))
        );
    } else {
        return NonBlockingResult<std::vector<T>>(nullptr);
    }
}

/// irecv<T>([source(s)], [tag(t)], [recv_count(n)]).
template <typename T, typename... Params>
auto Communicator::irecv(Params&&... params) const {
    detail::check_params<Params...>({"irecv", {}, {ParamKind::source, ParamKind::tag, ParamKind::recv_count}, {}});
    static_assert(FixedWidth<T>, "irecv needs a fixed-width element type");
    std::optional<int> expected;
    if constexpr (detail::has_in<ParamKind::recv_count, Params...>) {
        expected = detail::get_in<ParamKind::recv_count>(params...).value;
    }
    return NonBlockingResult<std::vector<T>>(std::make_unique<detail::IrecvOperation<T>>(
        *this, detail::recv_source(*this, params...), detail::recv_tag_filter(*this, params...), expected
    ));
}

} // namespace xcomm
