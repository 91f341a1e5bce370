#pragma once

#include <chrono>
#include <memory>

#include "xcomm/transport.hpp"

namespace xcomm {

/// A pending operation that advances only when polled.
class Operation {
public:
    virtual ~Operation() = default;

    /// Performs whatever progress is possible without blocking; returns true once complete.
    virtual bool progress() = 0;

    /// Endpoint to sleep on while nothing can progress.
    virtual Endpoint& endpoint() = 0;
};

/// Handle of a pending operation. Moves from pending to complete exactly once; progress happens only inside
/// test() and wait().
class Request {
public:
    Request() = default;
    explicit Request(std::unique_ptr<Operation> op) : op_(std::move(op)) {}

    /// One progress step. Never blocks.
    bool test() {
        if (complete_) {
            return true;
        }
        if (!op_ || op_->progress()) {
            complete_ = true;
        }
        return complete_;
    }

    void wait() {
        while (!test()) {
            op_->endpoint().wait_for_activity(std::chrono::milliseconds(1));
        }
    }

    bool is_complete() const noexcept {
        return complete_;
    }

    Endpoint* endpoint() const {
        return op_ ? &op_->endpoint() : nullptr;
    }

private:
    std::unique_ptr<Operation> op_;
    bool                       complete_ = false;
};

} // namespace xcomm
