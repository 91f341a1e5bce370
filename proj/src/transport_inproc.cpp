#include <atomic>
#include <memory>
#include <vector>

#include "transport_impl.hpp"
#include "xcomm/errors.hpp"

namespace xcomm::detail {
namespace {

class InprocEndpoint;

struct Fabric {
    std::vector<InprocEndpoint*> members;
};

class InprocEndpoint final : public Endpoint {
public:
    InprocEndpoint(int rank, int size, std::shared_ptr<Fabric> fabric)
        : Endpoint(rank, size),
          fabric_(std::move(fabric)) {}

    void accept(Envelope env, std::function<void()> on_consume) {
        enqueue(std::move(env), std::move(on_consume));
    }

    void wake() {
        notify_activity();
    }

protected:
    void transmit(Envelope env, std::shared_ptr<std::atomic<bool>> done) override {
        auto* peer = fabric_->members[static_cast<std::size_t>(env.dst)];
        if (!done) {
            peer->accept(std::move(env), {});
            return;
        }
        auto* self = this;
        peer->accept(std::move(env), [done = std::move(done), self] {
            done->store(true, std::memory_order_release);
            self->wake();
        });
    }

private:
    std::shared_ptr<Fabric> fabric_;
};

} // namespace

std::vector<std::shared_ptr<Endpoint>> make_inproc_endpoints(int size) {
    auto fabric = std::make_shared<Fabric>();
    fabric->members.resize(static_cast<std::size_t>(size));
    std::vector<std::shared_ptr<Endpoint>> endpoints;
    endpoints.reserve(static_cast<std::size_t>(size));
    for (int rank = 0; rank < size; ++rank) {
        auto ep                                           = std::make_shared<InprocEndpoint>(rank, size, fabric);
        fabric->members[static_cast<std::size_t>(rank)] = ep.get();
        endpoints.push_back(std::move(ep));
    }
    return endpoints;
}

} // namespace xcomm::detail
