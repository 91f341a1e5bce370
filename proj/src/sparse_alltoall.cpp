#include "xcomm/plugins/sparse_alltoall.hpp"

#include <algorithm>
#include <chrono>
#include <optional>

namespace xcomm::detail {

std::vector<std::pair<int, Bytes>> sparse_exchange_bytes(
    Communicator const& comm, std::vector<std::pair<int, Bytes>> sends
) {
    // Alternating tags keep a fast rank's next exchange from matching receives of the current one; two
    // exchanges apart are separated by the ibarrier.
    auto const      epoch = comm.next_sparse_epoch();
    TagFilter const tag   = TagFilter::exact(comm.internal_tag(InternalTag::sparse_exchange, epoch & 1U));

    std::vector<SendHandle> handles;
    handles.reserve(sends.size());
    for (auto& [dst, payload]: sends) {
        comm.check_rank(dst, "destination");
        handles.push_back(comm.ssend_raw(dst, tag.value, std::move(payload)));
    }

    std::vector<std::pair<int, Bytes>> received;
    std::optional<Request>             barrier;
    while (true) {
        bool got_any = false;
        while (auto env = comm.try_recv_raw(any_source, tag)) {
            received.emplace_back(env->src, std::move(env->payload));
            got_any = true;
        }
        if (!barrier) {
            bool const sent = std::all_of(handles.begin(), handles.end(), [](SendHandle const& h) {
                return h.is_complete();
            });
            if (sent) {
                barrier = comm.ibarrier();
                continue;
            }
        } else if (barrier->test()) {
            break;
        }
        if (!got_any) {
            comm.endpoint().wait_for_activity(std::chrono::milliseconds(1));
        }
    }
    std::stable_sort(received.begin(), received.end(), [](auto const& a, auto const& b) {
        return a.first < b.first;
    });
    return received;
}

} // namespace xcomm::detail
