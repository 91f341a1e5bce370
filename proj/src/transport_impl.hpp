#pragma once

#include <memory>
#include <vector>

#include "xcomm/transport.hpp"

namespace xcomm::detail {

std::vector<std::shared_ptr<Endpoint>> make_inproc_endpoints(int size);
std::vector<std::shared_ptr<Endpoint>> make_tcp_endpoints(int size, TransportConfig const& config);

} // namespace xcomm::detail
