#pragma once

#include "xcomm/collectives.hpp"
#include "xcomm/communicator.hpp"
#include "xcomm/datatypes.hpp"
#include "xcomm/errors.hpp"
#include "xcomm/nonblocking.hpp"
#include "xcomm/p2p.hpp"
#include "xcomm/params.hpp"
#include "xcomm/serialization.hpp"
#include "xcomm/transport.hpp"
