#pragma once

#include <string>

#include <gtest/gtest.h>

#include "harness.hpp"

namespace xcomm::testing {

inline std::string transport_name(::testing::TestParamInfo<TransportKind> const& info) {
    return to_string(info.param);
}

class TransportTest : public ::testing::TestWithParam<TransportKind> {};

} // namespace xcomm::testing
