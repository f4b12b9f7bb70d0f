#pragma once

#include "links.hpp"
#include "data.hpp"
#include "ecdf.hpp"
#include "identify.hpp"
#include "aggregate.hpp"
#include "effects.hpp"
#include "drcov.hpp"
#include "estimator.hpp"
#include "inference.hpp"
#include "simlab.hpp"
#include "config.hpp"

namespace distdid {

inline constexpr const char* kVersion = "0.3.0";

}  // namespace distdid
