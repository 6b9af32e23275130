#pragma once
#ifndef IGBSS_IGBSS_HPP
#define IGBSS_IGBSS_HPP

#include "igbss/datagen.hpp"
#include "igbss/io.hpp"
#include "igbss/loglinear.hpp"
#include "igbss/optimizer.hpp"
#include "igbss/poset.hpp"
#include "igbss/separation.hpp"

namespace igbss {
inline constexpr const char* kVersion = "0.1.0";
}

#endif  // IGBSS_IGBSS_HPP
