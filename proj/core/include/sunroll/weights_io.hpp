#pragma once

#include <string>

#include "sunroll/network.hpp"

namespace sunroll {

// SUNW1 weight container.
//
//   "SUNW1"                          5 bytes magic
//   u32 mode                         bit 0: weight-changing, bit 8: asymmetric (W_bar stored)
//   u32 T, u32 K
//   K x (u32 l_k, u32 n_k)           layer shapes
//   f64 payload                      row-major W (then W_bar when asymmetric),
//                                    iteration-major then layer-major
//
// All integers and floats are little-endian.
std::string encode_weights(const ProximalStack& stack);
ProximalStack decode_weights(const std::string& bytes);

void save_weights(const std::string& path, const ProximalStack& stack);
ProximalStack load_weights(const std::string& path);

}  // namespace sunroll
