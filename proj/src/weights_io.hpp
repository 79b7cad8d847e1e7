#pragma once

#include <iosfwd>
#include <string>

#include "network.hpp"

namespace percept {

// Binary weight container: "CNWB" magic, a u32 format version, a 32-byte
// fingerprint of the canonical config serialization, a u32 tensor count,
// then each parameter tensor as u32 rank, u32 dims, and raw
// little-endian float32 payload. No padding anywhere.

void save_weights(const Network& net, std::ostream& out);
void save_weights_file(const Network& net, const std::string& path);

// Rebuilds a network for `cfg` from a full weight file. The fingerprint
// must match the config the caller supplies.
Network load_weights(const NetworkConfig& cfg, std::istream& in);
Network load_weights_file(const NetworkConfig& cfg, const std::string& path);

// Copies tensors from a weight file into an already-built network by
// position, stopping at the first rank or dimension mismatch (or end of
// file). Returns how many tensors were assigned. The fingerprint is not
// checked: the point is loading weights from a smaller related network,
// e.g. a classifier backbone into a detector.
int load_weights_prefix(Network& net, std::istream& in);
int load_weights_prefix_file(Network& net, const std::string& path);

}  // namespace percept
