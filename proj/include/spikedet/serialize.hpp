#pragma once

#include "spikedet/blocks.hpp"

#include <iosfwd>
#include <string>

namespace spikedet {

/// Versioned binary model container. Layout, all little-endian:
///   magic "SDL1"
///   u32 blob count
///   per blob: u32 name length, name bytes, 4 x i32 shape, f64 payload
/// Blob order follows the network's state visitation order.
void save_model(std::ostream& out, Network& net);
void save_model_file(const std::string& path, Network& net);

/// Loads blobs into an already-built network with matching structure.
/// Magic/shape/name mismatches raise ParseError.
void load_model(std::istream& in, Network& net);
void load_model_file(const std::string& path, Network& net);

void write_tensor_file(const std::string& path, const Tensor& t);
Tensor read_tensor_file(const std::string& path);

}  // namespace spikedet
