#pragma once

#include "spikedet/tensor.hpp"

#include <cstdint>
#include <iosfwd>
#include <vector>

namespace spikedet {

/// One event-camera event.
struct EventRecord {
  std::int64_t t = 0;  // microseconds
  int x = 0, y = 0;
  int p = 0;  // polarity, 0 or 1
};

struct EncodingConfig {
  int t_steps = 1;
  std::int64_t window_us = 0;
  int width = 0, height = 0;
  double clip_max = 4.0;  // spike-count clip; <= 0 means unbounded
  bool normalize = false; // divide counts by clip_max before feeding

  void validate() const;
};

/// Replicate a static (1,C,H,W) image T times -> (T,C,H,W).
Tensor direct_encode(const Tensor& image, int t_steps);

/// Bin events into a (T, 2, H, W) count tensor; channel = polarity, bin
/// index = floor(t*T/window) clamped to T-1.
Tensor event_bin(const std::vector<EventRecord>& events, const EncodingConfig& cfg);

/// Parse "t_us,x,y,p" CSV lines (optional header). Malformed lines raise
/// ParseError carrying the 1-based line number.
std::vector<EventRecord> parse_event_csv(std::istream& in);
std::vector<EventRecord> parse_event_csv_file(const std::string& path);

}  // namespace spikedet
