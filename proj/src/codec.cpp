#include "spikedet/codec.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <sstream>
#include <string>

namespace spikedet {

void EncodingConfig::validate() const {
  if (t_steps < 1) throw ConfigError("EncodingConfig: t_steps must be >= 1");
  if (window_us < 1) throw ConfigError("EncodingConfig: window_us must be >= 1");
  if (width < 1 || height < 1)
    throw ConfigError("EncodingConfig: width and height must be >= 1");
}

Tensor direct_encode(const Tensor& image, int t_steps) {
  if (t_steps < 1) throw ConfigError("direct_encode: t_steps must be >= 1");
  if (image.shape.n != 1) throw ShapeError("direct_encode: expected a single image");
  Tensor out(Shape{t_steps, image.shape.c, image.shape.h, image.shape.w});
  const std::int64_t slice = image.shape.slice_numel();
  for (int t = 0; t < t_steps; ++t)
    std::copy(image.data.begin(), image.data.end(),
              out.data.begin() + static_cast<std::int64_t>(t) * slice);
  return out;
}

Tensor event_bin(const std::vector<EventRecord>& events, const EncodingConfig& cfg) {
  cfg.validate();
  Tensor out(Shape{cfg.t_steps, 2, cfg.height, cfg.width});
  for (size_t i = 0; i < events.size(); ++i) {
    const EventRecord& e = events[i];
    if (e.t < 0 || e.t >= cfg.window_us)
      throw ParseError("event_bin: event " + std::to_string(i) +
                       " timestamp outside [0, window)");
    if (e.x < 0 || e.x >= cfg.width || e.y < 0 || e.y >= cfg.height)
      throw ParseError("event_bin: event " + std::to_string(i) + " coordinate out of frame");
    if (e.p != 0 && e.p != 1)
      throw ParseError("event_bin: event " + std::to_string(i) + " polarity not in {0,1}");
    std::int64_t bin = e.t * cfg.t_steps / cfg.window_us;
    if (bin >= cfg.t_steps) bin = cfg.t_steps - 1;
    out.at(static_cast<int>(bin), e.p, e.y, e.x) += 1.0;
  }
  if (cfg.clip_max > 0.0) {
    for (double& v : out.data) v = std::min(v, cfg.clip_max);
    if (cfg.normalize)
      for (double& v : out.data) v /= cfg.clip_max;
  }
  return out;
}

namespace {

bool parse_field_i64(const std::string& s, std::int64_t& out) {
  if (s.empty()) return false;
  size_t pos = 0;
  try {
    out = std::stoll(s, &pos);
  } catch (const std::exception&) {
    return false;
  }
  return pos == s.size();
}

}  // namespace

std::vector<EventRecord> parse_event_csv(std::istream& in) {
  std::vector<EventRecord> events;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::string trimmed = line;
    trimmed.erase(0, trimmed.find_first_not_of(" \t"));
    if (trimmed.empty() || trimmed[0] == '#') continue;
    if (line_no == 1 && trimmed.find_first_not_of("0123456789,.+- \t") != std::string::npos)
      continue;  // header row
    std::istringstream ls(trimmed);
    std::string field;
    std::int64_t vals[4];
    int nf = 0;
    while (std::getline(ls, field, ',')) {
      if (nf >= 4)
        throw ParseError("line " + std::to_string(line_no) + ": expected 4 fields");
      field.erase(0, field.find_first_not_of(" \t"));
      field.erase(field.find_last_not_of(" \t") + 1);
      if (!parse_field_i64(field, vals[nf]))
        throw ParseError("line " + std::to_string(line_no) + ": bad integer field '" +
                         field + "'");
      ++nf;
    }
    if (nf != 4)
      throw ParseError("line " + std::to_string(line_no) + ": expected 4 fields");
    if (vals[3] != 0 && vals[3] != 1)
      throw ParseError("line " + std::to_string(line_no) + ": polarity must be 0 or 1");
    events.push_back(EventRecord{vals[0], static_cast<int>(vals[1]),
                                 static_cast<int>(vals[2]), static_cast<int>(vals[3])});
  }
  return events;
}

std::vector<EventRecord> parse_event_csv_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ParseError("cannot open event file: " + path);
  return parse_event_csv(f);
}

}  // namespace spikedet
