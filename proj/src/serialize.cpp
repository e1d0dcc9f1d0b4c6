#include "spikedet/serialize.hpp"

#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace spikedet {

namespace {

const char kMagic[4] = {'S', 'D', 'L', '1'};

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw ParseError("model file truncated");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f64(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

double get_f64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8))
    throw ParseError("model file truncated");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace

void save_model(std::ostream& out, Network& net) {
  out.write(kMagic, 4);
  std::uint32_t count = 0;
  net.visit_state([&](const std::string&, Tensor&) { ++count; });
  put_u32(out, count);
  net.visit_state([&](const std::string& name, Tensor& t) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(out, static_cast<std::uint32_t>(t.shape.n));
    put_u32(out, static_cast<std::uint32_t>(t.shape.c));
    put_u32(out, static_cast<std::uint32_t>(t.shape.h));
    put_u32(out, static_cast<std::uint32_t>(t.shape.w));
    for (double v : t.data) put_f64(out, v);
  });
  if (!out) throw StateError("save_model: write failure");
}

void load_model(std::istream& in, Network& net) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw ParseError("model file: bad magic bytes (expected SDL1)");
  std::uint32_t count = get_u32(in);
  std::uint32_t expected = 0;
  net.visit_state([&](const std::string&, Tensor&) { ++expected; });
  if (count != expected)
    throw ParseError("model file: blob count " + std::to_string(count) +
                     " does not match network (" + std::to_string(expected) + ")");
  net.visit_state([&](const std::string& name, Tensor& t) {
    std::uint32_t len = get_u32(in);
    if (len > 4096) throw ParseError("model file: implausible name length");
    std::string file_name(len, '\0');
    if (!in.read(file_name.data(), len)) throw ParseError("model file truncated");
    if (file_name != name)
      throw ParseError("model file: blob '" + file_name + "' where '" + name +
                       "' was expected");
    Shape s{static_cast<int>(get_u32(in)), static_cast<int>(get_u32(in)),
            static_cast<int>(get_u32(in)), static_cast<int>(get_u32(in))};
    if (s != t.shape)
      throw ParseError("model file: shape mismatch for '" + name + "'");
    for (double& v : t.data) v = get_f64(in);
  });
}

void save_model_file(const std::string& path, Network& net) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw StateError("cannot open for write: " + path);
  save_model(f, net);
}

void load_model_file(const std::string& path, Network& net) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ParseError("cannot open model file: " + path);
  load_model(f, net);
}

void write_tensor_file(const std::string& path, const Tensor& t) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw StateError("cannot open for write: " + path);
  f.write(kMagic, 4);
  put_u32(f, 1);
  const std::string name = "tensor";
  put_u32(f, static_cast<std::uint32_t>(name.size()));
  f.write(name.data(), static_cast<std::streamsize>(name.size()));
  put_u32(f, static_cast<std::uint32_t>(t.shape.n));
  put_u32(f, static_cast<std::uint32_t>(t.shape.c));
  put_u32(f, static_cast<std::uint32_t>(t.shape.h));
  put_u32(f, static_cast<std::uint32_t>(t.shape.w));
  for (double v : t.data) put_f64(f, v);
}

Tensor read_tensor_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ParseError("cannot open tensor file: " + path);
  char magic[4];
  if (!f.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw ParseError("tensor file: bad magic bytes (expected SDL1)");
  if (get_u32(f) != 1) throw ParseError("tensor file: expected a single blob");
  std::uint32_t len = get_u32(f);
  std::string name(len, '\0');
  if (!f.read(name.data(), len)) throw ParseError("tensor file truncated");
  Shape s{static_cast<int>(get_u32(f)), static_cast<int>(get_u32(f)),
          static_cast<int>(get_u32(f)), static_cast<int>(get_u32(f))};
  Tensor t(s);
  for (double& v : t.data) v = get_f64(f);
  return t;
}

}  // namespace spikedet
