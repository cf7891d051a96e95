#include "motiongen/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "motiongen/common.hpp"

namespace motiongen {

namespace {

constexpr char kMagic[8] = {'M', 'G', 'T', 'A', '0', '0', '0', '1'};

void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = (char)((v >> (8 * i)) & 0xff);
  out.write(b, 4);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read((char*)b, 4);
  if (!in) throw FormatError("tensor archive truncated");
  return (std::uint32_t)b[0] | ((std::uint32_t)b[1] << 8) |
         ((std::uint32_t)b[2] << 16) | ((std::uint32_t)b[3] << 24);
}

void put_f64(std::ostream& out, double v) {
  std::uint64_t u;
  std::memcpy(&u, &v, 8);
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = (char)((u >> (8 * i)) & 0xff);
  out.write(b, 8);
}

double get_f64(std::istream& in) {
  unsigned char b[8];
  in.read((char*)b, 8);
  if (!in) throw FormatError("tensor archive truncated");
  std::uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= (std::uint64_t)b[i] << (8 * i);
  double v;
  std::memcpy(&v, &u, 8);
  return v;
}

}  // namespace

void save_tensor_archive(const std::string& path,
                         const std::map<std::string, Tensor>& tensors) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.write(kMagic, 8);
  put_u32(out, (std::uint32_t)tensors.size());
  for (const auto& [name, t] : tensors) {
    put_u32(out, (std::uint32_t)name.size());
    out.write(name.data(), (std::streamsize)name.size());
    put_u32(out, (std::uint32_t)t.rows);
    put_u32(out, (std::uint32_t)t.cols);
    for (double v : t.data) put_f64(out, v);
  }
  if (!out) throw IoError("write failed: " + path);
}

std::map<std::string, Tensor> load_tensor_archive(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) {
    throw FormatError("not a tensor archive: " + path);
  }
  const std::uint32_t count = get_u32(in);
  std::map<std::string, Tensor> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = get_u32(in);
    if (name_len > 1u << 20) throw FormatError("tensor name too long");
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in) throw FormatError("tensor archive truncated");
    const std::uint32_t rows = get_u32(in);
    const std::uint32_t cols = get_u32(in);
    if ((std::uint64_t)rows * cols > 1ull << 28) {
      throw FormatError("tensor too large: " + name);
    }
    Tensor t((int)rows, (int)cols);
    for (double& v : t.data) v = get_f64(in);
    if (!out.emplace(std::move(name), std::move(t)).second) {
      throw FormatError("duplicate tensor name in archive");
    }
  }
  return out;
}

}  // namespace motiongen
