#include "simspoof/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

namespace simspoof {

namespace {

constexpr char kMagic[8] = {'S', 'I', 'M', 'S', 'P', 'O', 'O', 'F'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::ostream& out, double d) {
  const auto v = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_string(std::ostream& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint64_t get_bytes(std::istream& in, int n) {
  std::uint64_t v = 0;
  for (int i = 0; i < n; ++i) {
    const int c = in.get();
    if (c == EOF) throw std::runtime_error("checkpoint is truncated");
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return v;
}

std::uint32_t get_u32(std::istream& in) { return static_cast<std::uint32_t>(get_bytes(in, 4)); }

std::string get_string(std::istream& in, std::uint32_t limit) {
  const auto n = get_u32(in);
  if (n > limit) throw std::runtime_error("checkpoint string length " + std::to_string(n) + " is implausible");
  std::string s(n, '\0');
  if (!in.read(s.data(), n)) throw std::runtime_error("checkpoint is truncated");
  return s;
}

}  // namespace

void save_checkpoint(std::ostream& out, const std::string& config_text, const ParameterSet& params) {
  out.write(kMagic, sizeof kMagic);
  put_u32(out, kVersion);
  put_string(out, config_text);
  const auto all = params.all();
  put_u32(out, static_cast<std::uint32_t>(all.size()));
  for (const auto& [name, t] : all) {
    put_string(out, name);
    put_u32(out, static_cast<std::uint32_t>(t.dim()));
    for (auto d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : t.data()) put_f64(out, v);
  }
}

void save_checkpoint(const std::string& path, const std::string& config_text, const ParameterSet& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path);
  save_checkpoint(out, config_text, params);
  if (!out) throw std::runtime_error("error writing checkpoint " + path);
}

CheckpointData read_checkpoint(std::istream& in) {
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) throw std::runtime_error("not a simspoof checkpoint");
  if (const auto v = get_u32(in); v != kVersion) {
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(v));
  }
  CheckpointData data;
  data.config_text = get_string(in, 1u << 20);
  const auto count = get_u32(in);
  for (std::uint32_t i = 0; i < count; ++i) {
    data.names.push_back(get_string(in, 4096));
    const auto ndim = get_u32(in);
    if (ndim > 8) throw std::runtime_error("checkpoint tensor " + data.names.back() + " has too many dimensions");
    Shape shape;
    for (std::uint32_t d = 0; d < ndim; ++d) shape.push_back(get_u32(in));
    std::vector<double> values(numel(shape));
    for (auto& v : values) v = std::bit_cast<double>(get_bytes(in, 8));
    data.shapes.push_back(std::move(shape));
    data.values.push_back(std::move(values));
  }
  return data;
}

CheckpointData read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path);
  return read_checkpoint(in);
}

void restore_parameters(const CheckpointData& data, ParameterSet& params) {
  std::map<std::string, std::size_t> by_name;
  for (std::size_t i = 0; i < data.names.size(); ++i) by_name[data.names[i]] = i;
  const auto all = params.all();
  for (const auto& [name, t] : all) {
    const auto it = by_name.find(name);
    if (it == by_name.end()) throw std::runtime_error("checkpoint has no tensor '" + name + "'");
    if (data.shapes[it->second] != t.shape()) {
      throw std::runtime_error("checkpoint tensor '" + name + "' has shape " + shape_str(data.shapes[it->second]) +
                               ", model expects " + shape_str(t.shape()));
    }
  }
  if (by_name.size() != all.size()) {
    for (const auto& n : data.names) {
      bool known = false;
      for (const auto& nt : all) known = known || nt.name == n;
      if (!known) throw std::runtime_error("checkpoint tensor '" + n + "' is not part of the model");
    }
  }
  for (const auto& [name, t] : all) {
    const auto& src = data.values[by_name.at(name)];
    Tensor handle = t;
    std::copy(src.begin(), src.end(), handle.mutable_data().begin());
  }
}

}  // namespace simspoof
