#include "poolnet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <unordered_map>
#include <unordered_set>

namespace poolnet {

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char bytes[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                  static_cast<unsigned char>(v >> 16),
                                  static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(bytes), 4);
}

bool get_u32(std::istream& in, std::uint32_t& v) {
  unsigned char bytes[4];
  if (!in.read(reinterpret_cast<char*>(bytes), 4)) return false;
  v = static_cast<std::uint32_t>(bytes[0]) | (static_cast<std::uint32_t>(bytes[1]) << 8) |
      (static_cast<std::uint32_t>(bytes[2]) << 16) | (static_cast<std::uint32_t>(bytes[3]) << 24);
  return true;
}

std::uint32_t need_u32(std::istream& in, const char* what) {
  std::uint32_t v = 0;
  if (!get_u32(in, v)) throw CheckpointError(std::string("truncated checkpoint reading ") + what);
  return v;
}

}  // namespace

void write_checkpoint(std::ostream& out, const std::vector<CheckpointRecord>& records) {
  out.write(kCheckpointMagic, 5);
  for (const auto& r : records) {
    std::size_t count = 1;
    for (auto d : r.dims) count *= d;
    if (count != r.values.size()) {
      throw CheckpointError("record '" + r.name + "' dims do not match payload size");
    }
    put_u32(out, static_cast<std::uint32_t>(r.name.size()));
    out.write(r.name.data(), static_cast<std::streamsize>(r.name.size()));
    put_u32(out, static_cast<std::uint32_t>(r.dims.size()));
    for (auto d : r.dims) put_u32(out, d);
    for (float f : r.values) put_u32(out, std::bit_cast<std::uint32_t>(f));
  }
  if (!out) throw CheckpointError("failed writing checkpoint");
}

std::vector<CheckpointRecord> read_checkpoint(std::istream& in) {
  char magic[5];
  if (!in.read(magic, 5) || std::memcmp(magic, kCheckpointMagic, 5) != 0) {
    throw CheckpointError("not a checkpoint: missing PNLB1 magic");
  }
  std::vector<CheckpointRecord> records;
  std::unordered_set<std::string> seen;
  while (true) {
    std::uint32_t name_len = 0;
    if (!get_u32(in, name_len)) {
      if (in.gcount() == 0 && in.eof()) break;
      throw CheckpointError("truncated checkpoint record header");
    }
    CheckpointRecord r;
    r.name.resize(name_len);
    if (!in.read(r.name.data(), name_len)) throw CheckpointError("truncated checkpoint name");
    if (!seen.insert(r.name).second) throw CheckpointError("duplicate record '" + r.name + "'");
    const std::uint32_t rank = need_u32(in, "rank");
    if (rank > 8) throw CheckpointError("record '" + r.name + "' has implausible rank");
    std::size_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      r.dims.push_back(need_u32(in, "dims"));
      count *= r.dims.back();
    }
    r.values.resize(count);
    for (auto& f : r.values) f = std::bit_cast<float>(need_u32(in, "payload"));
    records.push_back(std::move(r));
  }
  return records;
}

void save_checkpoint(const std::filesystem::path& path,
                     const std::vector<CheckpointRecord>& records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open '" + path.string() + "' for writing");
  write_checkpoint(out, records);
}

std::vector<CheckpointRecord> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
  return read_checkpoint(in);
}

template <typename T>
CheckpointRecord to_record(const std::string& name, const Tensor<T>& tensor) {
  const Shape& s = tensor.shape();
  CheckpointRecord r;
  r.name = name;
  r.dims = {static_cast<std::uint32_t>(s.n), static_cast<std::uint32_t>(s.c),
            static_cast<std::uint32_t>(s.h), static_cast<std::uint32_t>(s.w)};
  r.values.reserve(tensor.numel());
  for (T v : tensor.data()) r.values.push_back(static_cast<float>(v));
  return r;
}

template <typename T>
std::vector<CheckpointRecord> to_records(const std::vector<Parameter<T>>& params) {
  std::vector<CheckpointRecord> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(to_record(p.name, p.tensor));
  return out;
}

template <typename T>
void load_parameters(std::vector<Parameter<T>>& params,
                     const std::vector<CheckpointRecord>& records) {
  std::unordered_map<std::string, const CheckpointRecord*> by_name;
  for (const auto& r : records) by_name[r.name] = &r;
  std::unordered_set<std::string> used;
  for (auto& p : params) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw CheckpointError("checkpoint lacks parameter '" + p.name + "'");
    const CheckpointRecord& r = *it->second;
    const Shape& s = p.tensor.shape();
    const std::vector<std::uint32_t> want = {
        static_cast<std::uint32_t>(s.n), static_cast<std::uint32_t>(s.c),
        static_cast<std::uint32_t>(s.h), static_cast<std::uint32_t>(s.w)};
    if (r.dims != want) {
      throw CheckpointError("parameter '" + p.name + "' shape mismatch: model " + s.str());
    }
    auto dst = p.tensor.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(r.values[i]);
    used.insert(p.name);
  }
  for (const auto& r : records) {
    if (r.name.rfind("__", 0) == 0) continue;
    if (!used.count(r.name)) {
      throw CheckpointError("checkpoint has unknown parameter '" + r.name + "'");
    }
  }
}

template CheckpointRecord to_record(const std::string&, const Tensor<float>&);
template CheckpointRecord to_record(const std::string&, const Tensor<double>&);
template std::vector<CheckpointRecord> to_records(const std::vector<Parameter<float>>&);
template std::vector<CheckpointRecord> to_records(const std::vector<Parameter<double>>&);
template void load_parameters(std::vector<Parameter<float>>&,
                              const std::vector<CheckpointRecord>&);
template void load_parameters(std::vector<Parameter<double>>&,
                              const std::vector<CheckpointRecord>&);

}  // namespace poolnet
