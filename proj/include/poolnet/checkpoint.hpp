#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "poolnet/tensor.hpp"

namespace poolnet {

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> tensor;
  bool trainable = true;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One named array in a checkpoint file.
struct CheckpointRecord {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> values;
};

/// File layout: "PNLB1", then for each record: u32 name length, name bytes,
/// u32 rank, rank x u32 dims, f32 payload. All integers and floats are
/// little-endian. Records run to end of file.
inline constexpr char kCheckpointMagic[] = "PNLB1";

void write_checkpoint(std::ostream& out, const std::vector<CheckpointRecord>& records);
std::vector<CheckpointRecord> read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path,
                     const std::vector<CheckpointRecord>& records);
std::vector<CheckpointRecord> load_checkpoint(const std::filesystem::path& path);

template <typename T>
CheckpointRecord to_record(const std::string& name, const Tensor<T>& tensor);

template <typename T>
std::vector<CheckpointRecord> to_records(const std::vector<Parameter<T>>& params);

/// Copies record payloads into same-named parameters. Every parameter must
/// be present with a matching shape; records whose names start with "__"
/// (trainer metadata) are ignored, any other unknown record is an error.
template <typename T>
void load_parameters(std::vector<Parameter<T>>& params,
                     const std::vector<CheckpointRecord>& records);

}  // namespace poolnet
