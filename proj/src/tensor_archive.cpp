#include "chrono/tensor_archive.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

#include "chrono/common.hpp"

using nlohmann::json;

namespace chrono {

namespace {

constexpr char kMagic[4] = {'C', 'T', 'A', 'R'};

std::string dtype_name(torch::ScalarType t) {
  switch (t) {
    case torch::kFloat32: return "f32";
    case torch::kFloat64: return "f64";
    case torch::kInt64: return "i64";
    case torch::kUInt8: return "u8";
    default: fail(ErrorCode::InvalidArgument, "unsupported archive dtype");
  }
}

torch::ScalarType dtype_from_name(const std::string& name) {
  if (name == "f32") return torch::kFloat32;
  if (name == "f64") return torch::kFloat64;
  if (name == "i64") return torch::kInt64;
  if (name == "u8") return torch::kUInt8;
  fail(ErrorCode::CorruptCheckpoint, "unknown archive dtype: " + name);
}

}  // namespace

void TensorArchive::save(const std::string& path) const {
  json header;
  header["meta"] = meta;
  header["tensors"] = json::array();
  uint64_t offset = 0;
  for (const auto& [name, tensor] : tensors) {
    auto t = tensor.contiguous().cpu();
    const uint64_t nbytes = static_cast<uint64_t>(t.numel()) * t.element_size();
    header["tensors"].push_back({{"name", name},
                                 {"dtype", dtype_name(t.scalar_type())},
                                 {"shape", std::vector<int64_t>(t.sizes().begin(), t.sizes().end())},
                                 {"offset", offset},
                                 {"nbytes", nbytes}});
    offset += nbytes;
  }
  const std::string header_str = header.dump();

  const std::string tmp = path + ".tmp";
  std::ofstream out(tmp, std::ios::binary);
  if (!out) fail(ErrorCode::IoError, "cannot open for write: " + path);
  out.write(kMagic, 4);
  uint32_t version = kFormatVersion;
  uint64_t header_len = header_str.size();
  out.write(reinterpret_cast<const char*>(&version), sizeof(version));
  out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
  out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  for (const auto& [name, tensor] : tensors) {
    auto t = tensor.contiguous().cpu();
    out.write(static_cast<const char*>(t.data_ptr()),
              static_cast<std::streamsize>(t.numel() * t.element_size()));
  }
  out.close();
  if (!out) fail(ErrorCode::IoError, "write failed: " + path);
  std::filesystem::rename(tmp, path);
}

TensorArchive TensorArchive::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open: " + path);
  char magic[4];
  uint32_t version = 0;
  uint64_t header_len = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    fail(ErrorCode::CorruptCheckpoint, "bad archive magic: " + path);
  }
  if (version != kFormatVersion) {
    fail(ErrorCode::CorruptCheckpoint, "unsupported archive version " + std::to_string(version));
  }
  std::string header_str(header_len, '\0');
  in.read(header_str.data(), static_cast<std::streamsize>(header_len));
  if (!in) fail(ErrorCode::CorruptCheckpoint, "truncated archive header: " + path);

  json header;
  try {
    header = json::parse(header_str);
  } catch (const json::exception& e) {
    fail(ErrorCode::CorruptCheckpoint, std::string("bad archive header: ") + e.what());
  }

  TensorArchive archive;
  archive.meta = header.value("meta", json::object());
  const std::streampos payload_start = in.tellg();
  for (const auto& entry : header.at("tensors")) {
    const std::string name = entry.at("name").get<std::string>();
    const auto shape = entry.at("shape").get<std::vector<int64_t>>();
    const auto dtype = dtype_from_name(entry.at("dtype").get<std::string>());
    const uint64_t offset = entry.at("offset").get<uint64_t>();
    const uint64_t nbytes = entry.at("nbytes").get<uint64_t>();

    auto tensor = torch::empty(shape, torch::TensorOptions().dtype(dtype));
    if (static_cast<uint64_t>(tensor.numel()) * tensor.element_size() != nbytes) {
      fail(ErrorCode::CorruptCheckpoint, "size mismatch for tensor " + name);
    }
    in.seekg(payload_start + static_cast<std::streamoff>(offset));
    in.read(static_cast<char*>(tensor.data_ptr()), static_cast<std::streamsize>(nbytes));
    if (!in) fail(ErrorCode::CorruptCheckpoint, "truncated payload for tensor " + name);
    archive.tensors.emplace(name, std::move(tensor));
  }
  return archive;
}

}  // namespace chrono
