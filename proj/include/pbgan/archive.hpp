#pragma once

#include "pbgan/tensor.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>

namespace pbgan {

class ArchiveError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Versioned binary container: 8-byte magic, u32 version, u64 header
/// length, a JSON header (caller metadata plus a tensor index), then raw
/// little-endian float32 blobs in index order.
class TensorArchive {
 public:
  static constexpr std::uint32_t kVersion = 1;

  nlohmann::json& meta() { return meta_; }
  [[nodiscard]] const nlohmann::json& meta() const { return meta_; }

  void put(const std::string& name, const Matrix<float>& m);
  void put(const std::string& name, const Image& img);
  [[nodiscard]] bool contains(const std::string& name) const { return tensors_.count(name) > 0; }
  [[nodiscard]] const Matrix<float>& matrix(const std::string& name) const;
  [[nodiscard]] Image image(const std::string& name) const;
  /// Copies into `dst`, which must already have the stored shape.
  void get_into(const std::string& name, Matrix<float>& dst) const;

  void save(const std::filesystem::path& path, std::string_view magic) const;
  static TensorArchive load(const std::filesystem::path& path, std::string_view magic);

  /// Digest over metadata and tensor contents.
  [[nodiscard]] std::string digest() const;

 private:
  nlohmann::json meta_ = nlohmann::json::object();
  std::map<std::string, Matrix<float>> tensors_;
  std::map<std::string, Shape> image_shapes_;
};

}  // namespace pbgan
