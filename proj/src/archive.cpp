#include "pbgan/archive.hpp"

#include "pbgan/util.hpp"

#include <bit>
#include <fstream>

namespace pbgan {

static_assert(std::endian::native == std::endian::little, "archive format assumes a little-endian host");

void TensorArchive::put(const std::string& name, const Matrix<float>& m) {
  tensors_[name] = m;
  image_shapes_.erase(name);
}

void TensorArchive::put(const std::string& name, const Image& img) {
  tensors_[name] = img.matrix();
  image_shapes_[name] = img.shape();
}

const Matrix<float>& TensorArchive::matrix(const std::string& name) const {
  const auto it = tensors_.find(name);
  if (it == tensors_.end()) throw ArchiveError("archive has no tensor '" + name + "'");
  return it->second;
}

Image TensorArchive::image(const std::string& name) const {
  const auto it = image_shapes_.find(name);
  if (it == image_shapes_.end()) throw ArchiveError("archive has no image '" + name + "'");
  return Image(it->second, matrix(name));
}

void TensorArchive::get_into(const std::string& name, Matrix<float>& dst) const {
  const auto& src = matrix(name);
  if (src.rows() != dst.rows() || src.cols() != dst.cols())
    throw ArchiveError("tensor '" + name + "' has shape " + std::to_string(src.rows()) + "x" +
                       std::to_string(src.cols()) + ", expected " + std::to_string(dst.rows()) + "x" +
                       std::to_string(dst.cols()));
  dst = src;
}

void TensorArchive::save(const std::filesystem::path& path, std::string_view magic) const {
  if (magic.size() != 8) throw ArchiveError("archive magic must be 8 bytes");
  nlohmann::json header = {{"meta", meta_}, {"tensors", nlohmann::json::array()}};
  std::uint64_t offset = 0;
  for (const auto& [name, m] : tensors_) {
    nlohmann::json entry = {{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}, {"offset", offset}};
    if (const auto it = image_shapes_.find(name); it != image_shapes_.end())
      entry["image"] = {it->second.channels, it->second.height, it->second.width};
    header["tensors"].push_back(entry);
    offset += static_cast<std::uint64_t>(m.size()) * sizeof(float);
  }
  const std::string text = header.dump();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw ArchiveError("cannot write " + path.string());
    out.write(magic.data(), 8);
    const std::uint32_t version = kVersion;
    const std::uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&version), sizeof version);
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, m] : tensors_)
      out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(float)));
    if (!out) throw ArchiveError("short write to " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

TensorArchive TensorArchive::load(const std::filesystem::path& path, std::string_view magic) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArchiveError("cannot open " + path.string());
  char got[8];
  in.read(got, 8);
  if (!in || std::string_view(got, 8) != magic) throw ArchiveError(path.string() + ": bad magic");
  std::uint32_t version = 0;
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || version != kVersion) throw ArchiveError(path.string() + ": unsupported version " + std::to_string(version));
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw ArchiveError(path.string() + ": truncated header");
  TensorArchive ar;
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ArchiveError(path.string() + ": corrupt header: " + e.what());
  }
  ar.meta_ = header.at("meta");
  for (const auto& e : header.at("tensors")) {
    const auto name = e.at("name").get<std::string>();
    Matrix<float> m(e.at("rows").get<Eigen::Index>(), e.at("cols").get<Eigen::Index>());
    in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(float)));
    if (!in) throw ArchiveError(path.string() + ": truncated tensor '" + name + "'");
    if (e.contains("image")) ar.image_shapes_[name] = Shape{e["image"][0], e["image"][1], e["image"][2]};
    ar.tensors_.emplace(name, std::move(m));
  }
  return ar;
}

std::string TensorArchive::digest() const {
  Digest d;
  d.update(meta_.dump());
  for (const auto& [name, m] : tensors_) {
    d.update(name);
    d.update_array(m.data(), static_cast<std::size_t>(m.size()));
  }
  return d.hex();
}

}  // namespace pbgan
