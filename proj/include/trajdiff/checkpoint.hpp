#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace trajdiff {

struct NamedTensor {
  std::string name;
  std::vector<std::int64_t> shape;
  std::vector<double> data;  // row-major over `shape`
};

/// Versioned binary container for model parameters.
///
/// Layout (little-endian):
///   u32 magic "TDCK", u32 version, str tag,
///   u32 n_meta, n_meta x (str key, str value),
///   u32 n_tensors, n_tensors x (str name, u32 ndim, ndim x i64 dim, prod(dim) x f64)
/// where str is u32 length followed by raw bytes.
class Checkpoint {
 public:
  static constexpr std::uint32_t kMagic = 0x4b434454;  // "TDCK"
  static constexpr std::uint32_t kVersion = 1;

  Checkpoint() = default;
  explicit Checkpoint(std::string tag) : tag_(std::move(tag)) {}

  const std::string& tag() const { return tag_; }

  void set_meta(const std::string& key, const std::string& value) { meta_[key] = value; }
  const std::string& meta(const std::string& key) const;
  bool has_meta(const std::string& key) const { return meta_.count(key) != 0; }

  void add(NamedTensor t);
  const NamedTensor& tensor(const std::string& name) const;
  const std::vector<NamedTensor>& tensors() const { return tensors_; }

  std::vector<char> serialize() const;
  static Checkpoint deserialize(std::vector<char> bytes);
  void save(const std::filesystem::path& file) const;
  /// Throws if the file's tag differs from `expected_tag` (when non-empty).
  static Checkpoint load(const std::filesystem::path& file, const std::string& expected_tag = {});

 private:
  std::string tag_;
  std::map<std::string, std::string> meta_;
  std::vector<NamedTensor> tensors_;
};

}  // namespace trajdiff
