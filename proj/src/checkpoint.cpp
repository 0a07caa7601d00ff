#include "trajdiff/checkpoint.hpp"

#include "trajdiff/binary_io.hpp"

#include <numeric>
#include <stdexcept>

namespace trajdiff {

const std::string& Checkpoint::meta(const std::string& key) const {
  auto it = meta_.find(key);
  if (it == meta_.end()) throw std::out_of_range("checkpoint '" + tag_ + "' has no metadata key " + key);
  return it->second;
}

void Checkpoint::add(NamedTensor t) {
  const auto expected = std::accumulate(t.shape.begin(), t.shape.end(), std::int64_t{1},
                                        std::multiplies<>());
  if (expected != static_cast<std::int64_t>(t.data.size()))
    throw std::invalid_argument("tensor '" + t.name + "' data does not match its shape");
  for (const auto& existing : tensors_)
    if (existing.name == t.name) throw std::invalid_argument("duplicate tensor name: " + t.name);
  tensors_.push_back(std::move(t));
}

const NamedTensor& Checkpoint::tensor(const std::string& name) const {
  for (const auto& t : tensors_)
    if (t.name == name) return t;
  throw std::out_of_range("checkpoint '" + tag_ + "' has no tensor " + name);
}

std::vector<char> Checkpoint::serialize() const {
  ByteWriter w;
  w.put<std::uint32_t>(kMagic);
  w.put<std::uint32_t>(kVersion);
  w.put_string(tag_);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(meta_.size()));
  for (const auto& [k, v] : meta_) {
    w.put_string(k);
    w.put_string(v);
  }
  w.put<std::uint32_t>(static_cast<std::uint32_t>(tensors_.size()));
  for (const auto& t : tensors_) {
    w.put_string(t.name);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) w.put<std::int64_t>(d);
    w.put_raw(t.data.data(), t.data.size() * sizeof(double));
  }
  return w.bytes();
}

Checkpoint Checkpoint::deserialize(std::vector<char> bytes) {
  ByteReader r(std::move(bytes));
  if (r.get<std::uint32_t>() != kMagic) throw std::runtime_error("not a checkpoint file");
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck(r.get_string());
  const auto n_meta = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    auto k = r.get_string();
    ck.meta_[k] = r.get_string();
  }
  const auto n_tensors = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    NamedTensor t;
    t.name = r.get_string();
    const auto ndim = r.get<std::uint32_t>();
    std::int64_t count = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      t.shape.push_back(r.get<std::int64_t>());
      count *= t.shape.back();
    }
    if (count < 0) throw std::runtime_error("negative tensor dimension in checkpoint");
    t.data.resize(static_cast<std::size_t>(count));
    r.get_raw(t.data.data(), t.data.size() * sizeof(double));
    ck.add(std::move(t));
  }
  if (!r.at_end()) throw std::runtime_error("trailing bytes in checkpoint");
  return ck;
}

void Checkpoint::save(const std::filesystem::path& file) const {
  ByteWriter w;
  const auto bytes = serialize();
  w.put_raw(bytes.data(), bytes.size());
  w.save(file);
}

Checkpoint Checkpoint::load(const std::filesystem::path& file, const std::string& expected_tag) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + file.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  auto ck = deserialize(std::move(bytes));
  if (!expected_tag.empty() && ck.tag() != expected_tag)
    throw std::runtime_error(file.string() + ": expected a '" + expected_tag + "' checkpoint, found '" +
                             ck.tag() + "'");
  return ck;
}

}  // namespace trajdiff
