#include "casim/io/checkpoint.hpp"

#include "casim/io/binary.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>

namespace casim::io {

namespace {

constexpr char kMagic[8] = {'C', 'A', 'S', 'I', 'M', 'C', 'K', 'P'};
constexpr std::uint32_t kByteOrderMark = 0x01020304;

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  auto tensors = ckpt.tensors;
  std::sort(tensors.begin(), tensors.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  for (std::size_t i = 1; i < tensors.size(); ++i) {
    if (tensors[i].first == tensors[i - 1].first) throw std::invalid_argument("checkpoint: duplicate tensor " + tensors[i].first);
  }
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write checkpoint " + tmp.string());
    os.write(kMagic, 8);
    write_u32(os, kCheckpointVersion);
    write_u32(os, kByteOrderMark);
    write_string(os, ckpt.kind);
    write_string(os, ckpt.config_json);
    write_u64(os, ckpt.step);
    write_string(os, ckpt.rng_state);
    write_u32(os, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, m] : tensors) {
      write_string(os, name);
      write_u32(os, static_cast<std::uint32_t>(m.rows()));
      write_u32(os, static_cast<std::uint32_t>(m.cols()));
      for (Eigen::Index i = 0; i < m.size(); ++i) write_f64(os, m.data()[i]);
    }
    if (!os) throw std::runtime_error("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read checkpoint " + path.string());
  char magic[8];
  if (!is.read(magic, 8) || !std::equal(magic, magic + 8, kMagic)) throw ReadError("checkpoint: bad magic");
  if (read_u32(is, "version") != kCheckpointVersion) throw ReadError("checkpoint: unsupported version");
  if (read_u32(is, "byte_order") != kByteOrderMark) throw ReadError("checkpoint: unexpected byte order");
  Checkpoint c;
  c.kind = read_string(is, "kind");
  c.config_json = read_string(is, "config");
  c.step = read_u64(is, "step");
  c.rng_state = read_string(is, "rng_state");
  const auto n = read_u32(is, "tensor_count");
  for (std::uint32_t t = 0; t < n; ++t) {
    std::string name = read_string(is, "tensor_name");
    const auto rows = read_u32(is, "tensor_rows");
    const auto cols = read_u32(is, "tensor_cols");
    if (static_cast<std::uint64_t>(rows) * cols > (1ULL << 28)) throw ReadError("checkpoint: tensor " + name + " too large");
    nn::Mat m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = read_f64(is, "tensor_data");
    c.tensors.emplace_back(std::move(name), std::move(m));
  }
  return c;
}

void collect_tensors(const nn::ParamList& params, Checkpoint& ckpt, const std::string& prefix) {
  for (const auto& [name, p] : params.entries()) ckpt.tensors.emplace_back(prefix + name, p.value());
  std::sort(ckpt.tensors.begin(), ckpt.tensors.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
}

void restore_tensors(const Checkpoint& ckpt, nn::ParamList& params, const std::string& prefix) {
  std::map<std::string, const nn::Mat*> stored;
  for (const auto& [name, m] : ckpt.tensors) {
    if (name.rfind(prefix, 0) == 0) stored[name.substr(prefix.size())] = &m;
  }
  std::set<std::string> used;
  for (auto& [name, p] : params.entries()) {
    auto it = stored.find(name);
    if (it == stored.end()) throw std::runtime_error("checkpoint is missing tensor " + prefix + name);
    const nn::Mat& m = *it->second;
    if (m.rows() != p.rows() || m.cols() != p.cols()) {
      throw std::runtime_error("checkpoint tensor " + prefix + name + " is " + std::to_string(m.rows()) + "x" +
                               std::to_string(m.cols()) + ", model expects " + std::to_string(p.rows()) + "x" +
                               std::to_string(p.cols()));
    }
    p.mutable_value() = m;
    used.insert(name);
  }
  for (const auto& [name, m] : stored) {
    if (!used.count(name)) throw std::runtime_error("checkpoint has unexpected tensor " + prefix + name);
  }
}

}  // namespace casim::io
