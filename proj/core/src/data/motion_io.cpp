#include "casim/data/motion_io.hpp"

#include "casim/io/binary.hpp"

#include <cstring>
#include <fstream>

namespace casim::data {

namespace {
constexpr char kMagic[8] = {'C', 'A', 'S', 'I', 'M', 'M', 'O', 'T'};
}

void save_motion(const MotionSequence& motion, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write motion file " + path.string());
  os.write(kMagic, sizeof(kMagic));
  io::write_u32(os, kMotionFormatVersion);
  io::write_u32(os, static_cast<std::uint32_t>(motion.frames.rows()));
  io::write_u32(os, static_cast<std::uint32_t>(motion.frames.cols()));
  io::write_f64(os, motion.fps);
  const auto& channels = channel_table();
  for (Eigen::Index c = 0; c < motion.frames.cols(); ++c) {
    const std::string name = c < kNumChannels ? std::string(channels[static_cast<std::size_t>(c)].name)
                                              : "channel_" + std::to_string(c);
    io::write_string(os, name);
  }
  for (Eigen::Index i = 0; i < motion.frames.size(); ++i) io::write_f64(os, motion.frames.data()[i]);
  io::write_u32(os, static_cast<std::uint32_t>(motion.segments.size()));
  for (const auto& s : motion.segments) {
    io::write_i32(os, s.action);
    io::write_i32(os, s.start);
    io::write_i32(os, s.end);
  }
  if (!os) throw std::runtime_error("failed writing motion file " + path.string());
}

MotionSequence load_motion(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open motion file " + path.string());
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
    throw io::ReadError("bad header field 'magic' in " + path.string());
  }
  const auto version = io::read_u32(is, "version");
  if (version != kMotionFormatVersion) {
    throw io::ReadError("bad header field 'version' (" + std::to_string(version) + ") in " + path.string());
  }
  const auto t = io::read_u32(is, "T");
  if (t == 0 || t > 100000) throw io::ReadError("bad header field 'T' in " + path.string());
  const auto d = io::read_u32(is, "D");
  if (d == 0 || d > 4096) throw io::ReadError("bad header field 'D' in " + path.string());
  MotionSequence motion;
  motion.fps = io::read_f64(is, "fps");
  if (!(motion.fps > 0.0)) throw io::ReadError("bad header field 'fps' in " + path.string());
  for (std::uint32_t c = 0; c < d; ++c) io::read_string(is, "channel names", 256);
  motion.frames.resize(t, d);
  for (Eigen::Index i = 0; i < motion.frames.size(); ++i) motion.frames.data()[i] = io::read_f64(is, "frames");
  const auto nseg = io::read_u32(is, "segment count");
  if (nseg > t) throw io::ReadError("bad field 'segment count' in " + path.string());
  for (std::uint32_t i = 0; i < nseg; ++i) {
    Segment s;
    s.action = io::read_i32(is, "segment action");
    s.start = io::read_i32(is, "segment start");
    s.end = io::read_i32(is, "segment end");
    motion.segments.push_back(s);
  }
  return motion;
}

}  // namespace casim::data
