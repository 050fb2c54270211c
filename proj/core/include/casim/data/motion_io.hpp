#pragma once

#include "casim/data/motion.hpp"

#include <filesystem>

namespace casim::data {

inline constexpr std::uint32_t kMotionFormatVersion = 1;

// Binary motion file, all integers/floats little-endian:
//   "CASIMMOT" | u32 version | u32 T | u32 D | f64 fps
//   | D x (u32 len, name bytes) | T*D f64 row-major frames
//   | u32 segment count | count x (i32 action, i32 start, i32 end)
void save_motion(const MotionSequence& motion, const std::filesystem::path& path);

// Throws io::ReadError naming the failing header field on corrupt input.
MotionSequence load_motion(const std::filesystem::path& path);

}  // namespace casim::data
