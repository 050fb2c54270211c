#pragma once

#include "casim/data/motion.hpp"

#include <array>
#include <filesystem>
#include <vector>

namespace casim::render {

using Point2 = std::array<double, 2>;

// Root position (x, z) per frame, starting at the origin. Planar velocities
// are body-relative and rotated by the heading accumulated from the yaw
// velocity channel.
std::vector<Point2> integrate_root(const data::Mat& raw_frames);

struct RenderResult {
  std::vector<std::filesystem::path> frames;
  std::filesystem::path trajectory;
  std::vector<Point2> root_path;
};

// One stick-figure SVG per frame (frame_00000.svg, ...) plus trajectory.svg,
// a top-down view of the root path in black. Frames also carry the path.
RenderResult render_motion(const data::MotionSequence& motion, const std::filesystem::path& out_dir);
// Loads a motion file first; corrupt files throw naming the header field.
RenderResult render_motion(const std::filesystem::path& motion_file, const std::filesystem::path& out_dir);

}  // namespace casim::render
