#include "casim/render/render.hpp"

#include "casim/data/motion_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace casim::render {

namespace {

using Vec3 = Eigen::Vector3d;  // x right, y up, z forward

struct Pose {
  std::vector<std::pair<Vec3, Vec3>> bones;
  Vec3 head;
  std::array<Vec3, 2> hands;
  std::array<double, 2> hand_open;
};

constexpr double kTorso = 0.5;
constexpr double kNeck = 0.12;
constexpr double kArm = 0.55;
constexpr double kShoulder = 0.18;
constexpr double kHip = 0.1;

Pose pose_at(const nn::RowVec& f, const Point2& root, double yaw) {
  using namespace data;
  const Vec3 up(0, 1, 0);
  const Vec3 forward(-std::sin(yaw), 0, std::cos(yaw));
  const Vec3 right(std::cos(yaw), 0, std::sin(yaw));
  const double height = f(kRootHeight);
  const Vec3 pelvis(root[0], height, root[1]);

  Pose p;
  const double pitch = f(kTorsoPitch);
  const Vec3 spine = (up * std::cos(pitch) + forward * std::sin(pitch)).normalized();
  const Vec3 neck = pelvis + spine * kTorso;
  p.bones.emplace_back(pelvis, neck);
  p.head = neck + spine * kNeck;

  // Upper body turns by the torso yaw offset.
  const double ty = f(kTorsoYaw);
  const Vec3 t_forward = forward * std::cos(ty) - right * std::sin(ty);
  const Vec3 t_right = right * std::cos(ty) + forward * std::sin(ty);
  for (int side = 0; side < 2; ++side) {
    const double out = side == 0 ? -1.0 : 1.0;
    const Vec3 shoulder = neck + t_right * (out * kShoulder);
    p.bones.emplace_back(neck, shoulder);
    const double elev = f(side == 0 ? kLeftArmElev : kRightArmElev);
    const double swing = f(side == 0 ? kLeftArmSwing : kRightArmSwing);
    const Vec3 lateral = -up * std::cos(elev) + t_right * (out * std::sin(elev));
    const Vec3 arm = (lateral * std::cos(swing) + t_forward * std::sin(swing)).normalized();
    p.hands[side] = shoulder + arm * kArm;
    p.hand_open[side] = std::clamp(f(side == 0 ? kLeftHand : kRightHand), 0.0, 1.0);
    p.bones.emplace_back(shoulder, p.hands[side]);

    const Vec3 hip = pelvis + right * (out * kHip);
    p.bones.emplace_back(pelvis, hip);
    const double phase = f(side == 0 ? kLeftLegPhase : kRightLegPhase);
    const Vec3 leg = -up * std::cos(phase) + forward * std::sin(phase);
    p.bones.emplace_back(hip, hip + leg * std::max(height, 0.1));
  }
  return p;
}

// Oblique projection so forward motion stays visible.
Point2 project(const Vec3& v) { return {v.x() + 0.45 * v.z(), v.y() + 0.25 * v.z()}; }

struct Bounds {
  double x0 = std::numeric_limits<double>::infinity(), y0 = x0;
  double x1 = -x0, y1 = -x0;
  void add(const Point2& p) {
    x0 = std::min(x0, p[0]);
    x1 = std::max(x1, p[0]);
    y0 = std::min(y0, p[1]);
    y1 = std::max(y1, p[1]);
  }
  void pad(double m) {
    if (!std::isfinite(x0)) x0 = y0 = 0.0, x1 = y1 = 0.0;
    x0 -= m, y0 -= m, x1 += m, y1 += m;
  }
};

class Canvas {
 public:
  Canvas(const Bounds& b, double pixels) : b_(b) {
    const double span = std::max({b.x1 - b.x0, b.y1 - b.y0, 1e-9});
    scale_ = pixels / span;
    w_ = (b.x1 - b.x0) * scale_;
    h_ = (b.y1 - b.y0) * scale_;
  }
  // y grows upward in world units.
  Point2 map(const Point2& p) const { return {(p[0] - b_.x0) * scale_, h_ - (p[1] - b_.y0) * scale_}; }
  double scale() const { return scale_; }

  std::string open() const {
    char buf[200];
    std::snprintf(buf, sizeof buf,
                  "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" viewBox=\"0 0 %.2f %.2f\">\n",
                  std::ceil(w_), std::ceil(h_), w_, h_);
    std::string s = buf;
    std::snprintf(buf, sizeof buf, "<rect width=\"%.2f\" height=\"%.2f\" fill=\"white\"/>\n", w_, h_);
    return s + buf;
  }

 private:
  Bounds b_;
  double scale_ = 1.0, w_ = 0.0, h_ = 0.0;
};

std::string polyline(const Canvas& c, const std::vector<Point2>& pts, const char* attrs) {
  std::ostringstream s;
  s << "<polyline " << attrs << " points=\"";
  char buf[64];
  for (const auto& p : pts) {
    const auto q = c.map(p);
    std::snprintf(buf, sizeof buf, "%.2f,%.2f ", q[0], q[1]);
    s << buf;
  }
  s << "\"/>\n";
  return s.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace

std::vector<Point2> integrate_root(const data::Mat& raw_frames) {
  std::vector<Point2> path;
  path.reserve(static_cast<std::size_t>(raw_frames.rows()));
  double x = 0.0, z = 0.0, yaw = 0.0;
  for (Eigen::Index t = 0; t < raw_frames.rows(); ++t) {
    path.push_back({x, z});
    const double vx = raw_frames(t, data::kRootVelX);
    const double vz = raw_frames(t, data::kRootVelZ);
    x += vx * std::cos(yaw) - vz * std::sin(yaw);
    z += vx * std::sin(yaw) + vz * std::cos(yaw);
    yaw += raw_frames(t, data::kRootYawVel);
  }
  return path;
}

RenderResult render_motion(const data::MotionSequence& motion, const std::filesystem::path& out_dir) {
  data::check_invariants(motion);
  std::filesystem::create_directories(out_dir);
  const auto& frames = motion.frames;
  RenderResult result;
  result.root_path = integrate_root(frames);

  std::vector<Pose> poses;
  double yaw = 0.0;
  Bounds view;
  for (Eigen::Index t = 0; t < frames.rows(); ++t) {
    poses.push_back(pose_at(frames.row(t), result.root_path[static_cast<std::size_t>(t)], yaw));
    yaw += frames(t, data::kRootYawVel);
    for (const auto& [a, b] : poses.back().bones) {
      view.add(project(a));
      view.add(project(b));
    }
    view.add(project(poses.back().head));
  }
  for (const auto& p : result.root_path) view.add(project(Vec3(p[0], 0.0, p[1])));
  view.pad(0.3);
  const Canvas canvas(view, 400.0);

  std::vector<Point2> ground_path;
  for (const auto& p : result.root_path) ground_path.push_back(project(Vec3(p[0], 0.0, p[1])));
  const std::string path_svg = polyline(canvas, ground_path, "fill=\"none\" stroke=\"black\" stroke-width=\"1.5\"");

  const int digits = std::max(5, static_cast<int>(std::to_string(frames.rows()).size()));
  for (std::size_t t = 0; t < poses.size(); ++t) {
    const auto& pose = poses[t];
    std::ostringstream svg;
    svg << canvas.open() << path_svg;
    char buf[200];
    for (const auto& [a, b] : pose.bones) {
      const auto p = canvas.map(project(a));
      const auto q = canvas.map(project(b));
      std::snprintf(buf, sizeof buf,
                    "<line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" stroke=\"#1f4e79\" stroke-width=\"3\"/>\n",
                    p[0], p[1], q[0], q[1]);
      svg << buf;
    }
    const auto h = canvas.map(project(pose.head));
    std::snprintf(buf, sizeof buf, "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"%.2f\" fill=\"#1f4e79\"/>\n", h[0], h[1],
                  0.08 * canvas.scale());
    svg << buf;
    for (int s = 0; s < 2; ++s) {
      const auto c = canvas.map(project(pose.hands[s]));
      std::snprintf(buf, sizeof buf, "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"%.2f\" fill=\"#c55a11\"/>\n", c[0], c[1],
                    (0.02 + 0.03 * pose.hand_open[s]) * canvas.scale());
      svg << buf;
    }
    std::snprintf(buf, sizeof buf, "<text x=\"6\" y=\"16\" font-size=\"12\">frame %zu</text>\n</svg>\n", t);
    svg << buf;
    std::string index = std::to_string(t);
    index.insert(0, static_cast<std::size_t>(std::max(0, digits - static_cast<int>(index.size()))), '0');
    result.frames.push_back(out_dir / ("frame_" + index + ".svg"));
    write_file(result.frames.back(), svg.str());
  }

  // Top-down trajectory: x to the right, forward (z) up.
  Bounds top;
  for (const auto& p : result.root_path) top.add(p);
  top.pad(0.25);
  const Canvas tc(top, 400.0);
  std::ostringstream svg;
  svg << tc.open() << polyline(tc, result.root_path, "fill=\"none\" stroke=\"black\" stroke-width=\"2\"");
  if (!result.root_path.empty()) {
    const auto s = tc.map(result.root_path.front());
    const auto e = tc.map(result.root_path.back());
    char buf[200];
    std::snprintf(buf, sizeof buf, "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"4\" fill=\"black\"/>\n", s[0], s[1]);
    svg << buf;
    std::snprintf(buf, sizeof buf, "<rect x=\"%.2f\" y=\"%.2f\" width=\"8\" height=\"8\" fill=\"black\"/>\n", e[0] - 4,
                  e[1] - 4);
    svg << buf;
  }
  svg << "</svg>\n";
  result.trajectory = out_dir / "trajectory.svg";
  write_file(result.trajectory, svg.str());
  return result;
}

RenderResult render_motion(const std::filesystem::path& motion_file, const std::filesystem::path& out_dir) {
  return render_motion(data::load_motion(motion_file), out_dir);
}

}  // namespace casim::render
