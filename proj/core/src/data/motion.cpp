#include "casim/data/motion.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace casim::data {

const std::array<ChannelInfo, kNumChannels>& channel_table() {
  static const std::array<ChannelInfo, kNumChannels> table{{
      {"root_vel_x", -0.2, 0.2},
      {"root_vel_z", -0.2, 0.2},
      {"root_yaw_vel", -0.2, 0.2},
      {"root_height", 0.3, 1.5},
      {"left_arm_elevation", 0.0, std::numbers::pi},
      {"right_arm_elevation", 0.0, std::numbers::pi},
      {"left_arm_swing", -1.0, 1.0},
      {"right_arm_swing", -1.0, 1.0},
      {"left_leg_phase", -1.5, 1.5},
      {"right_leg_phase", -1.5, 1.5},
      {"torso_pitch", -0.5, 0.8},
      {"torso_yaw", -1.0, 1.0},
      {"left_hand", 0.0, 1.0},
      {"right_hand", 0.0, 1.0},
      {"reserved_0", 0.0, 0.0},
      {"reserved_1", 0.0, 0.0},
  }};
  return table;
}

namespace {
constexpr std::array<std::string_view, kNumActions> kActionNames{
    "walk", "run", "turn", "raise_arm", "lower_arm", "wave",
    "jump", "sit", "stand", "crouch", "clap", "kick"};
constexpr std::array<std::string_view, 3> kSideNames{"left", "right", "none"};
constexpr std::array<std::string_view, 5> kDirectionNames{"forward", "backward", "left", "right", "none"};
constexpr std::array<std::string_view, 3> kSpeedNames{"slowly", "normally", "quickly"};

template <typename E, std::size_t N>
std::optional<E> parse_enum(const std::array<std::string_view, N>& names, std::string_view s) {
  for (std::size_t i = 0; i < N; ++i) {
    if (names[i] == s) return static_cast<E>(i);
  }
  return std::nullopt;
}
}  // namespace

std::string_view to_string(Action a) { return kActionNames.at(static_cast<std::size_t>(a)); }
std::string_view to_string(Side s) { return kSideNames.at(static_cast<std::size_t>(s)); }
std::string_view to_string(Direction d) { return kDirectionNames.at(static_cast<std::size_t>(d)); }
std::string_view to_string(Speed s) { return kSpeedNames.at(static_cast<std::size_t>(s)); }
std::optional<Action> parse_action(std::string_view s) { return parse_enum<Action>(kActionNames, s); }
std::optional<Side> parse_side(std::string_view s) { return parse_enum<Side>(kSideNames, s); }
std::optional<Direction> parse_direction(std::string_view s) {
  return parse_enum<Direction>(kDirectionNames, s);
}
std::optional<Speed> parse_speed(std::string_view s) { return parse_enum<Speed>(kSpeedNames, s); }

bool action_needs_side(Action a) {
  return a == Action::raise_arm || a == Action::wave || a == Action::kick;
}

bool action_takes_direction(Action a) {
  return a == Action::walk || a == Action::run || a == Action::turn;
}

int ActionScript::total_frames() const {
  int t = 0;
  for (const auto& s : steps) t += s.duration;
  return t;
}

std::optional<std::string> validate(const ActionScript& script, int max_actions) {
  if (script.steps.empty()) return "script has no actions";
  if (static_cast<int>(script.steps.size()) > max_actions) {
    return "script has " + std::to_string(script.steps.size()) + " actions, at most " +
           std::to_string(max_actions) + " allowed";
  }
  for (std::size_t i = 0; i < script.steps.size(); ++i) {
    const auto& s = script.steps[i];
    const std::string where = "action " + std::to_string(i) + " (" + std::string(to_string(s.action)) + ")";
    if (s.duration < kMinFrames) {
      return where + ": duration " + std::to_string(s.duration) + " < " + std::to_string(kMinFrames) + " frames";
    }
    if (action_needs_side(s.action) && s.side == Side::none) return where + ": side is required";
    if (!action_needs_side(s.action) && s.side != Side::none) return where + ": side must be none";
    if (!action_takes_direction(s.action) && s.direction != Direction::none) {
      return where + ": direction must be none";
    }
    if (s.action == Action::turn && (s.direction == Direction::forward || s.direction == Direction::backward)) {
      return where + ": turn direction must be left, right or none";
    }
  }
  if (script.total_frames() > kMaxFrames) {
    return "total length " + std::to_string(script.total_frames()) + " exceeds " + std::to_string(kMaxFrames) + " frames";
  }
  return std::nullopt;
}

void check_invariants(const MotionSequence& motion) {
  const int t = motion.length();
  if (t < kMinFrames || t > kMaxFrames) {
    throw std::invalid_argument("motion length " + std::to_string(t) + " outside [" +
                                std::to_string(kMinFrames) + ", " + std::to_string(kMaxFrames) + "]");
  }
  if (motion.frames.cols() != kNumChannels) {
    throw std::invalid_argument("motion has " + std::to_string(motion.frames.cols()) + " channels, expected 16");
  }
  if (!motion.frames.allFinite()) throw std::invalid_argument("motion contains non-finite values");
  if (!motion.frames.col(kReserved0).isZero(0.0) || !motion.frames.col(kReserved1).isZero(0.0)) {
    throw std::invalid_argument("reserved channels must be exactly zero");
  }
  int cursor = 0;
  for (const auto& s : motion.segments) {
    if (s.start != cursor || s.end <= s.start) {
      throw std::invalid_argument("segments do not tile the frame range at frame " + std::to_string(cursor));
    }
    cursor = s.end;
  }
  if (!motion.segments.empty() && cursor != t) {
    throw std::invalid_argument("segments end at " + std::to_string(cursor) + ", motion has " + std::to_string(t) + " frames");
  }
}

}  // namespace casim::data
