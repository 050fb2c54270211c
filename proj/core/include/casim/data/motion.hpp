#pragma once

#include "casim/nn/tensor.hpp"

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace casim::data {

using nn::Mat;

inline constexpr int kNumChannels = 16;
inline constexpr double kFps = 20.0;
inline constexpr int kMinFrames = 8;
inline constexpr int kMaxFrames = 196;

// Channel layout of every motion frame.
enum Channel : int {
  kRootVelX = 0,     // m/frame, lateral (+x = right)
  kRootVelZ = 1,     // m/frame, forward
  kRootYawVel = 2,   // rad/frame, + = turning left
  kRootHeight = 3,   // m
  kLeftArmElev = 4,  // rad, 0 = hanging, pi = straight up
  kRightArmElev = 5,
  kLeftArmSwing = 6,  // rad, + = forward
  kRightArmSwing = 7,
  kLeftLegPhase = 8,  // rad, hip flexion
  kRightLegPhase = 9,
  kTorsoPitch = 10,  // rad, + = leaning forward
  kTorsoYaw = 11,    // rad offset from heading
  kLeftHand = 12,    // [0,1] open amount
  kRightHand = 13,
  kReserved0 = 14,  // always 0
  kReserved1 = 15,
};

struct ChannelInfo {
  std::string_view name;
  double min;
  double max;
};

const std::array<ChannelInfo, kNumChannels>& channel_table();

enum class Action : int {
  walk,
  run,
  turn,
  raise_arm,
  lower_arm,
  wave,
  jump,
  sit,
  stand,
  crouch,
  clap,
  kick,
};
inline constexpr int kNumActions = 12;

enum class Side : int { left, right, none };
enum class Direction : int { forward, backward, left, right, none };
enum class Speed : int { slowly, normally, quickly };

std::string_view to_string(Action a);
std::string_view to_string(Side s);
std::string_view to_string(Direction d);
std::string_view to_string(Speed s);
std::optional<Action> parse_action(std::string_view s);
std::optional<Side> parse_side(std::string_view s);
std::optional<Direction> parse_direction(std::string_view s);
std::optional<Speed> parse_speed(std::string_view s);

// Actions that must name a side.
bool action_needs_side(Action a);
// Actions whose phrase may carry a direction word.
bool action_takes_direction(Action a);

struct ActionStep {
  Action action = Action::walk;
  Side side = Side::none;
  Direction direction = Direction::none;
  Speed speed = Speed::normally;
  int duration = 20;  // frames

  bool operator==(const ActionStep&) const = default;
};

struct ActionScript {
  std::vector<ActionStep> steps;

  int total_frames() const;
  bool operator==(const ActionScript&) const = default;
};

// Returns the first violated constraint, or nullopt when the script is valid.
std::optional<std::string> validate(const ActionScript& script, int max_actions = 4);

struct Segment {
  int action = 0;  // Action as integer
  int start = 0;
  int end = 0;  // exclusive

  bool operator==(const Segment&) const = default;
};

struct MotionSequence {
  Mat frames;  // T x 16
  double fps = kFps;
  std::vector<Segment> segments;

  int length() const { return static_cast<int>(frames.rows()); }
};

// Throws std::invalid_argument naming the violated invariant.
void check_invariants(const MotionSequence& motion);

}  // namespace casim::data
