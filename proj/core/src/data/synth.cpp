#include "casim/data/synth.hpp"

#include "casim/text/vocab.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <set>
#include <sstream>
#include <stdexcept>

namespace casim::data {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kStandHeight = 0.95;
constexpr double kSitHeight = 0.5;
constexpr double kArmDown = 0.15;
constexpr double kHandRest = 0.3;
// Base gait frequency in Hz at normal speed.
constexpr double kGaitHz = 1.5;

double speed_factor(Speed s) {
  switch (s) {
    case Speed::slowly: return 0.5;
    case Speed::normally: return 1.0;
    case Speed::quickly: return 1.5;
  }
  return 1.0;
}

// Ramp from 0 to 1 reached at progress 1/(2*speed), smoothed, then held.
double ramp(double progress, double speed) {
  const double x = std::clamp(progress * 2.0 * speed, 0.0, 1.0);
  return x * x * (3.0 - 2.0 * x);
}

// Sign of the planar velocity for a walk/run direction: (x, z).
std::pair<double, double> heading(Direction d) {
  switch (d) {
    case Direction::backward: return {0.0, -1.0};
    case Direction::left: return {-1.0, 0.0};
    case Direction::right: return {1.0, 0.0};
    case Direction::forward:
    case Direction::none: return {0.0, 1.0};
  }
  return {0.0, 1.0};
}

// Writes the neutral standing pose into every row.
void neutral(Mat& block) {
  block.setZero();
  block.col(kRootHeight).setConstant(kStandHeight);
  block.col(kLeftArmElev).setConstant(kArmDown);
  block.col(kRightArmElev).setConstant(kArmDown);
  block.col(kLeftHand).setConstant(kHandRest);
  block.col(kRightHand).setConstant(kHandRest);
}

// Per-action channel patterns. t is the frame within the segment, u its
// progress in [0,1], w the angular gait frequency in rad/frame (already
// speed-scaled), phase a gait phase offset.
//
//   walk      planar velocity 0.05*speed m/frame along the direction, legs
//             +-0.5 sin(wt) in antiphase, arms swing against the legs
//   run       as walk with 0.11*speed m/frame, larger strides, torso pitch 0.2
//   turn      yaw velocity +-0.05*speed rad/frame (left positive), small steps
//   raise_arm side arm elevation ramps 0.15 -> 2.8, hand opens
//   lower_arm both arms ramp 2.0 -> 0.15
//   wave      side arm raised to 2.5, swing 0.5 sin(2wt), hand open
//   jump      height 0.95 + 0.3 max(0, sin)^2 hops, legs tuck between hops
//   sit       height ramps 0.95 -> 0.5, torso pitch and hips flex (monotone)
//   stand     height ramps 0.5 -> 0.95, reverse of sit (monotone)
//   crouch    height ramps 0.95 -> 0.65 with flexed legs
//   clap      both arms at 1.3, swing 0.5 + 0.4 sin(2wt), hands open
//   kick      side leg 1.3 max(0, sin(0.7wt))^2, slight back lean
void render_action(const ActionStep& step, Mat& block, double phase) {
  const int n = static_cast<int>(block.rows());
  const double sp = speed_factor(step.speed);
  const double w = 2.0 * kPi * kGaitHz * sp / kFps;
  neutral(block);
  const bool left = step.side == Side::left;
  const int arm = left ? kLeftArmElev : kRightArmElev;
  const int swing = left ? kLeftArmSwing : kRightArmSwing;
  const int hand = left ? kLeftHand : kRightHand;
  const int leg = left ? kLeftLegPhase : kRightLegPhase;

  for (int t = 0; t < n; ++t) {
    const double u = n > 1 ? static_cast<double>(t) / (n - 1) : 1.0;
    const double g = w * t + phase;
    auto row = block.row(t);
    switch (step.action) {
      case Action::walk:
      case Action::run: {
        const bool run = step.action == Action::run;
        const double base = (run ? 0.11 : 0.05) * sp;
        const double v = base * (0.85 + 0.15 * std::cos(2.0 * g));
        const auto [hx, hz] = heading(step.direction);
        row(kRootVelX) = hx * v;
        row(kRootVelZ) = hz * v;
        const double amp = run ? 0.9 : 0.5;
        row(kLeftLegPhase) = amp * std::sin(g);
        row(kRightLegPhase) = -amp * std::sin(g);
        const double arm_amp = run ? 0.7 : 0.35;
        row(kLeftArmSwing) = -arm_amp * std::sin(g);
        row(kRightArmSwing) = arm_amp * std::sin(g);
        row(kRootHeight) = kStandHeight + (run ? 0.04 : 0.015) * std::sin(g) * std::sin(g);
        if (run) {
          row(kLeftArmElev) = 0.5;
          row(kRightArmElev) = 0.5;
          row(kTorsoPitch) = 0.2;
        }
        break;
      }
      case Action::turn: {
        const double sign = step.direction == Direction::right ? -1.0 : 1.0;
        row(kRootYawVel) = sign * 0.05 * sp;
        row(kTorsoYaw) = sign * 0.2 * std::sin(kPi * u);
        row(kLeftLegPhase) = 0.2 * std::sin(g);
        row(kRightLegPhase) = -0.2 * std::sin(g);
        break;
      }
      case Action::raise_arm: {
        const double r = ramp(u, sp);
        row(arm) = kArmDown + 2.65 * r;
        row(hand) = kHandRest + 0.5 * r;
        break;
      }
      case Action::lower_arm: {
        const double r = ramp(u, sp);
        row(kLeftArmElev) = 2.0 - 1.85 * r;
        row(kRightArmElev) = 2.0 - 1.85 * r;
        break;
      }
      case Action::wave: {
        const double r = ramp(u, 2.0 * sp);
        row(arm) = kArmDown + 2.35 * r;
        row(swing) = 0.5 * r * std::sin(2.0 * g);
        row(hand) = 1.0;
        break;
      }
      case Action::jump: {
        const double s = std::sin(0.8 * g);
        const double up = std::max(0.0, s);
        row(kRootHeight) = kStandHeight + 0.3 * up * up;
        row(kLeftLegPhase) = 0.6 * std::max(0.0, -s);
        row(kRightLegPhase) = 0.6 * std::max(0.0, -s);
        row(kLeftArmElev) = kArmDown + 1.0 * up;
        row(kRightArmElev) = kArmDown + 1.0 * up;
        break;
      }
      case Action::sit: {
        const double r = ramp(u, sp);
        row(kRootHeight) = kStandHeight - (kStandHeight - kSitHeight) * r;
        row(kTorsoPitch) = 0.35 * r;
        row(kLeftLegPhase) = 1.4 * r;
        row(kRightLegPhase) = 1.4 * r;
        break;
      }
      case Action::stand: {
        const double r = ramp(u, sp);
        row(kRootHeight) = kSitHeight + (kStandHeight - kSitHeight) * r;
        row(kTorsoPitch) = 0.35 * (1.0 - r);
        row(kLeftLegPhase) = 1.4 * (1.0 - r);
        row(kRightLegPhase) = 1.4 * (1.0 - r);
        break;
      }
      case Action::crouch: {
        const double r = ramp(u, sp);
        row(kRootHeight) = kStandHeight - 0.3 * r;
        row(kLeftLegPhase) = 0.9 * r;
        row(kRightLegPhase) = 0.9 * r;
        row(kTorsoPitch) = 0.3 * r;
        break;
      }
      case Action::clap: {
        row(kLeftArmElev) = 1.3;
        row(kRightArmElev) = 1.3;
        row(kLeftArmSwing) = 0.5 + 0.4 * std::sin(2.0 * g);
        row(kRightArmSwing) = 0.5 + 0.4 * std::sin(2.0 * g);
        row(kLeftHand) = 1.0;
        row(kRightHand) = 1.0;
        break;
      }
      case Action::kick: {
        const double s = std::max(0.0, std::sin(0.7 * g));
        row(leg) = 1.3 * s * s;
        row(kTorsoPitch) = -0.15 * s * s;
        row(kLeftArmElev) = 0.4;
        row(kRightArmElev) = 0.4;
        break;
      }
    }
  }
}

MotionSequence synthesize_impl(const ActionScript& script, std::uint64_t seed, bool jitter) {
  if (auto err = validate(script)) throw std::invalid_argument("invalid script: " + *err);
  const int total = script.total_frames();
  MotionSequence motion;
  motion.frames = Mat::Zero(total, kNumChannels);
  motion.fps = kFps;
  const auto& channels = channel_table();

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  int start = 0;
  for (const auto& step : script.steps) {
    Mat block(step.duration, kNumChannels);
    const double phase = jitter ? 0.5 * unit(rng) : 0.0;
    render_action(step, block, phase);
    if (jitter) {
      // Root channels: gain on the deviation from the neutral pose.
      for (int c = kRootVelX; c <= kRootHeight; ++c) {
        const double gain = 0.95 + 0.1 * unit(rng);
        const double neutral_value = c == kRootHeight ? kStandHeight : 0.0;
        block.col(c) = (block.col(c).array() - neutral_value) * gain + neutral_value;
      }
      // Limb channels: two slow sinusoids, combined amplitude <= 2% of range.
      for (int c = kLeftArmElev; c <= kRightHand; ++c) {
        const double range = channels[c].max - channels[c].min;
        const double a1 = 0.01 * range * unit(rng), a2 = 0.01 * range * unit(rng);
        const double p1 = 2 * kPi * unit(rng), p2 = 2 * kPi * unit(rng);
        const double f1 = 0.05 + 0.1 * unit(rng), f2 = 0.15 + 0.1 * unit(rng);
        for (int t = 0; t < step.duration; ++t) {
          block(t, c) += a1 * std::sin(f1 * t + p1) + a2 * std::sin(f2 * t + p2);
        }
      }
    }
    for (int c = 0; c < kNumChannels; ++c) {
      block.col(c) = block.col(c).cwiseMax(channels[c].min).cwiseMin(channels[c].max);
    }
    motion.frames.middleRows(start, step.duration) = block;
    motion.segments.push_back({static_cast<int>(step.action), start, start + step.duration});
    start += step.duration;
  }
  motion.frames.col(kReserved0).setZero();
  motion.frames.col(kReserved1).setZero();
  return motion;
}

constexpr std::array<const char*, 4> kSubjects{"a person", "someone", "a man", "the person"};
constexpr std::array<const char*, 3> kConnectives{", then ", " and then ", ", "};

std::string direction_phrase(Direction d) {
  switch (d) {
    case Direction::forward: return "forward";
    case Direction::backward: return "backward";
    case Direction::left: return "to the left";
    case Direction::right: return "to the right";
    case Direction::none: return "";
  }
  return "";
}

std::string action_phrase(const ActionStep& s, bool possessive) {
  const std::string det = possessive ? "his" : "the";
  const std::string side(to_string(s.side));
  std::string p;
  switch (s.action) {
    case Action::walk: p = "walks"; break;
    case Action::run: p = "runs"; break;
    case Action::turn: p = "turns"; break;
    case Action::raise_arm: p = "raises " + det + " " + side + " arm"; break;
    case Action::lower_arm: p = "lowers " + det + " arms"; break;
    case Action::wave: p = "waves " + det + " " + side + " hand"; break;
    case Action::jump: p = "jumps"; break;
    case Action::sit: p = "sits down"; break;
    case Action::stand: p = "stands up"; break;
    case Action::crouch: p = "crouches"; break;
    case Action::clap: p = "claps"; break;
    case Action::kick: p = "kicks with " + det + " " + side + " foot"; break;
  }
  if (s.action == Action::turn) {
    if (s.direction == Direction::left) p += " left";
    if (s.direction == Direction::right) p += " right";
  } else if (action_takes_direction(s.action) && s.direction != Direction::none) {
    p += " " + direction_phrase(s.direction);
  }
  if (s.speed == Speed::slowly) p += " slowly";
  if (s.speed == Speed::quickly) p += " quickly";
  return p;
}

}  // namespace

MotionSequence synthesize_motion(const ActionScript& script, std::uint64_t seed) {
  return synthesize_impl(script, seed, true);
}

MotionSequence synthesize_reference(const ActionScript& script) {
  return synthesize_impl(script, 0, false);
}

RenderedText render_text_spans(const ActionScript& script, std::uint64_t template_seed) {
  std::mt19937_64 rng(template_seed * 0x9E3779B97F4A7C15ULL + 1);
  std::uniform_int_distribution<int> conn(0, static_cast<int>(kConnectives.size()) - 1);
  std::uniform_int_distribution<int> coin(0, 1);
  RenderedText out;
  std::string text = std::string(kSubjects[template_seed % kSubjects.size()]) + ' ';
  for (std::size_t i = 0; i < script.steps.size(); ++i) {
    if (i > 0) text += kConnectives[static_cast<std::size_t>(conn(rng))];
    const int first = static_cast<int>(text::split_words(text).size());
    text += action_phrase(script.steps[i], coin(rng) == 1);
    out.step_words.emplace_back(first, static_cast<int>(text::split_words(text).size()));
  }
  out.text = std::move(text);
  return out;
}

std::string render_text(const ActionScript& script, std::uint64_t template_seed) {
  return render_text_spans(script, template_seed).text;
}

bool is_content_word(const std::string& word) {
  static const std::set<std::string> kFunction{
      "a", "person", "someone", "man", "the", "his", "and", "then", "to", ","};
  return !kFunction.count(word);
}

ActionScript ScriptSampler::sample(std::mt19937_64& rng) const {
  std::uniform_int_distribution<int> count(min_actions, max_actions);
  std::uniform_int_distribution<int> action(0, kNumActions - 1);
  std::uniform_int_distribution<int> side(0, 1);
  std::uniform_int_distribution<int> speed(0, 2);
  std::uniform_int_distribution<int> duration(min_duration, max_duration);
  ActionScript script;
  const int n = count(rng);
  for (int i = 0; i < n; ++i) {
    ActionStep s;
    s.action = static_cast<Action>(action(rng));
    if (action_needs_side(s.action)) s.side = static_cast<Side>(side(rng));
    if (s.action == Action::turn) {
      s.direction = side(rng) == 0 ? Direction::left : Direction::right;
    } else if (action_takes_direction(s.action)) {
      std::uniform_int_distribution<int> dir(0, 4);
      s.direction = static_cast<Direction>(dir(rng));
    }
    s.speed = static_cast<Speed>(speed(rng));
    s.duration = duration(rng);
    script.steps.push_back(s);
  }
  return script;
}

}  // namespace casim::data
