// Copyright 2026 The unigait Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "unigait/envsim.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <utility>

#include "unigait/error.h"

namespace unigait {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double SquaredNorm(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return s;
}

// Element i of x, or 0 past its end, so missing inputs read as zeros.
double At(std::span<const double> x, size_t i) {
  return i < x.size() ? x[i] : 0.0;
}

double DiffNorm(std::span<const double> a, std::span<const double> b) {
  size_t n = std::max(a.size(), b.size());
  double s = 0.0;
  for (size_t i = 0; i < n; ++i) {
    double d = At(a, i) - At(b, i);
    s += d * d;
  }
  return std::sqrt(s);
}

int ActionDim(DynamicsKind kind) {
  switch (kind) {
    case DynamicsKind::kPointMass2: return 2;
    case DynamicsKind::kUnicycle3: return 3;
    case DynamicsKind::kChain6: return 6;
    case DynamicsKind::kPointMassBrake3: return 3;
  }
  return 0;
}

int ObsDim(DynamicsKind kind) {
  switch (kind) {
    case DynamicsKind::kPointMass2: return 6;
    case DynamicsKind::kUnicycle3: return 7;
    case DynamicsKind::kChain6: return 17;
    case DynamicsKind::kPointMassBrake3: return 7;
  }
  return 0;
}

int StateDim(DynamicsKind kind) {
  switch (kind) {
    case DynamicsKind::kPointMass2: return 4;       // px py vx vy
    case DynamicsKind::kUnicycle3: return 5;        // yaw u w h hdot
    case DynamicsKind::kChain6: return 12;          // px py vx vy yaw w q3 qd3
    case DynamicsKind::kPointMassBrake3: return 4;  // px py vx vy
  }
  return 0;
}

bool HasGait(DynamicsKind kind) { return kind != DynamicsKind::kUnicycle3; }

// State entries the critic sees. Planar position and heading are left out:
// the dynamics and rewards are invariant to them.
std::vector<int> DynamicStateIndices(DynamicsKind kind) {
  switch (kind) {
    case DynamicsKind::kPointMass2:
    case DynamicsKind::kPointMassBrake3:
      return {2, 3};
    case DynamicsKind::kUnicycle3:
      return {1, 2, 3, 4};
    case DynamicsKind::kChain6:
      return {2, 3, 5, 6, 7, 8, 9, 10, 11};
  }
  return {};
}

// Extra privileged entries: command (3), gait sin/cos (2), mass, damping and
// episode progress.
constexpr int kPrivilegedExtra = 8;

}  // namespace

std::string KindName(DynamicsKind kind) {
  switch (kind) {
    case DynamicsKind::kPointMass2: return "point-mass-2";
    case DynamicsKind::kUnicycle3: return "unicycle-3";
    case DynamicsKind::kChain6: return "chain-6";
    case DynamicsKind::kPointMassBrake3: return "point-mass-brake-3";
  }
  return "";
}

DynamicsKind KindFromName(const std::string& name) {
  for (auto k : {DynamicsKind::kPointMass2, DynamicsKind::kUnicycle3,
                 DynamicsKind::kChain6, DynamicsKind::kPointMassBrake3}) {
    if (KindName(k) == name) return k;
  }
  throw InputError("unknown dynamics kind '" + name + "'");
}

const std::vector<std::string>& RewardTermNames() {
  static const std::vector<std::string> names = {
      "tracking_lin_vel", "tracking_ang_vel", "base_height",
      "orientation",      "joint_torque",     "power",
      "joint_vel",        "joint_acc",        "lin_vel_z",
      "ang_vel_xy",       "action_smoothness", "action_rate",
      "collision",        "contact_force",    "default_joint_pos",
      "foot_distance",    "nominal_foot_height", "residual",
  };
  return names;
}

namespace {

size_t TermIndex(const std::string& name) {
  const auto& names = RewardTermNames();
  auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw InputError("unknown reward term '" + name + "'");
  return static_cast<size_t>(it - names.begin());
}

}  // namespace

double RewardBreakdown::term(const std::string& name) const {
  return terms.at(TermIndex(name));
}

double RewardBreakdown::weighted(const std::string& name) const {
  size_t i = TermIndex(name);
  return coefficients.at(i) * terms.at(i);
}

namespace reward {

double TrackingLinearVelocity(std::span<const double> des,
                              std::span<const double> actual, double sigma) {
  return std::exp(-DiffNorm(des, actual) * sigma);
}

double TrackingAngularVelocity(double des, double actual, double sigma) {
  return std::exp(-std::abs(des - actual) * sigma);
}

double BaseHeight(double des, double actual) {
  return std::exp(-std::abs(des - actual) * 100.0);
}

double Orientation(std::span<const double> des, std::span<const double> actual) {
  return std::exp(-DiffNorm(des, actual) * 10.0);
}

double JointTorque(std::span<const double> torque) { return SquaredNorm(torque); }

double Power(std::span<const double> torque, std::span<const double> joint_vel) {
  double s = 0.0;
  for (size_t i = 0; i < torque.size(); ++i) s += torque[i] * At(joint_vel, i);
  return std::abs(s);
}

double JointVelocity(std::span<const double> joint_vel) {
  return SquaredNorm(joint_vel);
}

double JointAcceleration(std::span<const double> joint_acc) {
  return SquaredNorm(joint_acc);
}

double LinearVelocityZ(double v_z) { return v_z * v_z; }

double AngularVelocityXy(std::span<const double> omega_xy) {
  return SquaredNorm(omega_xy);
}

double ActionSmoothness(std::span<const double> next, std::span<const double> cur,
                        std::span<const double> prev) {
  size_t n = std::max({next.size(), cur.size(), prev.size()});
  double s = 0.0;
  for (size_t i = 0; i < n; ++i) {
    double d = At(next, i) + At(prev, i) - 2.0 * At(cur, i);
    s += d * d;
  }
  return s;
}

double ActionRate(std::span<const double> next, std::span<const double> cur) {
  double d = DiffNorm(next, cur);
  return d * d;
}

double Collision(std::span<const double> collision_forces) {
  return SquaredNorm(collision_forces) > 0.0 ? 1.0 : 0.0;
}

double ContactForce(std::span<const double> left, std::span<const double> right,
                    double force_max) {
  double excess = std::sqrt(SquaredNorm(left)) + std::sqrt(SquaredNorm(right)) -
                  force_max;
  return std::clamp(excess, 0.0, 400.0);
}

double DefaultJointPosition(std::span<const double> q,
                            std::span<const double> q_default) {
  return DiffNorm(q, q_default);
}

double FootDistance(double distance, double distance_min) {
  return std::max(0.0, distance_min - distance);
}

double NominalFootHeight(std::span<const double> des,
                         std::span<const double> actual) {
  double d = DiffNorm(des, actual);
  return std::exp(-d * d * 200.0);
}

double ResidualMagnitude(std::span<const double> residual) {
  double s = 0.0;
  for (double v : residual) s += std::abs(v);
  return s;
}

}  // namespace reward

RewardBreakdown ComputeRewards(const RewardInputs& in,
                               const RewardCoefficients& coefficients,
                               double tracking_sigma) {
  namespace r = reward;
  RewardBreakdown out;
  out.terms = {
      r::TrackingLinearVelocity(in.lin_vel_des, in.lin_vel, tracking_sigma),
      r::TrackingAngularVelocity(in.ang_vel_des, in.ang_vel, tracking_sigma),
      r::BaseHeight(in.base_height_des, in.base_height),
      r::Orientation(in.orientation_des, in.orientation),
      r::JointTorque(in.torque),
      r::Power(in.torque, in.joint_vel),
      r::JointVelocity(in.joint_vel),
      r::JointAcceleration(in.joint_acc),
      r::LinearVelocityZ(in.lin_vel_z),
      r::AngularVelocityXy(in.ang_vel_xy),
      r::ActionSmoothness(in.action, in.action_prev, in.action_prev2),
      r::ActionRate(in.action, in.action_prev),
      r::Collision(in.collision_forces),
      r::ContactForce(in.contact_forces_left, in.contact_forces_right,
                      in.contact_force_max),
      r::DefaultJointPosition(in.joint_pos, in.joint_pos_default),
      r::FootDistance(in.foot_distance, in.foot_distance_min),
      r::NominalFootHeight(in.foot_height_des, in.foot_height),
      r::ResidualMagnitude(in.residual),
  };
  const auto& names = RewardTermNames();
  out.coefficients.assign(names.size(), 0.0);
  for (const auto& [name, c] : coefficients) out.coefficients[TermIndex(name)] = c;
  for (size_t i = 0; i < names.size(); ++i) {
    out.total += out.coefficients[i] * out.terms[i];
  }
  return out;
}

ToyEnvConfig ToyEnvConfig::Default(DynamicsKind kind, int id) {
  ToyEnvConfig c;
  c.kind = kind;
  c.id = id;
  // Quadruped column; effort penalties scaled by 100 for unit-scale forces.
  c.coefficients = {
      {"tracking_lin_vel", 6.0}, {"joint_torque", -0.02},
      {"action_smoothness", -0.02}, {"action_rate", -0.02},
      {"collision", -10.0}, {"residual", c.residual_alpha},
  };
  switch (kind) {
    case DynamicsKind::kPointMass2:
      c.name = "point_foot_biped";
      c.wz_range = {0.0, 0.0};
      c.coefficients["power"] = -0.05;
      break;
    case DynamicsKind::kUnicycle3:
      c.name = "wheeled_biped";
      c.vy_range = {0.0, 0.0};
      c.gait_force = 0.0;
      c.joint_stiffness = 20.0;
      c.joint_damping = 2.0;
      c.joint_inertia = 2.0;
      c.coefficients["tracking_ang_vel"] = 5.0;
      c.coefficients["base_height"] = 6.0;
      c.coefficients["lin_vel_z"] = -2.0;
      c.coefficients["power"] = -0.05;
      break;
    case DynamicsKind::kChain6:
      c.name = "humanoid";
      c.mass = 1.5;
      c.joint_stiffness = 2.0;
      c.joint_damping = 0.2;
      c.joint_inertia = 0.05;
      c.coefficients["tracking_ang_vel"] = 5.0;
      c.coefficients["joint_acc"] = -2.5e-5;
      c.coefficients["default_joint_pos"] = -2.0;
      break;
    case DynamicsKind::kPointMassBrake3:
      c.name = "quadruped";
      c.mass = 2.0;
      c.wz_range = {0.0, 0.0};
      c.gait_force = 0.8;
      c.coefficients["power"] = -0.05;
      break;
  }
  return c;
}

std::vector<ToyEnvConfig> DefaultEmbodiments() {
  return {
      ToyEnvConfig::Default(DynamicsKind::kPointMass2, 0),
      ToyEnvConfig::Default(DynamicsKind::kUnicycle3, 1),
      ToyEnvConfig::Default(DynamicsKind::kChain6, 2),
      ToyEnvConfig::Default(DynamicsKind::kPointMassBrake3, 3),
  };
}

void to_json(nlohmann::json& j, const ToyEnvConfig& c) {
  j = nlohmann::json{
      {"kind", KindName(c.kind)},
      {"id", c.id},
      {"name", c.name},
      {"dt", c.dt},
      {"gait_period", c.gait_period},
      {"max_steps", c.max_steps},
      {"divergence_bound", c.divergence_bound},
      {"mass", c.mass},
      {"damping", c.damping},
      {"yaw_inertia", c.yaw_inertia},
      {"yaw_damping", c.yaw_damping},
      {"gait_force", c.gait_force},
      {"joint_stiffness", c.joint_stiffness},
      {"joint_damping", c.joint_damping},
      {"joint_inertia", c.joint_inertia},
      {"joint_amplitude", c.joint_amplitude},
      {"gait_coupling", c.gait_coupling},
      {"nominal_height", c.nominal_height},
      {"height_offset", c.height_offset},
      {"turn_coupling", c.turn_coupling},
      {"brake_damping", c.brake_damping},
      {"reset_noise", c.reset_noise},
      {"vx_range", c.vx_range},
      {"vy_range", c.vy_range},
      {"wz_range", c.wz_range},
      {"tracking_sigma", c.tracking_sigma},
      {"residual_alpha", c.residual_alpha},
      {"expert_gain", c.expert_gain},
      {"coefficients", c.coefficients},
  };
}

void from_json(const nlohmann::json& j, ToyEnvConfig& c) {
  DynamicsKind kind = KindFromName(j.at("kind").get<std::string>());
  c = ToyEnvConfig::Default(kind, j.value("id", 0));
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("name", c.name);
  get("dt", c.dt);
  get("gait_period", c.gait_period);
  get("max_steps", c.max_steps);
  get("divergence_bound", c.divergence_bound);
  get("mass", c.mass);
  get("damping", c.damping);
  get("yaw_inertia", c.yaw_inertia);
  get("yaw_damping", c.yaw_damping);
  get("gait_force", c.gait_force);
  get("joint_stiffness", c.joint_stiffness);
  get("joint_damping", c.joint_damping);
  get("joint_inertia", c.joint_inertia);
  get("joint_amplitude", c.joint_amplitude);
  get("gait_coupling", c.gait_coupling);
  get("nominal_height", c.nominal_height);
  get("height_offset", c.height_offset);
  get("turn_coupling", c.turn_coupling);
  get("brake_damping", c.brake_damping);
  get("reset_noise", c.reset_noise);
  get("vx_range", c.vx_range);
  get("vy_range", c.vy_range);
  get("wz_range", c.wz_range);
  get("tracking_sigma", c.tracking_sigma);
  get("expert_gain", c.expert_gain);
  if (j.contains("residual_alpha")) {
    j.at("residual_alpha").get_to(c.residual_alpha);
    c.coefficients["residual"] = c.residual_alpha;
  }
  if (j.contains("coefficients")) {
    for (const auto& [name, value] : j.at("coefficients").items()) {
      TermIndex(name);
      c.coefficients[name] = value.get<double>();
    }
  }
  if (c.dt <= 0.0 || c.max_steps <= 0 || c.mass <= 0.0 || c.gait_period <= 0.0) {
    throw InputError("env '" + c.name + "': dt, max_steps, mass and gait_period must be positive");
  }
}

ToyEnv::ToyEnv(ToyEnvConfig config) : config_(std::move(config)) {
  spec_.id = config_.id;
  spec_.name = config_.name;
  spec_.obs_dim = ObsDim(config_.kind);
  spec_.action_dim = ActionDim(config_.kind);
  spec_.command_dim = kCommandDim;
  spec_.privileged_dim = static_cast<int>(DynamicStateIndices(config_.kind).size()) +
                        spec_.action_dim + kPrivilegedExtra;
  x_.assign(StateDim(config_.kind), 0.0);
  last_action_.assign(spec_.action_dim, 0.0);
  prev_action_.assign(spec_.action_dim, 0.0);
}

double ToyEnv::phase() const {
  double p = std::fmod(time(), config_.gait_period) / config_.gait_period;
  return p >= 1.0 ? 0.0 : p;
}

double ToyEnv::GaitForce() const {
  return config_.gait_force * std::sin(kTwoPi * phase());
}

std::vector<double> ToyEnv::JointReference(double t) const {
  std::vector<double> q(3);
  for (int j = 0; j < 3; ++j) {
    q[j] = config_.joint_amplitude *
           std::sin(kTwoPi * t / config_.gait_period + kTwoPi * j / 3.0);
  }
  return q;
}

std::vector<double> ToyEnv::JointReferenceVelocity(double t) const {
  double w = kTwoPi / config_.gait_period;
  std::vector<double> qd(3);
  for (int j = 0; j < 3; ++j) {
    qd[j] = config_.joint_amplitude * w * std::cos(w * t + kTwoPi * j / 3.0);
  }
  return qd;
}

std::vector<double> ToyEnv::JointReferenceAcceleration(double t) const {
  double w = kTwoPi / config_.gait_period;
  std::vector<double> qdd(3);
  for (int j = 0; j < 3; ++j) {
    qdd[j] = -config_.joint_amplitude * w * w * std::sin(w * t + kTwoPi * j / 3.0);
  }
  return qdd;
}

double ToyEnv::Efficiency() const {
  if (config_.kind != DynamicsKind::kChain6) return 1.0;
  auto ref = JointReference(time());
  double e = 0.0;
  for (int j = 0; j < 3; ++j) e += (x_[6 + j] - ref[j]) * (x_[6 + j] - ref[j]);
  return 1.0 / (1.0 + config_.gait_coupling * e);
}

std::array<double, 2> ToyEnv::BodyVelocity() const {
  if (config_.kind == DynamicsKind::kUnicycle3) return {x_[1], 0.0};
  return {x_[2], x_[3]};
}

double ToyEnv::YawRate() const {
  switch (config_.kind) {
    case DynamicsKind::kUnicycle3: return x_[2];
    case DynamicsKind::kChain6: return x_[5];
    default: return 0.0;
  }
}

Command ToyEnv::SampleCommand(std::mt19937_64& rng) const {
  auto draw = [&](const std::array<double, 2>& range) {
    if (range[0] == range[1]) return range[0];
    return std::uniform_real_distribution<double>(range[0], range[1])(rng);
  };
  Command cmd;
  cmd.vx = draw(config_.vx_range);
  cmd.vy = draw(config_.vy_range);
  cmd.wz = draw(config_.wz_range);
  return cmd;
}

std::vector<float> ToyEnv::Reset(std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x5bd1e9955bd1e995ULL);
  return Reset(seed, SampleCommand(rng));
}

std::vector<float> ToyEnv::Reset(std::uint64_t seed, const Command& command) {
  command_ = command;
  steps_ = 0;
  done_ = false;
  std::fill(last_action_.begin(), last_action_.end(), 0.0);
  std::fill(prev_action_.begin(), prev_action_.end(), 0.0);
  x_.assign(StateDim(config_.kind), 0.0);
  if (config_.kind == DynamicsKind::kUnicycle3) {
    x_[3] = config_.nominal_height + config_.height_offset;
  }
  if (config_.kind == DynamicsKind::kChain6) {
    auto q = JointReference(0.0);
    auto qd = JointReferenceVelocity(0.0);
    for (int j = 0; j < 3; ++j) {
      x_[6 + j] = q[j];
      x_[9 + j] = qd[j];
    }
  }
  if (config_.reset_noise > 0.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, config_.reset_noise);
    // Perturb velocities, height and joints; positions and yaw stay nominal.
    switch (config_.kind) {
      case DynamicsKind::kPointMass2:
      case DynamicsKind::kPointMassBrake3:
        x_[2] += n(rng);
        x_[3] += n(rng);
        break;
      case DynamicsKind::kUnicycle3:
        for (int i = 1; i < 5; ++i) x_[i] += (i == 3 ? 0.1 : 1.0) * n(rng);
        break;
      case DynamicsKind::kChain6:
        for (int i = 2; i < 12; ++i) {
          if (i != 4) x_[i] += n(rng);
        }
        break;
    }
  }
  return Observation();
}

std::vector<float> ToyEnv::Observation() const {
  std::vector<float> o;
  o.reserve(spec_.obs_dim);
  auto push = [&](double v) { o.push_back(static_cast<float>(v)); };
  switch (config_.kind) {
    case DynamicsKind::kPointMass2:
    case DynamicsKind::kPointMassBrake3:
      push(x_[2]);
      push(x_[3]);
      break;
    case DynamicsKind::kUnicycle3:
      push(x_[1]);
      push(x_[2]);
      push(x_[3] - config_.nominal_height);
      push(x_[4]);
      break;
    case DynamicsKind::kChain6:
      push(x_[2]);
      push(x_[3]);
      push(x_[5]);
      for (int i = 6; i < 12; ++i) push(x_[i]);
      break;
  }
  for (double a : last_action_) push(a);
  if (HasGait(config_.kind)) {
    push(std::sin(kTwoPi * phase()));
    push(std::cos(kTwoPi * phase()));
  }
  return o;
}

std::vector<float> ToyEnv::PrivilegedState() const {
  std::vector<float> p;
  p.reserve(spec_.privileged_dim);
  auto push = [&](double v) { p.push_back(static_cast<float>(v)); };
  for (int i : DynamicStateIndices(config_.kind)) {
    push(config_.kind == DynamicsKind::kUnicycle3 && i == 3 ? x_[i] - config_.nominal_height
                                                            : x_[i]);
  }
  for (double a : last_action_) push(a);
  for (float c : command_.vec()) p.push_back(c);
  push(std::sin(kTwoPi * phase()));
  push(std::cos(kTwoPi * phase()));
  push(config_.mass);
  push(config_.damping);
  push(static_cast<double>(steps_) / config_.max_steps);
  return p;
}

std::vector<float> ToyEnv::ExpertAction() const {
  const ToyEnvConfig& c = config_;
  const double k = c.expert_gain;
  std::vector<double> a(spec_.action_dim, 0.0);
  // Force that drives a damped body toward v_des at rate k and cancels the
  // gait-synchronous push along x.
  auto planar = [&](double vx, double vy, double extra_damping) {
    double d = c.damping + extra_damping;
    double fx = c.mass * k * (command_.vx - vx) + c.mass * d * vx - GaitForce();
    double fy = c.mass * k * (command_.vy - vy) + c.mass * d * vy;
    return std::array<double, 2>{fx, fy};
  };
  switch (c.kind) {
    case DynamicsKind::kPointMass2: {
      auto f = planar(x_[2], x_[3], 0.0);
      a[0] = f[0];
      a[1] = f[1];
      break;
    }
    case DynamicsKind::kPointMassBrake3: {
      double b = 0.5 + 0.5 * std::sin(kTwoPi * phase());
      auto f = planar(x_[2], x_[3], c.brake_damping * b);
      a[0] = f[0];
      a[1] = f[1];
      a[2] = b;
      break;
    }
    case DynamicsKind::kUnicycle3: {
      double u = x_[1], w = x_[2], h = x_[3], hd = x_[4];
      double sum = c.mass * k * (command_.vx - u) + c.mass * c.damping * u;
      double diff = c.yaw_inertia * k * (command_.wz - w) +
                    c.yaw_inertia * c.yaw_damping * w;
      a[0] = 0.5 * (sum - diff);
      a[1] = 0.5 * (sum + diff);
      double h_des = c.nominal_height + c.height_offset;
      a[2] = c.joint_stiffness * (h - c.nominal_height) + c.joint_damping * hd +
             c.turn_coupling * u * w +
             c.joint_inertia * (k * k * (h_des - h) - 2.0 * k * hd);
      break;
    }
    case DynamicsKind::kChain6: {
      double g = Efficiency();
      auto f = planar(x_[2], x_[3], 0.0);
      a[0] = f[0] / g;
      a[1] = f[1] / g;
      a[2] = c.yaw_inertia * k * (command_.wz - x_[5]) +
             c.yaw_inertia * c.yaw_damping * x_[5];
      // Joint targets one step ahead so the semi-implicit update lands on them.
      double t = time();
      auto q = JointReference(t);
      auto qd = JointReferenceVelocity(t);
      auto qdd = JointReferenceAcceleration(t);
      double kp = 4.0 * k * k, kd = 4.0 * k;
      for (int j = 0; j < 3; ++j) {
        double e = q[j] - x_[6 + j], ed = qd[j] - x_[9 + j];
        a[3 + j] = c.joint_inertia * (qdd[j] + kp * e + kd * ed) +
                   c.joint_stiffness * x_[6 + j] + c.joint_damping * x_[9 + j];
      }
      break;
    }
  }
  return std::vector<float>(a.begin(), a.end());
}

StepResult ToyEnv::Step(std::span<const float> action,
                        std::span<const float> residual) {
  if (static_cast<int>(action.size()) != spec_.action_dim) {
    throw InputError("env '" + config_.name + "': action length " +
                     std::to_string(action.size()) + " != " +
                     std::to_string(spec_.action_dim));
  }
  for (float v : action) {
    if (std::isnan(v)) throw NumericError("env '" + config_.name + "': NaN action");
  }
  const ToyEnvConfig& c = config_;
  const double dt = c.dt;
  std::vector<double> a(action.begin(), action.end());
  const double push = GaitForce();
  const double g = Efficiency();
  std::vector<double> joint_vel, joint_acc, joint_pos, joint_default, torque = a;
  double lin_vel_z = 0.0;

  switch (c.kind) {
    case DynamicsKind::kPointMass2:
    case DynamicsKind::kPointMassBrake3: {
      double d = c.damping;
      if (c.kind == DynamicsKind::kPointMassBrake3) {
        d += c.brake_damping * std::clamp(a[2], 0.0, 1.0);
        torque.resize(2);
      }
      x_[2] += dt * ((a[0] + push) / c.mass - d * x_[2]);
      x_[3] += dt * (a[1] / c.mass - d * x_[3]);
      x_[0] += dt * x_[2];
      x_[1] += dt * x_[3];
      joint_vel = {x_[2], x_[3]};
      break;
    }
    case DynamicsKind::kUnicycle3: {
      double u = x_[1], w = x_[2];
      double hdd = (a[2] - c.joint_stiffness * (x_[3] - c.nominal_height) -
                    c.joint_damping * x_[4] - c.turn_coupling * u * w) /
                   c.joint_inertia;
      x_[1] += dt * ((a[0] + a[1]) / c.mass - c.damping * u);
      x_[2] += dt * ((a[1] - a[0]) / c.yaw_inertia - c.yaw_damping * w);
      x_[4] += dt * hdd;
      x_[3] += dt * x_[4];
      x_[0] += dt * x_[2];
      joint_vel = {x_[1], x_[1], x_[4]};
      lin_vel_z = x_[4];
      break;
    }
    case DynamicsKind::kChain6: {
      x_[2] += dt * ((g * a[0] + push) / c.mass - c.damping * x_[2]);
      x_[3] += dt * (g * a[1] / c.mass - c.damping * x_[3]);
      x_[5] += dt * (a[2] / c.yaw_inertia - c.yaw_damping * x_[5]);
      x_[0] += dt * x_[2];
      x_[1] += dt * x_[3];
      x_[4] += dt * x_[5];
      joint_acc.resize(3);
      for (int j = 0; j < 3; ++j) {
        double qdd = (a[3 + j] - c.joint_stiffness * x_[6 + j] -
                      c.joint_damping * x_[9 + j]) /
                     c.joint_inertia;
        x_[9 + j] += dt * qdd;
        x_[6 + j] += dt * x_[9 + j];
        joint_acc[j] = qdd;
      }
      joint_vel = {x_[9], x_[10], x_[11]};
      torque = {a[3], a[4], a[5]};
      joint_pos = {x_[6], x_[7], x_[8]};
      break;
    }
  }
  ++steps_;
  if (c.kind == DynamicsKind::kChain6) joint_default = JointReference(time());

  RewardInputs in;
  in.lin_vel_des = {command_.vx, command_.vy};
  in.lin_vel = BodyVelocity();
  in.ang_vel_des = command_.wz;
  in.ang_vel = YawRate();
  if (c.kind == DynamicsKind::kUnicycle3) {
    in.base_height_des = c.nominal_height + c.height_offset;
    in.base_height = x_[3];
  }
  in.torque = torque;
  in.joint_vel = joint_vel;
  in.joint_acc = joint_acc;
  in.joint_pos = joint_pos;
  in.joint_pos_default = joint_default;
  in.lin_vel_z = lin_vel_z;
  in.action = a;
  in.action_prev = last_action_;
  in.action_prev2 = prev_action_;
  in.residual.assign(residual.begin(), residual.end());

  StepResult out;
  out.reward = ComputeRewards(in, c.coefficients, c.tracking_sigma);
  prev_action_ = last_action_;
  last_action_ = a;

  double speed = std::hypot(in.lin_vel[0], in.lin_vel[1]);
  bool finite = std::all_of(x_.begin(), x_.end(),
                            [](double v) { return std::isfinite(v); });
  out.diverged = !finite || speed > c.divergence_bound;
  out.done = out.diverged || steps_ >= c.max_steps;
  done_ = out.done;
  out.obs = Observation();
  return out;
}

void to_json(nlohmann::json& j, const DatasetOptions& o) {
  j = nlohmann::json{{"episodes", o.episodes},
                     {"episode_steps", o.episode_steps},
                     {"demo_noise", o.demo_noise},
                     {"clean_labels", o.clean_labels},
                     {"command_interval", o.command_interval},
                     {"max_samples", o.max_samples},
                     {"obs_horizon", o.obs_horizon},
                     {"pred_horizon", o.pred_horizon}};
}

void from_json(const nlohmann::json& j, DatasetOptions& o) {
  o = DatasetOptions{};
  o.episodes = j.value("episodes", o.episodes);
  o.episode_steps = j.value("episode_steps", o.episode_steps);
  o.demo_noise = j.value("demo_noise", o.demo_noise);
  o.clean_labels = j.value("clean_labels", o.clean_labels);
  o.command_interval = j.value("command_interval", o.command_interval);
  o.max_samples = j.value("max_samples", o.max_samples);
  o.obs_horizon = j.value("obs_horizon", o.obs_horizon);
  o.pred_horizon = j.value("pred_horizon", o.pred_horizon);
  if (o.episodes < 0 || o.max_samples < 0 || o.demo_noise < 0.0 || o.command_interval < 0) {
    throw InputError(
        "dataset options: episodes, max_samples, demo_noise and command_interval must be >= 0");
  }
}

int SegmentCount(int steps, int obs_horizon, int pred_horizon) {
  return std::max(0, steps - obs_horizon - pred_horizon + 2);
}

std::vector<int> SubsampleIndices(int total, int n, std::mt19937_64& rng) {
  std::vector<int> idx(total);
  std::iota(idx.begin(), idx.end(), 0);
  if (n >= total) return idx;
  // Partial Fisher-Yates; the leading n entries are a uniform subset.
  for (int i = 0; i < n; ++i) {
    std::uniform_int_distribution<int> pick(i, total - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::vector<UnifiedSample> GenerateSamples(const ToyEnvConfig& env_config,
                                           const DatasetOptions& options,
                                           const UnifiedDims& dims,
                                           std::uint64_t seed) {
  const int ho = options.obs_horizon, hp = options.pred_horizon;
  if (options.episode_steps < ho + hp - 1) {
    throw InputError("episode length " + std::to_string(options.episode_steps) +
                     " is shorter than obs horizon + pred horizon - 1 = " +
                     std::to_string(ho + hp - 1));
  }
  ToyEnv env(env_config);
  const EmbodimentSpec& spec = env.spec();
  std::mt19937_64 rng(seed);
  std::vector<UnifiedSample> samples;
  for (int e = 0; e < options.episodes; ++e) {
    std::uint64_t episode_seed = rng();
    std::mt19937_64 noise_rng(episode_seed ^ 0xa0761d6478bd642fULL);
    std::normal_distribution<float> noise(0.0f, static_cast<float>(options.demo_noise));
    // obs[t] is seen before action[t].
    std::vector<std::vector<float>> obs, act, cmds;
    obs.push_back(env.Reset(episode_seed));
    for (int t = 0; t < options.episode_steps; ++t) {
      if (options.command_interval > 0 && t > 0 && t % options.command_interval == 0) {
        env.SetCommand(env.SampleCommand(noise_rng));
      }
      cmds.push_back(env.command().vec());
      std::vector<float> label = env.ExpertAction();
      std::vector<float> a = label;
      if (options.demo_noise > 0.0) {
        for (float& v : a) v += noise(noise_rng);
      }
      StepResult r = env.Step(a);
      act.push_back(options.clean_labels ? std::move(label) : std::move(a));
      if (r.diverged) break;
      obs.push_back(std::move(r.obs));
    }
    const int steps = static_cast<int>(act.size());
    if (steps < ho + hp - 1) {
      throw InputError("env '" + spec.name + "': episode ended after " +
                       std::to_string(steps) + " steps, shorter than the horizons");
    }
    for (int t = ho - 1; t + hp <= steps; ++t) {
      UnifiedSample s;
      s.embodiment_id = spec.id;
      s.command = cmds[t];
      s.obs_window.reserve(static_cast<size_t>(ho) * dims.obs_dim);
      for (int k = t - ho + 1; k <= t; ++k) {
        auto padded = Pad(obs[k], dims.obs_dim);
        s.obs_window.insert(s.obs_window.end(), padded.begin(), padded.end());
      }
      s.action_chunk.reserve(static_cast<size_t>(hp) * dims.action_dim);
      for (int k = t; k < t + hp; ++k) {
        auto padded = Pad(act[k], dims.action_dim);
        s.action_chunk.insert(s.action_chunk.end(), padded.begin(), padded.end());
      }
      samples.push_back(std::move(s));
    }
  }
  if (options.max_samples > 0 &&
      static_cast<int>(samples.size()) > options.max_samples) {
    auto keep = SubsampleIndices(static_cast<int>(samples.size()),
                                 options.max_samples, rng);
    std::vector<UnifiedSample> kept;
    kept.reserve(keep.size());
    for (int i : keep) kept.push_back(std::move(samples[i]));
    samples = std::move(kept);
  }
  return samples;
}

UnifiedDataset GenerateDataset(const std::vector<ToyEnvConfig>& envs,
                               const DatasetOptions& options, std::uint64_t seed,
                               const std::vector<int>& counts) {
  if (!counts.empty() && counts.size() != envs.size()) {
    throw InputError("per-embodiment counts must match the number of envs");
  }
  UnifiedDataset ds;
  for (const auto& e : envs) ds.specs.push_back(ToyEnv(e).spec());
  ds.dims = ComputeUnifiedDims(ds.specs);
  ds.obs_horizon = options.obs_horizon;
  ds.pred_horizon = options.pred_horizon;
  ds.command_dim = kCommandDim;
  ds.seed = seed;
  std::mt19937_64 rng(seed);
  for (size_t i = 0; i < envs.size(); ++i) {
    std::uint64_t env_seed = rng();
    auto samples = GenerateSamples(envs[i], options, ds.dims, env_seed);
    if (!counts.empty()) {
      int n = counts[i];
      if (n > static_cast<int>(samples.size())) {
        throw InputError("env '" + envs[i].name + "': requested " +
                         std::to_string(n) + " samples but only " +
                         std::to_string(samples.size()) + " were generated");
      }
      std::mt19937_64 sub(env_seed ^ 0x2545f4914f6cdd1dULL);
      auto keep = SubsampleIndices(static_cast<int>(samples.size()), n, sub);
      std::vector<UnifiedSample> kept;
      kept.reserve(keep.size());
      for (int k : keep) kept.push_back(std::move(samples[k]));
      samples = std::move(kept);
    }
    for (auto& s : samples) ds.samples.push_back(std::move(s));
  }
  nlohmann::json env_json = envs;
  ds.metadata = {{"envs", env_json}, {"options", options}};
  if (!ds.samples.empty()) ds.stats = FitNormStats(ds);
  return ds;
}

}  // namespace unigait
