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

// Small deterministic planar locomotion stand-ins with scripted experts,
// the locomotion/regularization reward library, and expert dataset
// generation into the unified padded format.

#ifndef UNIGAIT_ENVSIM_H_
#define UNIGAIT_ENVSIM_H_

#include <array>
#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "unigait/alignment.h"

namespace unigait {

enum class DynamicsKind {
  kPointMass2,       // Planar point mass, 2 forces. Point-foot biped stand-in.
  kUnicycle3,        // Two wheel torques plus a leg height actuator.
  kChain6,           // Planar base, yaw torque and a 3-joint gait chain.
  kPointMassBrake3,  // Planar point mass with a stance brake. Quadruped.
};

std::string KindName(DynamicsKind kind);
// Throws InputError for unknown names.
DynamicsKind KindFromName(const std::string& name);

// Names of every reward term, in breakdown order.
const std::vector<std::string>& RewardTermNames();

struct RewardBreakdown {
  // Unweighted term values and their coefficients, aligned with
  // RewardTermNames().
  std::vector<double> terms;
  std::vector<double> coefficients;
  double total = 0.0;

  double term(const std::string& name) const;
  double weighted(const std::string& name) const;
};

// Everything a reward term may read. Missing quantities stay zero.
struct RewardInputs {
  std::array<double, 2> lin_vel_des{};
  std::array<double, 2> lin_vel{};
  double ang_vel_des = 0.0;
  double ang_vel = 0.0;
  double base_height_des = 0.0;
  double base_height = 0.0;
  std::vector<double> orientation_des;
  std::vector<double> orientation;
  std::vector<double> torque;
  std::vector<double> joint_vel;
  std::vector<double> joint_acc;
  std::vector<double> joint_pos;
  std::vector<double> joint_pos_default;
  double lin_vel_z = 0.0;
  std::array<double, 2> ang_vel_xy{};
  // a_{k+1}, a_k, a_{k-1}; zeros at the start of an episode.
  std::vector<double> action;
  std::vector<double> action_prev;
  std::vector<double> action_prev2;
  std::vector<double> collision_forces;
  std::vector<double> contact_forces_left;
  std::vector<double> contact_forces_right;
  double contact_force_max = 0.0;
  double foot_distance = 0.0;
  double foot_distance_min = 0.0;
  std::vector<double> foot_height;
  std::vector<double> foot_height_des;
  std::vector<double> residual;
};

namespace reward {

double TrackingLinearVelocity(std::span<const double> des,
                              std::span<const double> actual, double sigma);
double TrackingAngularVelocity(double des, double actual, double sigma);
double BaseHeight(double des, double actual);
double Orientation(std::span<const double> des, std::span<const double> actual);
double JointTorque(std::span<const double> torque);
double Power(std::span<const double> torque, std::span<const double> joint_vel);
double JointVelocity(std::span<const double> joint_vel);
double JointAcceleration(std::span<const double> joint_acc);
double LinearVelocityZ(double v_z);
double AngularVelocityXy(std::span<const double> omega_xy);
double ActionSmoothness(std::span<const double> next, std::span<const double> cur,
                        std::span<const double> prev);
double ActionRate(std::span<const double> next, std::span<const double> cur);
double Collision(std::span<const double> collision_forces);
double ContactForce(std::span<const double> left, std::span<const double> right,
                    double force_max);
double DefaultJointPosition(std::span<const double> q,
                            std::span<const double> q_default);
double FootDistance(double distance, double distance_min);
double NominalFootHeight(std::span<const double> des,
                         std::span<const double> actual);
// L1 norm; the residual penalty is alpha times this.
double ResidualMagnitude(std::span<const double> residual);

}  // namespace reward

// Coefficient per term name; absent names weigh zero.
using RewardCoefficients = std::map<std::string, double>;

RewardBreakdown ComputeRewards(const RewardInputs& in,
                               const RewardCoefficients& coefficients,
                               double tracking_sigma);

struct Command {
  double vx = 0.0;
  double vy = 0.0;
  double wz = 0.0;

  std::vector<float> vec() const {
    return {static_cast<float>(vx), static_cast<float>(vy), static_cast<float>(wz)};
  }
  bool operator==(const Command&) const = default;
};

struct ToyEnvConfig {
  DynamicsKind kind = DynamicsKind::kPointMass2;
  int id = 0;
  std::string name;
  double dt = 0.02;
  double gait_period = 0.8;
  int max_steps = 1000;
  double divergence_bound = 100.0;
  double mass = 1.0;
  double damping = 0.5;
  double yaw_inertia = 0.5;
  double yaw_damping = 0.5;
  // Amplitude of the gait-synchronous body force.
  double gait_force = 0.5;
  // Chain joints and unicycle leg: spring stiffness, damping, inertia.
  double joint_stiffness = 4.0;
  double joint_damping = 0.4;
  double joint_inertia = 0.1;
  double joint_amplitude = 0.4;
  // Chain: propulsion efficiency 1 / (1 + coupling * |q - q_ref|^2).
  double gait_coupling = 5.0;
  double nominal_height = 0.5;
  double height_offset = 0.05;
  double turn_coupling = 0.2;
  double brake_damping = 1.5;
  double reset_noise = 0.05;
  std::array<double, 2> vx_range{-0.5, 1.0};
  std::array<double, 2> vy_range{-0.5, 0.5};
  std::array<double, 2> wz_range{-1.0, 1.0};
  double tracking_sigma = 4.0;
  // Weight of the residual L1 penalty (alpha); negative.
  double residual_alpha = -0.01;
  // Expert feedback gain in 1/s.
  double expert_gain = 10.0;
  RewardCoefficients coefficients;

  // Defaults for one of the four built-in embodiments (ids 0..3).
  static ToyEnvConfig Default(DynamicsKind kind, int id);
};

void to_json(nlohmann::json& j, const ToyEnvConfig& c);
// Starts from ToyEnvConfig::Default(kind, id) and overrides present keys.
void from_json(const nlohmann::json& j, ToyEnvConfig& c);

// The four built-in embodiments, ids 0..3.
std::vector<ToyEnvConfig> DefaultEmbodiments();

struct StepResult {
  std::vector<float> obs;
  RewardBreakdown reward;
  bool done = false;
  bool diverged = false;
};

class ToyEnv {
 public:
  explicit ToyEnv(ToyEnvConfig config);

  const ToyEnvConfig& config() const { return config_; }
  const EmbodimentSpec& spec() const { return spec_; }

  // Nominal state plus seeded perturbation; the command is sampled from the
  // configured ranges with the same seed.
  std::vector<float> Reset(std::uint64_t seed);
  std::vector<float> Reset(std::uint64_t seed, const Command& command);

  // A command drawn from the configured ranges.
  Command SampleCommand(std::mt19937_64& rng) const;
  // Replaces the command mid-episode; the state is untouched.
  void SetCommand(const Command& command) { command_ = command; }

  // Semi-implicit Euler step. `residual` only feeds the residual penalty.
  // Throws InputError on wrong length and NumericError on a NaN action.
  StepResult Step(std::span<const float> action,
                  std::span<const float> residual = {});

  std::vector<float> Observation() const;
  // Velocities and joint states, previous action, command, gait phase,
  // dynamics parameters and episode progress.
  std::vector<float> PrivilegedState() const;
  // Scripted controller for the current state; deterministic.
  std::vector<float> ExpertAction() const;

  const Command& command() const { return command_; }
  int steps() const { return steps_; }
  double time() const { return steps_ * config_.dt; }
  // Gait phase in [0, 1).
  double phase() const;
  bool done() const { return done_; }

  // Raw state access for tests.
  const std::vector<double>& state() const { return x_; }
  void set_state(std::vector<double> x) { x_ = std::move(x); }

 private:
  double GaitForce() const;
  std::vector<double> JointReference(double t) const;
  std::vector<double> JointReferenceVelocity(double t) const;
  std::vector<double> JointReferenceAcceleration(double t) const;
  double Efficiency() const;
  std::array<double, 2> BodyVelocity() const;
  double YawRate() const;

  ToyEnvConfig config_;
  EmbodimentSpec spec_;
  Command command_;
  std::vector<double> x_;
  std::vector<double> last_action_;
  std::vector<double> prev_action_;
  int steps_ = 0;
  bool done_ = false;
};

// Per-robot sample cap of the full-scale training setup.
inline constexpr int kPaperMaxSamplesPerRobot = 2048000;

struct DatasetOptions {
  int episodes = 4;
  int episode_steps = 1000;
  // Std of Gaussian noise added to executed expert actions, native units.
  double demo_noise = 0.0;
  // Record the expert's unperturbed action as the label while executing the
  // perturbed one, so the data covers recoveries from off-nominal states.
  bool clean_labels = true;
  // Redraw the command every this many steps within an episode so the data
  // contains transients; 0 keeps one command per episode.
  int command_interval = 0;
  // 0 keeps every segment.
  int max_samples = 0;
  int obs_horizon = kDefaultObsHorizon;
  int pred_horizon = kDefaultPredHorizon;
};

void to_json(nlohmann::json& j, const DatasetOptions& o);
void from_json(const nlohmann::json& j, DatasetOptions& o);

// Number of aligned (window, chunk) segments in an episode of `steps`
// actions: the window ends at observation t and the chunk starts at action t.
int SegmentCount(int steps, int obs_horizon, int pred_horizon);

// Expert rollouts for one embodiment sliced into native-dimension segments
// and padded to `dims`. Throws InputError if an episode is too short.
std::vector<UnifiedSample> GenerateSamples(const ToyEnvConfig& env,
                                           const DatasetOptions& options,
                                           const UnifiedDims& dims,
                                           std::uint64_t seed);

// Full multi-embodiment dataset with fitted NormStats. `counts` optionally
// fixes the sample count per embodiment (seeded subsample); empty keeps all.
UnifiedDataset GenerateDataset(const std::vector<ToyEnvConfig>& envs,
                               const DatasetOptions& options,
                               std::uint64_t seed,
                               const std::vector<int>& counts = {});

// Seeded subsample of `n` indices out of `total`, kept in ascending order.
std::vector<int> SubsampleIndices(int total, int n, std::mt19937_64& rng);

}  // namespace unigait

#endif  // UNIGAIT_ENVSIM_H_
