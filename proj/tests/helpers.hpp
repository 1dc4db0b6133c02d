#pragma once

#include <filesystem>
#include <random>
#include <string>

#include <Eigen/Dense>

#include "clarify/core.hpp"

namespace clarify::test {

// One-step segment whose single state row is `state`.
inline SegmentPtr point_segment(int index, const Eigen::VectorXd& state, double true_return = 0.0) {
  auto s = std::make_shared<Segment>();
  s->id = {index, 0};
  s->states = state.transpose();
  s->actions = Eigen::MatrixXd::Zero(1, 1);
  s->true_return = true_return;
  s->source_episode = index;
  return s;
}

inline SegmentPtr valued_segment(int index, double value) {
  return point_segment(index, Eigen::VectorXd::Zero(1), value);
}

// `length` steps of the 1-D state `value` with a zero 1-D action.
inline SegmentPtr constant_segment(int index, int length, double value, double true_return = 0.0) {
  auto s = std::make_shared<Segment>();
  s->id = {index, 0};
  s->states = Eigen::MatrixXd::Constant(length, 1, value);
  s->actions = Eigen::MatrixXd::Zero(length, 1);
  s->true_return = true_return;
  s->source_episode = index;
  return s;
}

// Episode whose states are (t, 0) rows and whose rewards are `rewards`.
inline Episode ramp_episode(int length, double reward = 1.0) {
  Episode ep;
  ep.states = Eigen::MatrixXd::Zero(length, 2);
  for (int t = 0; t < length; ++t) ep.states(t, 0) = t;
  ep.actions = Eigen::MatrixXd::Ones(length, 1);
  ep.rewards = Eigen::VectorXd::Constant(length, reward);
  return ep;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("clarify-" + tag + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace clarify::test
