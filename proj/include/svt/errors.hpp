#pragma once

#include <stdexcept>
#include <string>

namespace svt {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class InvalidArchitecture : public Error {
 public:
  using Error::Error;
};

class InvalidDisturbance : public Error {
 public:
  using Error::Error;
};

class InvalidConfig : public Error {
 public:
  using Error::Error;
};

class ConvergenceError : public Error {
 public:
  using Error::Error;
};

class NotEnoughSamples : public Error {
 public:
  using Error::Error;
};

class MissingSources : public Error {
 public:
  using Error::Error;
};

class LayoutError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class TrainingDiverged : public Error {
 public:
  explicit TrainingDiverged(long step)
      : Error("training diverged (non-finite loss) at step " + std::to_string(step)),
        step_(step) {}
  long step() const { return step_; }

 private:
  long step_;
};

class SelectionError : public Error {
 public:
  SelectionError(int achieved, int wanted)
      : Error("only " + std::to_string(achieved) + " of " + std::to_string(wanted) +
              " mutually dissimilar tasks found"),
        achieved_(achieved) {}
  int achieved() const { return achieved_; }

 private:
  int achieved_;
};

}  // namespace svt
