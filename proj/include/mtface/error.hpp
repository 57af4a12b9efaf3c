#pragma once

#include <stdexcept>
#include <string>

namespace mtface {

enum class ErrorKind {
  InvalidInput,
  DegenerateInput,
  Configuration,
  Io,
  Data,
  Training,
  StageOrder,
  Integrity,
  BadMagic,
  BadVersion,
  CrcMismatch,
  Truncated,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Raised when a task loss goes non-finite; carries the task name.
class TrainingAbort : public Error {
 public:
  TrainingAbort(std::string task, const std::string& what)
      : Error(ErrorKind::Training, what), task_(std::move(task)) {}

  const std::string& task() const noexcept { return task_; }

 private:
  std::string task_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) throw Error(kind, what);
}

}  // namespace mtface
