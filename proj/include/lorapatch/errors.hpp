#pragma once

#include <stdexcept>
#include <string>

namespace lorapatch {

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

struct TrainingDivergence : std::runtime_error {
  explicit TrainingDivergence(const std::string& msg) : std::runtime_error(msg) {}
};

struct InjectionError : std::runtime_error {
  explicit InjectionError(const std::string& msg) : std::runtime_error(msg) {}
};

struct AttackError : std::runtime_error {
  explicit AttackError(const std::string& msg) : std::runtime_error(msg) {}
};

// Patch container load failures carry a distinct code per failure class.
enum class PatchFileErrorCode { bad_magic, bad_version, bad_checksum, bad_layout, io };

struct PatchFileError : std::runtime_error {
  PatchFileErrorCode code;
  PatchFileError(PatchFileErrorCode c, const std::string& msg)
      : std::runtime_error(msg), code(c) {}
};

}  // namespace lorapatch
