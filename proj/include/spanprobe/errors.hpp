#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace spanprobe {

/// Base of every error the library throws.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Filesystem failure; carries the offending path.
class IoError : public Error {
public:
  IoError(std::string path, const std::string& what)
      : Error(what + ": " + path), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

private:
  std::string path_;
};

/// Bad magic, unsupported version or dtype.
class FormatError : public Error {
public:
  using Error::Error;
};

/// Structurally broken file contents at a known byte offset.
class CorruptionError : public Error {
public:
  CorruptionError(std::uint64_t offset, const std::string& what)
      : Error(what + " at byte offset " + std::to_string(offset)), offset_(offset) {}
  std::uint64_t offset() const noexcept { return offset_; }

private:
  std::uint64_t offset_;
};

/// A record whose shape disagrees with its header.
class DimensionError : public Error {
public:
  DimensionError(std::size_t index, const std::string& what)
      : Error("record " + std::to_string(index) + ": " + what), index_(index) {}
  std::size_t index() const noexcept { return index_; }

private:
  std::size_t index_;
};

/// Invalid user data: malformed lines, bad spans, duplicate ids, empty classes.
class ValidationError : public Error {
public:
  using Error::Error;
};

/// Inconsistent run configuration.
class ConfigError : public Error {
public:
  using Error::Error;
};

/// Train/test id overlap.
class LeakageError : public Error {
public:
  using Error::Error;
};

/// Training diverged (non-finite loss).
class TrainingError : public Error {
public:
  TrainingError(std::size_t epoch, std::size_t batch, const std::string& what)
      : Error(what + " (epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch) + ")"),
        epoch_(epoch), batch_(batch) {}
  std::size_t epoch() const noexcept { return epoch_; }
  std::size_t batch() const noexcept { return batch_; }

private:
  std::size_t epoch_;
  std::size_t batch_;
};

}  // namespace spanprobe
