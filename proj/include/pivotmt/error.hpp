#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pivotmt {

// Broad failure classes. The CLI maps them onto exit codes 1, 2 and 3.
enum class ErrorKind { Usage = 1, Data = 2, Numerical = 3 };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string name, const std::string& detail)
      : std::runtime_error(name + ": " + detail), kind_(kind), name_(std::move(name)) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& name() const noexcept { return name_; }

 private:
  ErrorKind kind_;
  std::string name_;
};

class ConfigParse : public Error {
 public:
  explicit ConfigParse(const std::string& detail) : Error(ErrorKind::Usage, "ConfigParse", detail) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& detail) : Error(ErrorKind::Data, "IoError", detail) {}
};

class LineCountMismatch : public Error {
 public:
  LineCountMismatch(std::size_t src_lines, std::size_t tgt_lines)
      : Error(ErrorKind::Data, "LineCountMismatch",
              std::to_string(src_lines) + " vs " + std::to_string(tgt_lines)),
        src_lines(src_lines),
        tgt_lines(tgt_lines) {}
  std::size_t src_lines;
  std::size_t tgt_lines;
};

class EncodingError : public Error {
 public:
  explicit EncodingError(std::size_t line_no)
      : Error(ErrorKind::Data, "EncodingError", "invalid UTF-8 on line " + std::to_string(line_no)),
        line_no(line_no) {}
  std::size_t line_no;
};

// Generic data-class error carrying a spec'd name (LanguageCollision, EmptyCorpus, ...).
class DataError : public Error {
 public:
  DataError(std::string name, const std::string& detail)
      : Error(ErrorKind::Data, std::move(name), detail) {}
};

class TargetTooSmall : public Error {
 public:
  explicit TargetTooSmall(std::size_t alphabet_size)
      : Error(ErrorKind::Data, "TargetTooSmall",
              "target vocabulary must exceed alphabet size " + std::to_string(alphabet_size)),
        alphabet_size(alphabet_size) {}
  std::size_t alphabet_size;
};

class NonFiniteLoss : public Error {
 public:
  NonFiniteLoss(int epoch, std::size_t step)
      : Error(ErrorKind::Numerical, "NonFiniteLoss",
              "epoch " + std::to_string(epoch) + ", step " + std::to_string(step)),
        epoch(epoch),
        step(step) {}
  int epoch;
  std::size_t step;
};

}  // namespace pivotmt
