#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hypochain {

/// Failure classes shared by the library, the CLI exit codes and the HTTP
/// status mapping.
enum class ErrorCode {
  kFormat,     // malformed input file or payload
  kContract,   // precondition or invariant violated by the caller
  kNotFound,   // unknown id
  kNotReady,   // dataset still loading or failed
  kBackend,    // LLM / RAG backend failure
  kTimeout,    // backend did not answer in time
};

std::string_view ErrorCodeName(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string message, std::string detail = {})
      : std::runtime_error(std::move(message)),
        code_(code),
        detail_(std::move(detail)) {}

  ErrorCode code() const { return code_; }
  const std::string& detail() const { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

/// Input-file diagnostics carry the 1-based line number of the offending row.
class FormatError : public Error {
 public:
  FormatError(std::string file, std::size_t line, const std::string& what)
      : Error(ErrorCode::kFormat,
              file + ":" + std::to_string(line) + ": " + what),
        file_(std::move(file)),
        line_(line) {}

  const std::string& file() const { return file_; }
  std::size_t line() const { return line_; }

 private:
  std::string file_;
  std::size_t line_;
};

/// A triplet or path references an entity id that is not loaded.
class DanglingIdError : public Error {
 public:
  explicit DanglingIdError(std::string id, const std::string& where = {})
      : Error(ErrorCode::kFormat,
              "dangling entity id \"" + id + "\"" +
                  (where.empty() ? "" : " at " + where)),
        id_(std::move(id)) {}

  const std::string& id() const { return id_; }

 private:
  std::string id_;
};

inline Error ContractError(std::string message, std::string detail = {}) {
  return Error(ErrorCode::kContract, std::move(message), std::move(detail));
}

inline Error NotFoundError(std::string message) {
  return Error(ErrorCode::kNotFound, std::move(message));
}

}  // namespace hypochain
