#include "hypochain/error.hpp"

namespace hypochain {

std::string_view ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kFormat:
      return "format_error";
    case ErrorCode::kContract:
      return "contract_violation";
    case ErrorCode::kNotFound:
      return "not_found";
    case ErrorCode::kNotReady:
      return "not_ready";
    case ErrorCode::kBackend:
      return "backend_error";
    case ErrorCode::kTimeout:
      return "timeout";
  }
  return "error";
}

}  // namespace hypochain
