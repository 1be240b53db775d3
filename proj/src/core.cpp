#include "kpz/core.hpp"

namespace kpz {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::parameter: return "parameter error";
    case ErrorKind::bounds: return "bounds error";
    case ErrorKind::unreachable: return "unreachable error";
    case ErrorKind::infeasible: return "infeasible error";
    case ErrorKind::range: return "range error";
    case ErrorKind::insufficient_data: return "insufficient data";
    case ErrorKind::replay: return "replay error";
    case ErrorKind::internal: return "internal error";
  }
  return "error";
}

void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace kpz
