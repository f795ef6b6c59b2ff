#include "labelgraph/error.hpp"

namespace lg {

const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Format: return "format_error";
        case ErrorKind::Parameter: return "parameter_error";
        case ErrorKind::Validation: return "validation_error";
        case ErrorKind::Degenerate: return "degenerate_node";
        case ErrorKind::NotFound: return "not_found";
        case ErrorKind::Conflict: return "conflict";
        case ErrorKind::Integrity: return "integrity_error";
        case ErrorKind::Io: return "io_error";
    }
    return "error";
}

}  // namespace lg
