#include "mudoc/error.hpp"

namespace mudoc {

const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Parse: return "ParseError";
        case ErrorKind::Validation: return "ValidationError";
        case ErrorKind::Precondition: return "PreconditionError";
        case ErrorKind::Ingest: return "IngestError";
        case ErrorKind::Image: return "ImageError";
        case ErrorKind::Index: return "IndexError";
        case ErrorKind::Gateway: return "GatewayError";
        case ErrorKind::Protocol: return "ProtocolError";
        case ErrorKind::NotFound: return "NotFound";
        case ErrorKind::Condition: return "ConditionError";
        case ErrorKind::Busy: return "BusyError";
        case ErrorKind::PayloadTooLarge: return "PayloadTooLarge";
    }
    return "Error";
}

}  // namespace mudoc
