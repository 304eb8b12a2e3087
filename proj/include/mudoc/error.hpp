#pragma once

#include <stdexcept>
#include <string>

namespace mudoc {

enum class ErrorKind {
    Parse,
    Validation,
    Precondition,
    Ingest,
    Image,
    Index,
    Gateway,
    Protocol,
    NotFound,
    Condition,
    Busy,
    PayloadTooLarge,
};

const char* to_string(ErrorKind kind);

// Base of every error the library throws. The kind drives HTTP status mapping.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

#define MUDOC_DEFINE_ERROR(Name, Kind)                                         \
    class Name : public Error {                                                \
    public:                                                                    \
        explicit Name(const std::string& message) : Error(ErrorKind::Kind, message) {} \
    };

MUDOC_DEFINE_ERROR(ParseError, Parse)
MUDOC_DEFINE_ERROR(ValidationError, Validation)
MUDOC_DEFINE_ERROR(PreconditionError, Precondition)
MUDOC_DEFINE_ERROR(IngestError, Ingest)
MUDOC_DEFINE_ERROR(ImageError, Image)
MUDOC_DEFINE_ERROR(IndexError, Index)
MUDOC_DEFINE_ERROR(GatewayError, Gateway)
MUDOC_DEFINE_ERROR(ProtocolError, Protocol)
MUDOC_DEFINE_ERROR(NotFound, NotFound)
MUDOC_DEFINE_ERROR(ConditionError, Condition)
MUDOC_DEFINE_ERROR(BusyError, Busy)
MUDOC_DEFINE_ERROR(PayloadTooLarge, PayloadTooLarge)

#undef MUDOC_DEFINE_ERROR

}  // namespace mudoc
