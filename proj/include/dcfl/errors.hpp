#pragma once

#include <stdexcept>
#include <string>

namespace dcfl {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define DCFL_DEFINE_ERROR(Name)                \
    class Name : public Error {                \
    public:                                    \
        using Error::Error;                    \
    };

DCFL_DEFINE_ERROR(ShapeError)
DCFL_DEFINE_ERROR(ArgumentError)
DCFL_DEFINE_ERROR(StateError)
DCFL_DEFINE_ERROR(FormatError)
DCFL_DEFINE_ERROR(IoError)
DCFL_DEFINE_ERROR(ConsistencyError)
DCFL_DEFINE_ERROR(PartitionError)
DCFL_DEFINE_ERROR(DegenerateInputError)
DCFL_DEFINE_ERROR(CondensationError)
DCFL_DEFINE_ERROR(NumericError)
DCFL_DEFINE_ERROR(PolicyError)
DCFL_DEFINE_ERROR(ProtocolError)
DCFL_DEFINE_ERROR(ConfigError)

#undef DCFL_DEFINE_ERROR

/// Config value that parsed but violates an invariant. `field()` names it.
class ValidationError : public Error {
public:
    ValidationError(std::string field, const std::string& what)
        : Error("invalid value for '" + field + "': " + what), field_(std::move(field)) {}
    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

}  // namespace dcfl
