#pragma once

#include <stdexcept>
#include <string>

namespace hmore {

/// Base of every error raised by the library. `is_io()` separates filesystem
/// failures from validation failures so the CLI can map them to exit codes.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
    virtual bool is_io() const noexcept { return false; }
};

#define HMORE_DEFINE_ERROR(Name)                                   \
    class Name : public Error {                                    \
    public:                                                        \
        explicit Name(const std::string& what) : Error(what) {}    \
    };

HMORE_DEFINE_ERROR(InvalidArgument)
HMORE_DEFINE_ERROR(NonFiniteValue)
HMORE_DEFINE_ERROR(DimensionMismatch)
HMORE_DEFINE_ERROR(TopologyMismatch)
HMORE_DEFINE_ERROR(NoCandidates)
HMORE_DEFINE_ERROR(DegenerateConfiguration)
HMORE_DEFINE_ERROR(InsufficientHeadPoints)
HMORE_DEFINE_ERROR(EmptyPointSet)
HMORE_DEFINE_ERROR(EmptySubject)
HMORE_DEFINE_ERROR(SpecOutOfBounds)
HMORE_DEFINE_ERROR(BadMagic)
HMORE_DEFINE_ERROR(TruncatedFile)
HMORE_DEFINE_ERROR(SchemaError)
HMORE_DEFINE_ERROR(FormatError)

#undef HMORE_DEFINE_ERROR

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error(what) {}
    bool is_io() const noexcept override { return true; }
};

}  // namespace hmore
