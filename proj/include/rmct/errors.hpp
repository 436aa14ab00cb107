#pragma once

#include <stdexcept>

namespace rmct {

/// An operation was called on an object in the wrong state.
class InvalidState : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// A file could not be read, written or parsed.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace rmct
