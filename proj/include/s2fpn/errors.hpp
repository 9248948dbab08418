#pragma once

#include <stdexcept>
#include <string>

namespace s2fpn {

/// Base class of every error raised by the engine.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class CapacityError : public Error {
public:
    using Error::Error;
};

class IndexError : public Error {
public:
    using Error::Error;
};

class AssemblyError : public Error {
public:
    using Error::Error;
};

class InputError : public Error {
public:
    using Error::Error;
};

/// Raised when a backward pass is requested on a tape that no longer matches
/// the layer's parameters (or was never recorded).
class StateError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what, int epoch, int step)
        : Error(what), epoch_(epoch), step_(step)
    {
    }
    int epoch() const { return epoch_; }
    int step() const { return step_; }

private:
    int epoch_;
    int step_;
};

} // namespace s2fpn
