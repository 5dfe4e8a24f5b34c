#pragma once

#include <stdexcept>
#include <string>

namespace hybridtrain {

// Shape/composition problems: tensors that do not fit an operation.
class ShapeError : public std::runtime_error {
public:
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad arguments, malformed configs, out-of-range labels, ...
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite loss or gradients during training.
class DivergenceError : public std::runtime_error {
public:
    explicit DivergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

// On-disk container problems (bad magic, truncation, version mismatch).
class FormatError : public std::runtime_error {
public:
    explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace hybridtrain
