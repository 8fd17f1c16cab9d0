#pragma once

#include <stdexcept>
#include <string>

namespace srs {

/// Shape or geometry violation in a tensor operation.
class DimensionError : public std::runtime_error {
public:
    explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed corpus data: bad record, missing image, insufficient pool, ...
class CorpusError : public std::runtime_error {
public:
    explicit CorpusError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Numeric fault during training or evaluation (non-finite loss/gradient).
class TrainingFault : public std::runtime_error {
public:
    explicit TrainingFault(const std::string& msg) : std::runtime_error(msg) {}
};

/// File could not be read or written.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Bad command line or configuration.
class UsageError : public std::runtime_error {
public:
    explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace srs
