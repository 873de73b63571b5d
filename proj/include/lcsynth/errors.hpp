#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lcsynth {

// Every failure the library raises derives from Error so the CLI can map it to
// a machine-readable record with a stable `kind`.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& message)
        : std::runtime_error(message), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

class ParameterError : public Error {
public:
    explicit ParameterError(const std::string& message) : Error("parameter", message) {}
};

class PreconditionError : public Error {
public:
    explicit PreconditionError(const std::string& message) : Error("precondition", message) {}
};

class StageSetupError : public Error {
public:
    StageSetupError(const std::string& message, std::size_t shortfall)
        : Error("stage_setup", message), shortfall_(shortfall) {}

    std::size_t shortfall() const noexcept { return shortfall_; }

private:
    std::size_t shortfall_;
};

/// Remote endpoint could not be reached or kept failing after all retries.
class TransportError : public Error {
public:
    TransportError(const std::string& message, int attempts, int last_status)
        : Error("transport", message), attempts_(attempts), last_status_(last_status) {}

    int attempts() const noexcept { return attempts_; }
    /// HTTP status of the last attempt, or -1 when no response arrived.
    int last_status() const noexcept { return last_status_; }

private:
    int attempts_;
    int last_status_;
};

/// A response arrived but violates the wire contract.
class ProtocolError : public Error {
public:
    explicit ProtocolError(const std::string& message) : Error("protocol", message) {}
};

class IndexError : public Error {
public:
    explicit IndexError(const std::string& message) : Error("index", message) {}
};

class NoPositiveError : public Error {
public:
    explicit NoPositiveError(const std::string& message) : Error("no_positive", message) {}
};

class AssemblyError : public Error {
public:
    explicit AssemblyError(const std::string& message) : Error("assembly", message) {}
};

class StageError : public Error {
public:
    StageError(const std::string& message, std::size_t skipped)
        : Error("stage", message), skipped_(skipped) {}

    std::size_t skipped() const noexcept { return skipped_; }

private:
    std::size_t skipped_;
};

class TrainerError : public Error {
public:
    explicit TrainerError(const std::string& message) : Error("trainer", message) {}
};

/// Model-dependent work requested against a snapshot that is not published yet.
class SnapshotVisibilityError : public Error {
public:
    explicit SnapshotVisibilityError(const std::string& message) : Error("snapshot_visibility", message) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& message) : Error("io", message) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& message) : Error("config", message) {}
};

}  // namespace lcsynth
