#pragma once

#include <stdexcept>
#include <string>

namespace gpm {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Input text could not be parsed (device JSON, calibration CSV, workload files).
class FormatError : public Error {
public:
    using Error::Error;
};

// Parsed fine but violates a domain invariant.
class ValidationError : public Error {
public:
    using Error::Error;
};

class IngestError : public Error {
public:
    using Error::Error;
};

class UnsupportedDtypeError : public Error {
public:
    using Error::Error;
};

class UnsupportedInstructionError : public Error {
public:
    using Error::Error;
};

class FeatureUnsupportedError : public Error {
public:
    using Error::Error;
};

// A calibration lookup found nothing and the model has no fallback for the point.
class AbsentRecordError : public Error {
public:
    using Error::Error;
};

class UsageError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

} // namespace gpm
