#pragma once

#include <stdexcept>
#include <string>

namespace geoemerge {

// Precondition or type invariant broken by the caller.
class ContractViolation : public std::logic_error {
public:
    explicit ContractViolation(const std::string& what) : std::logic_error(what) {}
};

// A reduction was asked to average over an empty set.
class EmptySupport : public std::runtime_error {
public:
    explicit EmptySupport(const std::string& what) : std::runtime_error(what) {}
};

class GenerationError : public std::runtime_error {
public:
    explicit GenerationError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite values reached the optimizer or a loss.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

class FormatError : public std::runtime_error {
public:
    explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

inline void require(bool condition, const std::string& message)
{
    if (!condition) throw ContractViolation(message);
}

} // namespace geoemerge
