/// @file errors.hpp
/// @brief Exception hierarchy shared by every nlcomp module.
#pragma once

#include <stdexcept>
#include <string>

namespace nlcomp {

/// Root of all nlcomp errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A precondition or configuration value was rejected.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// A node or a jump target lies outside the stored lattice (grid plus halo).
class ReachError : public Error {
public:
    using Error::Error;
};

/// A candidate jet fails its one-sided second-order bound.
class JetBoundViolation : public Error {
public:
    JetBoundViolation(const std::string& what, double excess)
        : Error(what), excess_(excess) {}

    double excess() const noexcept { return excess_; }

private:
    double excess_;
};

/// The fixed-point iteration ran out of iterations.
class ConvergenceFailure : public Error {
public:
    ConvergenceFailure(const std::string& what, double last_residual)
        : Error(what), last_residual_(last_residual) {}

    double last_residual() const noexcept { return last_residual_; }

private:
    double last_residual_;
};

/// A verification clause failed. These are findings, not bugs.
class VerificationFailure : public Error {
public:
    VerificationFailure(int m, std::string clause, const std::string& detail)
        : Error("witness m=" + std::to_string(m) + " failed clause '" + clause +
                "': " + detail),
          m_(m), clause_(std::move(clause)) {}

    int index() const noexcept { return m_; }
    const std::string& clause() const noexcept { return clause_; }

private:
    int m_;
    std::string clause_;
};

}  // namespace nlcomp
