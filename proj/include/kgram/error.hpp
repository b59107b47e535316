#pragma once

#include <stdexcept>
#include <string>

namespace kgram {

enum class ErrorCode {
    dimension,         // shape mismatch between operands
    degenerate_input,  // zero variance / zero vector where a norm is required
    context,           // position lacks a full length-k history
    capacity,          // table or sequence exceeds configured limits
    contract,          // caller-supplied object violates its stated contract
    numeric,           // non-finite value encountered
    parse,             // malformed file or document
    config,            // bad CLI flags or config file
    io,                // filesystem failure
    inconclusive,      // verification had no defined positions to check
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
    throw Error(code, what);
}

}  // namespace kgram
