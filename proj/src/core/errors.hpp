#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace dp3d {

enum class Err {
    InvalidInput,
    InvalidConfig,
    Io,
    Format,
    DegenerateGeometry,
    InsufficientSupport,
    EmptyDataset,
    ArchMismatch,
    InvalidParams,
    InvalidCache,
    Divergence,
    EmptyDescriptorSet,
    InsufficientRank,
};

class Error : public std::runtime_error {
public:
    Error(Err code, std::string msg) : std::runtime_error(std::move(msg)), code_(code) {}
    Err code() const { return code_; }

private:
    Err code_;
};

[[noreturn]] inline void fail(Err code, const std::string& msg) {
    throw Error(code, msg);
}

inline const char* err_name(Err code) {
    switch (code) {
        case Err::InvalidInput: return "InvalidInput";
        case Err::InvalidConfig: return "InvalidConfig";
        case Err::Io: return "Io";
        case Err::Format: return "Format";
        case Err::DegenerateGeometry: return "DegenerateGeometry";
        case Err::InsufficientSupport: return "InsufficientSupport";
        case Err::EmptyDataset: return "EmptyDataset";
        case Err::ArchMismatch: return "ArchMismatch";
        case Err::InvalidParams: return "InvalidParams";
        case Err::InvalidCache: return "InvalidCache";
        case Err::Divergence: return "Divergence";
        case Err::EmptyDescriptorSet: return "EmptyDescriptorSet";
        case Err::InsufficientRank: return "InsufficientRank";
    }
    return "Unknown";
}

}  // namespace dp3d
