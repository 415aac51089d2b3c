#pragma once

#include "twsub/error.hpp"

#include <optional>

// Code of the twsub::Error thrown by f, or nullopt if f returns normally.
template <typename F>
std::optional<twsub::ErrorCode> error_code_of(F&& f) {
    try {
        f();
    } catch (const twsub::Error& e) {
        return e.code();
    }
    return std::nullopt;
}
