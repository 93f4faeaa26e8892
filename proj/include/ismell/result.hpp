#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace ismell {

struct Error {
    enum class Kind {
        io,
        parse,
        validation,
        backend,
        cassette_miss,
        structured_output,
        usage,
    };

    Kind kind = Kind::io;
    std::string message;
    // For structured-output failures: the raw replies that failed to parse.
    std::vector<std::string> raw_texts;
};

inline const char* error_kind_name(Error::Kind k) {
    switch (k) {
        case Error::Kind::io: return "io";
        case Error::Kind::parse: return "parse";
        case Error::Kind::validation: return "validation";
        case Error::Kind::backend: return "backend";
        case Error::Kind::cassette_miss: return "cassette-miss";
        case Error::Kind::structured_output: return "structured-output";
        case Error::Kind::usage: return "usage";
    }
    return "unknown";
}

// Minimal expected-like value-or-error carrier.
template <typename T>
class Result {
public:
    Result(T value) : state_(std::move(value)) {}  // NOLINT(google-explicit-constructor)
    Result(Error error) : state_(std::move(error)) {}  // NOLINT(google-explicit-constructor)

    bool ok() const { return std::holds_alternative<T>(state_); }
    explicit operator bool() const { return ok(); }

    T& value() {
        if (!ok()) throw std::runtime_error("Result::value on error: " + error().message);
        return std::get<T>(state_);
    }
    const T& value() const {
        if (!ok()) throw std::runtime_error("Result::value on error: " + error().message);
        return std::get<T>(state_);
    }

    const Error& error() const { return std::get<Error>(state_); }

    T value_or(T fallback) const { return ok() ? std::get<T>(state_) : std::move(fallback); }

private:
    std::variant<T, Error> state_;
};

}  // namespace ismell
