#pragma once

#include <cstddef>
#include <functional>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include <ismell/backend.hpp>

namespace ismell::testing {

// Backend driven by a caller-supplied handler; every request is captured so
// tests can assert on exactly what a module sent.
class ScriptedBackend : public backend::ChatBackend {
public:
    using Handler =
        std::function<Result<backend::ChatResponse>(const backend::ChatRequest&)>;

    explicit ScriptedBackend(Handler handler) : handler_(std::move(handler)) {}

    Result<backend::ChatResponse> complete(const backend::ChatRequest& request) override {
        {
            std::lock_guard<std::mutex> lock(mutex_);
            requests_.push_back(request);
        }
        return handler_(request);
    }

    std::string name() const override { return "scripted"; }

    std::vector<backend::ChatRequest> requests() const {
        std::lock_guard<std::mutex> lock(mutex_);
        return requests_;
    }

    std::size_t call_count() const {
        std::lock_guard<std::mutex> lock(mutex_);
        return requests_.size();
    }

private:
    Handler handler_;
    mutable std::mutex mutex_;
    std::vector<backend::ChatRequest> requests_;
};

inline backend::ChatResponse text_response(std::string content) {
    backend::ChatResponse response;
    response.content = std::move(content);
    return response;
}

inline Result<backend::ChatResponse> ok_response(std::string content) {
    return Result<backend::ChatResponse>(text_response(std::move(content)));
}

inline Result<backend::ChatResponse> backend_failure(std::string message) {
    return Result<backend::ChatResponse>(Error{Error::Kind::backend, std::move(message)});
}

}  // namespace ismell::testing
