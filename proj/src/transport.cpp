#include <httplib.h>

#include "ismell/backend.hpp"

namespace ismell::backend {

namespace {

class HttplibTransport : public Transport {
public:
    explicit HttplibTransport(const std::string& endpoint) {
        // Split "scheme://host[:port]/prefix" into the client base and the
        // path prefix prepended to every request path.
        std::size_t scheme = endpoint.find("://");
        std::size_t slash =
            endpoint.find('/', scheme == std::string::npos ? 0 : scheme + 3);
        if (slash == std::string::npos) {
            base_ = endpoint;
        } else {
            base_ = endpoint.substr(0, slash);
            prefix_ = endpoint.substr(slash);
            while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
        }
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
        if (base_.rfind("https://", 0) == 0) {
            tls_unavailable_ = true;
            return;
        }
#endif
        client_ = std::make_unique<httplib::Client>(base_);
        client_->set_connection_timeout(30);
        client_->set_read_timeout(120);
    }

    Result<HttpReply> post(const std::string& path, const std::vector<Header>& headers,
                           const std::string& body) override {
        if (tls_unavailable_) {
            return Error{Error::Kind::backend,
                         "https endpoint " + base_ + " but TLS support is not built in"};
        }
        httplib::Headers hs;
        std::string content_type = "application/json";
        for (const auto& [name, value] : headers) {
            if (name == "Content-Type") {
                content_type = value;
            } else {
                hs.emplace(name, value);
            }
        }
        auto res = client_->Post(prefix_ + path, hs, body, content_type);
        if (!res) {
            return Error{Error::Kind::backend,
                         std::string("transport: ") + httplib::to_string(res.error())};
        }
        return HttpReply{res->status, res->body};
    }

private:
    std::string base_;
    std::string prefix_;
    std::unique_ptr<httplib::Client> client_;
    bool tls_unavailable_ = false;
};

}  // namespace

std::unique_ptr<Transport> make_httplib_transport(const std::string& endpoint) {
    return std::make_unique<HttplibTransport>(endpoint);
}

}  // namespace ismell::backend
