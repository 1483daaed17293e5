#pragma once

// Stateless HTTP front end over a loaded manipulation space.

#include <memory>
#include <string>

#include "reparamcad/manipulation.hpp"

namespace reparamcad::service {

struct Response {
    int status = 200;
    std::string body;
    std::string content_type = "application/json";
};

inline constexpr int kDefaultPort = 7878;

class Service {
public:
    explicit Service(manipulation::ManipulationSpace space, int segments = csg::kDefaultSegments);

    /// GET /space, POST /evaluate, GET /mesh/base. Safe to call concurrently.
    Response handle(const std::string& method, const std::string& path, const std::string& body) const;

    const manipulation::ManipulationSpace& space() const { return space_; }

private:
    Response space_info() const;
    Response evaluate(const std::string& body) const;
    Response base_mesh() const;

    manipulation::ManipulationSpace space_;
    int segments_;
};

/// cpp-httplib server routing every request through Service::handle.
class HttpServer {
public:
    explicit HttpServer(const Service& service);
    ~HttpServer();
    HttpServer(const HttpServer&) = delete;
    HttpServer& operator=(const HttpServer&) = delete;

    /// Binds host:port (0 picks a free port) and returns the bound port.
    int bind(const std::string& host, int port);
    /// Serves until stop(); call after bind().
    void run();
    /// Blocks until run() is accepting connections.
    void wait_until_ready() const;
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace reparamcad::service
