#include "reparamcad/service.hpp"

#include <httplib.h>

#include "reparamcad/error.hpp"
#include "reparamcad/io.hpp"

namespace reparamcad::service {

namespace {

Response json_response(int status, const io::Json& doc) { return {status, doc.dump(), "application/json"}; }

Response error_response(int status, const std::string& message) {
    return json_response(status, io::Json{{"error", message}});
}

}  // namespace

Service::Service(manipulation::ManipulationSpace space, int segments) : space_(std::move(space)), segments_(segments) {
    if (static_cast<std::size_t>(space_.base.size()) != space_.model.dimension()) {
        throw DimensionMismatch("space base does not match its model");
    }
}

Response Service::handle(const std::string& method, const std::string& path, const std::string& body) const {
    const std::string route = path.substr(0, path.find('?'));
    try {
        if (method == "GET" && route == "/space") return space_info();
        if (method == "POST" && route == "/evaluate") return evaluate(body);
        if (method == "GET" && route == "/mesh/base") return base_mesh();
    } catch (const DimensionMismatch& e) {
        return error_response(422, e.what());
    } catch (const ParseError& e) {
        return error_response(400, e.what());
    } catch (const InvalidArgument& e) {
        return error_response(400, e.what());
    } catch (const std::exception& e) {
        return error_response(500, e.what());
    }
    return error_response(404, "no route for " + method + " " + route);
}

Response Service::space_info() const {
    io::Json doc;
    doc["category"] = space_.model.category();
    doc["dimension"] = space_.model.dimension();
    doc["method"] = discovery::to_string(space_.method);
    doc["bounded"] = space_.bounded;
    io::Json vars = io::Json::array();
    for (const auto& label : space_.labels) vars.push_back({{"label", label}, {"min", 0.0}, {"max", 1.0}});
    doc["variations"] = std::move(vars);
    io::Json free = io::Json::array();
    for (std::size_t k = 0; k < space_.free_count(); ++k) {
        const auto kk = static_cast<Eigen::Index>(k);
        io::Json j;
        j["name"] = space_.free_name(k);
        j["index"] = space_.subspace.free[k];
        j["base"] = space_.base_reduced[kk];
        // offsets are relative to the base value
        j["min"] = space_.lower[kk] - space_.base_reduced[kk];
        j["max"] = space_.upper[kk] - space_.base_reduced[kk];
        free.push_back(std::move(j));
    }
    doc["free"] = std::move(free);
    io::Json groups = io::Json::array();
    for (const auto& g : space_.groups) {
        io::Json names = io::Json::array();
        for (const std::size_t p : g.members) names.push_back(space_.model.primitive(p).name);
        groups.push_back({{"label", g.label}, {"members", std::move(names)}, {"default_on", g.default_on}});
    }
    doc["groups"] = std::move(groups);
    return json_response(200, doc);
}

namespace {

io::Json mesh_for(const manipulation::ManipulationSpace& space, const manipulation::Evaluation& ev, int segments) {
    const auto mask = std::make_unique<bool[]>(ev.present.size());
    std::copy(ev.present.begin(), ev.present.end(), mask.get());
    const auto mesh = csg::tessellate(space.model, ev.x, segments, {mask.get(), ev.present.size()});
    io::Json doc = io::mesh_to_json(mesh, space.model);
    for (auto& r : doc["ranges"]) {
        const std::size_t p = r["primitive"].get<std::size_t>();
        io::Json group = nullptr;
        for (std::size_t g = 0; g < space.groups.size(); ++g) {
            const auto& m = space.groups[g].members;
            if (std::find(m.begin(), m.end(), p) != m.end()) group = g;
        }
        r["group"] = group;
    }
    return doc;
}

}  // namespace

Response Service::evaluate(const std::string& body) const {
    io::Json request;
    try {
        request = io::Json::parse(body);
    } catch (const io::Json::parse_error& e) {
        return error_response(400, std::string("malformed state: ") + e.what());
    }
    const auto state = io::state_from_json(request, space_);
    const auto ev = manipulation::evaluate(space_, state);
    io::Json doc;
    io::Json params = io::Json::array();
    for (Eigen::Index i = 0; i < ev.x.size(); ++i) params.push_back(ev.x[i]);
    doc["params"] = std::move(params);
    doc["present"] = ev.present;
    doc["warnings"] = ev.warnings;
    doc["mesh"] = mesh_for(space_, ev, segments_);
    return json_response(200, doc);
}

Response Service::base_mesh() const {
    const auto ev = manipulation::evaluate(space_, manipulation::ManipulationState::rest(space_));
    return json_response(200, mesh_for(space_, ev, segments_));
}

struct HttpServer::Impl {
    const Service* service;
    httplib::Server server;
};

HttpServer::HttpServer(const Service& service) : impl_(std::make_unique<Impl>()) {
    impl_->service = &service;
    const auto route = [this](const httplib::Request& req, httplib::Response& res) {
        const Response r = impl_->service->handle(req.method, req.path, req.body);
        res.status = r.status;
        res.set_content(r.body, r.content_type);
    };
    impl_->server.Get(".*", route);
    impl_->server.Post(".*", route);
    impl_->server.Put(".*", route);
    impl_->server.Delete(".*", route);
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
    if (port == 0) {
        const int bound = impl_->server.bind_to_any_port(host);
        if (bound < 0) throw Error("cannot bind " + host);
        return bound;
    }
    if (!impl_->server.bind_to_port(host, port)) throw Error("cannot bind " + host + ":" + std::to_string(port));
    return port;
}

void HttpServer::run() {
    if (!impl_->server.listen_after_bind()) throw Error("server stopped with an error");
}

void HttpServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

void HttpServer::stop() {
    if (impl_->server.is_running()) impl_->server.stop();
}

}  // namespace reparamcad::service
