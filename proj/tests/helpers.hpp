#pragma once

#include <string>

#include "reparamcad/csg.hpp"
#include "reparamcad/io.hpp"

#ifndef REPARAMCAD_DATA_DIR
#error "REPARAMCAD_DATA_DIR must be defined"
#endif

namespace testing {

inline std::string data_path(const std::string& rel) { return std::string(REPARAMCAD_DATA_DIR) + "/" + rel; }

inline reparamcad::csg::Model bundled(const std::string& name) {
    return reparamcad::io::load_model(data_path("models/" + name + ".model"));
}

inline reparamcad::csg::Primitive prim(reparamcad::csg::PrimitiveKind kind, std::string name, Eigen::Vector3d t,
                                       Eigen::Vector3d s, std::optional<double> r = {}) {
    reparamcad::csg::Primitive p;
    p.kind = kind;
    p.name = std::move(name);
    p.translation = t;
    p.scale = s;
    p.top_radius = r;
    return p;
}

inline reparamcad::csg::Primitive cube(std::string name, Eigen::Vector3d t, Eigen::Vector3d s) {
    return prim(reparamcad::csg::PrimitiveKind::Cube, std::move(name), t, s);
}

/// Two unit-ish boxes stacked on y, sharing x/z extents.
inline reparamcad::csg::Model tower() {
    using V = Eigen::Vector3d;
    return reparamcad::csg::Model({cube("base", V(0, 0.25, 0), V(1, 0.5, 1)), cube("top", V(0, 0.75, 0), V(1, 0.5, 1))},
                                  "tower");
}

}  // namespace testing
