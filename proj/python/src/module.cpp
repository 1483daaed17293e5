// Python bindings. Documents cross the boundary as dicts, parameter
// vectors and images as numpy arrays.

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "reparamcad/constraints.hpp"
#include "reparamcad/csg.hpp"
#include "reparamcad/discovery.hpp"
#include "reparamcad/error.hpp"
#include "reparamcad/io.hpp"
#include "reparamcad/manipulation.hpp"
#include "reparamcad/raster.hpp"

namespace py = pybind11;
using namespace reparamcad;

namespace {

py::object to_python(const io::Json& doc) {
    return py::module_::import("json").attr("loads")(doc.dump());
}

io::Json from_python(const py::object& obj) {
    const std::string text = py::module_::import("json").attr("dumps")(obj).cast<std::string>();
    return io::parse(text, "<python>");
}

py::array_t<double> image_array(const raster::Image& img) {
    py::array_t<double> out({img.height, img.width});
    std::copy(img.pixels.begin(), img.pixels.end(), out.mutable_data());
    return out;
}

std::vector<raster::Camera> cameras_from(const py::object& cams, const csg::Model& model, const csg::ParamVector& x) {
    if (cams.is_none()) {
        return raster::sample_cameras(7, raster::kDefaultCameraCount, csg::bounding_box(model, x));
    }
    std::vector<raster::Camera> out;
    for (const auto& c : cams) out.push_back(io::camera_from_json(from_python(py::reinterpret_borrow<py::object>(c))));
    return out;
}

struct Variations {
    io::VariationDocument doc;
};

struct SpaceHandle {
    manipulation::ManipulationSpace space;
};

py::dict evaluation_dict(const manipulation::Evaluation& ev) {
    py::dict d;
    d["x"] = ev.x;
    d["present"] = ev.present;
    d["warnings"] = ev.warnings;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Constraint discovery and re-parameterization for CSG models";

    auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    auto invalid = py::register_exception<InvalidArgument>(m, "InvalidArgument", base.ptr());
    py::register_exception<DimensionMismatch>(m, "DimensionMismatch", invalid.ptr());
    py::register_exception<InfeasibleProjection>(m, "InfeasibleProjection", base.ptr());
    py::register_exception<ParseError>(m, "ParseError", base.ptr());

    py::class_<csg::Model>(m, "Model")
        .def_static("from_dict", [](const py::object& doc) { return io::model_from_json(from_python(doc)); })
        .def("to_dict", [](const csg::Model& model) { return to_python(io::model_to_json(model)); })
        .def_property_readonly("category", &csg::Model::category)
        .def_property_readonly("dimension", &csg::Model::dimension)
        .def_property_readonly("primitive_names",
                               [](const csg::Model& model) {
                                   std::vector<std::string> names;
                                   for (const auto& p : model.primitives()) names.push_back(p.name);
                                   return names;
                               })
        .def("param_name", &csg::Model::param_name)
        .def("flatten", [](const csg::Model& model) { return csg::flatten(model); })
        .def("unflatten", [](const csg::Model& model, const csg::ParamVector& x) { return csg::unflatten(model, x); })
        .def("content_hash", [](const csg::Model& model) { return io::content_hash(model); })
        .def("__len__", &csg::Model::size)
        .def("__repr__", [](const csg::Model& model) {
            return "<Model " + model.category() + " primitives=" + std::to_string(model.size()) +
                   " d=" + std::to_string(model.dimension()) + ">";
        });

    m.def("load_model", [](const std::string& path) { return io::load_model(path); }, py::arg("path"));

    m.def(
        "enumerate_candidates",
        [](const csg::Model& model, double eps_rel) {
            return to_python(io::pool_to_json(constraints::enumerate_candidates(model, csg::flatten(model), eps_rel)));
        },
        py::arg("model"), py::arg("eps_rel") = constraints::kDefaultEpsRel,
        "Candidate pool document for the model at its own parameters.");

    py::class_<Variations>(m, "VariationDocument")
        .def_property_readonly("labels", [](const Variations& v) { return v.doc.variations.labels; })
        .def_property_readonly("vectors", [](const Variations& v) { return v.doc.variations.vectors; })
        .def_property_readonly("provenance", [](const Variations& v) { return std::string(io::to_string(v.doc.provenance)); })
        .def_property_readonly("ground_truth_free_dimension",
                               [](const Variations& v) -> py::object {
                                   if (!v.doc.ground_truth) return py::none();
                                   return py::int_(v.doc.ground_truth->free_dimension);
                               })
        .def("to_dict", [](const Variations& v) { return to_python(io::variations_to_json(v.doc)); })
        .def("__len__", [](const Variations& v) { return v.doc.variations.size(); });

    m.def(
        "load_variations",
        [](const std::string& path, const csg::Model& model) { return Variations{io::load_variations(path, model)}; },
        py::arg("path"), py::arg("model"));

    py::class_<SpaceHandle>(m, "Space")
        .def_property_readonly("labels", [](const SpaceHandle& s) { return s.space.labels; })
        .def_property_readonly("free_names",
                               [](const SpaceHandle& s) {
                                   std::vector<std::string> names;
                                   for (std::size_t k = 0; k < s.space.free_count(); ++k) names.push_back(s.space.free_name(k));
                                   return names;
                               })
        .def_property_readonly("groups",
                               [](const SpaceHandle& s) {
                                   std::vector<std::vector<std::size_t>> out;
                                   for (const auto& g : s.space.groups) out.push_back(g.members);
                                   return out;
                               })
        .def_property_readonly("base", [](const SpaceHandle& s) { return s.space.base; })
        .def_property_readonly("lower", [](const SpaceHandle& s) { return s.space.lower; })
        .def_property_readonly("upper", [](const SpaceHandle& s) { return s.space.upper; })
        .def_property_readonly("model", [](const SpaceHandle& s) { return s.space.model; })
        .def(
            "evaluate",
            [](const SpaceHandle& s, const py::object& state) {
                if (state.is_none()) return evaluation_dict(manipulation::evaluate(s.space, manipulation::ManipulationState::rest(s.space)));
                return evaluation_dict(manipulation::evaluate(s.space, io::state_from_json(from_python(state), s.space)));
            },
            py::arg("state") = py::none(),
            "Evaluate a state dict with optional 'weights', 'offsets' and 'toggles'; None is the rest state.")
        .def("bounds_check",
             [](const SpaceHandle& s, const csg::ParamVector& x) {
                 const auto r = manipulation::bounds_check(s.space, x);
                 return py::make_tuple(r.ok, r.reason);
             })
        .def("to_dict", [](const SpaceHandle& s) { return to_python(io::space_to_json(s.space)); });

    m.def(
        "load_space",
        [](const std::string& path) { return SpaceHandle{io::space_from_json(io::read_document(path))}; },
        py::arg("path"));

    m.def(
        "discover",
        [](const csg::Model& model, const Variations& vars, double eps_rel, const std::string& aggregate,
           const std::string& projection, bool bounded) {
            discovery::DiscoveryConfig config;
            config.eps_rel = eps_rel;
            if (aggregate != "mean" && aggregate != "max") throw InvalidArgument("aggregate must be 'mean' or 'max'");
            config.aggregate = aggregate == "max" ? discovery::Aggregate::Max : discovery::Aggregate::Mean;
            config.projection = discovery::projection_from_string(projection);
            const auto x0 = csg::flatten(model);
            discovery::DiscoveryResult result;
            {
                py::gil_scoped_release release;
                result = discovery::discover(model, x0, vars.doc.variations, config);
            }
            const discovery::Projector projector(model, result.method, result.cameras, config.image_projection,
                                                 config.image_projection_size);
            SpaceHandle space{manipulation::build_space(model, x0, vars.doc.variations, result.rows, result.groups,
                                                        projector, bounded)};
            return py::make_tuple(std::move(space), to_python(io::trace_to_json(result, model)));
        },
        py::arg("model"), py::arg("variations"), py::arg("eps_rel") = constraints::kDefaultEpsRel,
        py::arg("aggregate") = "mean", py::arg("projection") = "auto", py::arg("bounded") = true,
        "Run discovery and return (space, trace dict).");

    m.def(
        "sample_cameras",
        [](const csg::Model& model, std::uint64_t seed, int count) {
            py::list out;
            for (const auto& c : raster::sample_cameras(seed, count, csg::bounding_box(model, csg::flatten(model)))) {
                out.append(to_python(io::camera_to_json(c)));
            }
            return out;
        },
        py::arg("model"), py::arg("seed") = 7, py::arg("count") = raster::kDefaultCameraCount);

    m.def(
        "render",
        [](const csg::Model& model, const py::object& x, const py::object& cameras, int size) {
            const csg::ParamVector params = x.is_none() ? csg::flatten(model) : x.cast<csg::ParamVector>();
            const auto cams = cameras_from(cameras, model, csg::flatten(model));
            std::vector<raster::RenderTarget> targets;
            {
                py::gil_scoped_release release;
                targets = raster::render_targets(model, params, cams, size);
            }
            py::list out;
            for (const auto& t : targets) out.append(image_array(t.image));
            return out;
        },
        py::arg("model"), py::arg("x") = py::none(), py::arg("cameras") = py::none(),
        py::arg("size") = raster::kDefaultImageSize, "Grayscale renders as (size, size) float arrays.");

    m.def(
        "tessellate",
        [](const csg::Model& model, const py::object& x, int segments) {
            const csg::ParamVector params = x.is_none() ? csg::flatten(model) : x.cast<csg::ParamVector>();
            const auto mesh = csg::tessellate(model, params, segments);
            py::array_t<double> v({static_cast<py::ssize_t>(mesh.vertices.size()), py::ssize_t{3}});
            py::array_t<std::uint32_t> f({static_cast<py::ssize_t>(mesh.triangles.size()), py::ssize_t{3}});
            auto vv = v.mutable_unchecked<2>();
            auto ff = f.mutable_unchecked<2>();
            for (std::size_t i = 0; i < mesh.vertices.size(); ++i)
                for (int k = 0; k < 3; ++k) vv(i, k) = mesh.vertices[i][k];
            for (std::size_t i = 0; i < mesh.triangles.size(); ++i)
                for (int k = 0; k < 3; ++k) ff(i, k) = mesh.triangles[i][k];
            return py::make_tuple(v, f);
        },
        py::arg("model"), py::arg("x") = py::none(), py::arg("segments") = csg::kDefaultSegments,
        "(vertices, triangles) arrays.");
}
