// reparamcad command-line front end.

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "reparamcad/discovery.hpp"
#include "reparamcad/error.hpp"
#include "reparamcad/io.hpp"
#include "reparamcad/manipulation.hpp"
#include "reparamcad/numeric.hpp"
#include "reparamcad/service.hpp"

namespace fs = std::filesystem;
using namespace reparamcad;

namespace {

std::string text_of(const io::Json& doc) { return io::dump(doc); }

void emit(const std::string& out, const std::string& text) {
    if (out.empty() || out == "-") {
        std::cout << text;
    } else {
        io::write_text(out, text);
    }
}

std::vector<std::size_t> parse_indices(const std::string& list) {
    std::vector<std::size_t> out;
    std::stringstream ss(list);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        std::size_t used = 0;
        const unsigned long v = std::stoul(item, &used);
        if (used != item.size()) throw InvalidArgument("bad index '" + item + "'");
        out.push_back(v);
    }
    return out;
}

// --params: a variation document entry (by label) or, when empty, the model's own parameters.
csg::ParamVector pick_params(const csg::Model& model, const std::string& vars_path, const std::string& label) {
    if (vars_path.empty()) return csg::flatten(model);
    const auto doc = io::load_variations(vars_path, model);
    for (std::size_t i = 0; i < doc.variations.size(); ++i) {
        if (label.empty() || doc.variations.labels[i] == label) return doc.variations.vectors[i];
    }
    throw InvalidArgument("no variation labelled '" + label + "'");
}

manipulation::ManipulationSpace load_space(const std::string& path) {
    return io::space_from_json(io::read_document(path));
}

service::HttpServer* g_server = nullptr;

void on_signal(int) {
    if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Constraint discovery and re-parameterization for CSG models"};
    app.require_subcommand(1);

    // enumerate
    auto* enumerate = app.add_subcommand("enumerate", "List candidate constraints that hold on the model");
    std::string model_path, out_path;
    double eps_rel = constraints::kDefaultEpsRel;
    enumerate->add_option("--model", model_path, "Model document")->required()->check(CLI::ExistingFile);
    enumerate->add_option("--eps-rel", eps_rel, "Tolerance relative to the bbox diagonal")
        ->check(CLI::PositiveNumber);
    enumerate->add_option("--out", out_path, "Output pool document (stdout if omitted)");

    // synth
    auto* synth = app.add_subcommand("synth", "Generate synthetic variations from a ground-truth constraint set");
    double sigma = 0.005, amplitude = 0.08;
    std::uint64_t seed = 1;
    std::size_t count = 6;
    std::string gt_list;
    synth->add_option("--model", model_path, "Model document")->required()->check(CLI::ExistingFile);
    synth->add_option("--sigma", sigma, "Noise, fraction of the bbox diagonal")->check(CLI::NonNegativeNumber);
    synth->add_option("--seed", seed, "Random seed");
    synth->add_option("--count", count, "Number of variations")->check(CLI::PositiveNumber);
    synth->add_option("--amplitude", amplitude, "Offset amplitude, fraction of the bbox diagonal")
        ->check(CLI::NonNegativeNumber);
    synth->add_option("--constraints", gt_list, "Comma-separated pool indices (default: whole pool)");
    synth->add_option("--eps-rel", eps_rel, "Pool tolerance")->check(CLI::PositiveNumber);
    synth->add_option("--out", out_path, "Output variation document");

    // fit
    auto* fit = app.add_subcommand("fit", "Fit model parameters to rendered or supplied images");
    std::vector<std::string> image_packs;
    std::string vars_path;
    int iterations = 30, cameras = raster::kDefaultCameraCount, size = raster::kDefaultImageSize;
    std::uint64_t camera_seed = 7;
    fit->add_option("--model", model_path, "Model document")->required()->check(CLI::ExistingFile);
    auto* images_opt = fit->add_option("--images", image_packs, "Render pack directories, one variation each");
    auto* fit_vars_opt = fit->add_option("--variations", vars_path, "Refit each variation from its own renders")
                             ->check(CLI::ExistingFile);
    images_opt->excludes(fit_vars_opt);
    fit->add_option("--iterations", iterations)->check(CLI::PositiveNumber);
    fit->add_option("--cameras", cameras)->check(CLI::PositiveNumber);
    fit->add_option("--camera-seed", camera_seed);
    fit->add_option("--size", size, "Render size for self-rendered targets")->check(CLI::Range(32, 1024));
    fit->add_option("--out", out_path, "Output variation document");

    // discover
    auto* discover = app.add_subcommand("discover", "Discover constraints and write the re-parameterized space");
    std::string trace_path, curve_path, aggregate = "mean", projection = "auto";
    std::size_t iou_samples = 200'000;
    bool unbounded = false;
    discover->add_option("--model", model_path, "Model document")->required()->check(CLI::ExistingFile);
    discover->add_option("--variations", vars_path, "Variation document")->required()->check(CLI::ExistingFile);
    discover->add_option("--out", out_path, "Output space document")->required();
    discover->add_option("--trace", trace_path, "Trace document (default: <out>.trace.json)");
    discover->add_option("--curve", curve_path, "Distortion table (default: <out>.curve.tsv)");
    discover->add_option("--eps-rel", eps_rel)->check(CLI::PositiveNumber);
    discover->add_option("--aggregate", aggregate)->check(CLI::IsMember({"mean", "max"}));
    discover->add_option("--projection", projection)->check(CLI::IsMember({"auto", "face_least_squares", "image_loss"}));
    discover->add_option("--iou-samples", iou_samples)->check(CLI::Range(std::size_t{1000}, std::size_t{100'000'000}));
    discover->add_option("--camera-seed", camera_seed);
    discover->add_option("--render-size", size)->check(CLI::Range(32, 1024));
    discover->add_flag("--unbounded-free", unbounded, "Do not bound the free-variable sliders");

    // reparam
    auto* reparam = app.add_subcommand("reparam", "Evaluate a manipulation state in a space document");
    std::string space_path, state_path, check_path;
    reparam->add_option("--space", space_path, "Space document")->required()->check(CLI::ExistingFile);
    reparam->add_option("--state", state_path, "State document (default: rest state)")->check(CLI::ExistingFile);
    reparam->add_option("--check", check_path, "Parameter vector document to bounds-check instead")
        ->check(CLI::ExistingFile);
    reparam->add_option("--out", out_path);

    // render
    auto* render = app.add_subcommand("render", "Render a model into a PNG pack");
    std::string label;
    render->add_option("--model", model_path, "Model document")->required()->check(CLI::ExistingFile);
    render->add_option("--variations", vars_path, "Render a variation instead of the model")
        ->check(CLI::ExistingFile);
    render->add_option("--label", label, "Variation label (default: first)");
    render->add_option("--cameras", cameras)->check(CLI::PositiveNumber);
    render->add_option("--camera-seed", camera_seed);
    render->add_option("--size", size)->check(CLI::Range(32, 2048));
    render->add_option("--out", out_path, "Output directory")->required();

    // export-mesh
    auto* export_mesh = app.add_subcommand("export-mesh", "Write an OBJ mesh");
    std::string state = "default";
    int segments = csg::kDefaultSegments;
    export_mesh->add_option("--model", model_path, "Model document")->check(CLI::ExistingFile);
    export_mesh->add_option("--space", space_path, "Space document")->check(CLI::ExistingFile);
    export_mesh->add_option("--state", state, "'default' or a state document (requires --space)");
    export_mesh->add_option("--segments", segments)->check(CLI::Range(8, 1024));
    export_mesh->add_option("--out", out_path, "Output OBJ (stdout if omitted)");

    // serve
    auto* serve = app.add_subcommand("serve", "Serve a space document over HTTP");
    int port = service::kDefaultPort;
    std::string host = "127.0.0.1";
    serve->add_option("--space", space_path, "Space document")->required()->check(CLI::ExistingFile);
    serve->add_option("--port", port)->check(CLI::Range(0, 65535));
    serve->add_option("--host", host);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*enumerate) {
            const auto model = io::load_model(model_path);
            const auto pool = constraints::enumerate_candidates(model, csg::flatten(model), eps_rel);
            emit(out_path, text_of(io::pool_to_json(pool)));
            std::cerr << pool.size() << " candidate constraints\n";
        } else if (*synth) {
            const auto model = io::load_model(model_path);
            const auto pool = constraints::enumerate_candidates(model, csg::flatten(model), eps_rel);
            io::SyntheticSpec spec;
            if (gt_list.empty()) {
                for (std::size_t i = 0; i < pool.size(); ++i) spec.constraint_indices.push_back(i);
            } else {
                spec.constraint_indices = parse_indices(gt_list);
            }
            std::vector<const constraints::SemanticConstraint*> gt;
            for (const std::size_t i : spec.constraint_indices) {
                if (i >= pool.size()) throw InvalidArgument("constraint index " + std::to_string(i) + " out of range");
                gt.push_back(&pool.constraints[i]);
            }
            const auto sub = numeric::nullspace(constraints::rows_of(gt, model.dimension()));
            spec.offsets = io::random_offsets(model, sub, count, amplitude, seed);
            spec.sigma = sigma;
            spec.seed = seed;
            emit(out_path, text_of(io::variations_to_json(io::synth_variations(model, pool, spec))));
        } else if (*fit) {
            if (image_packs.empty() && vars_path.empty()) throw CLI::RequiredError("--images or --variations");
            const auto model = io::load_model(model_path);
            const auto x0 = csg::flatten(model);
            numeric::FitOptions options;
            options.iterations = iterations;
            io::VariationDocument out;
            out.base_hash = io::content_hash(model);
            out.variations.base = x0;
            if (!image_packs.empty()) {
                out.provenance = io::Provenance::ExternalGenerator;
                for (const auto& pack : image_packs) {
                    const auto targets = io::load_render_pack(pack);
                    out.variations.add(fs::path(pack).filename().string(),
                                       numeric::fit_to_images(model, x0, targets, options));
                }
            } else {
                const auto input = io::load_variations(vars_path, model);
                out.provenance = input.provenance;
                const auto cams = raster::sample_cameras(camera_seed, cameras, csg::bounding_box(model, x0));
                for (std::size_t i = 0; i < input.variations.size(); ++i) {
                    const auto targets = raster::render_targets(model, input.variations.vectors[i], cams, size);
                    out.variations.add(input.variations.labels[i], numeric::fit_to_images(model, x0, targets, options));
                }
            }
            emit(out_path, text_of(io::variations_to_json(out)));
        } else if (*discover) {
            const auto model = io::load_model(model_path);
            const auto vars = io::load_variations(vars_path, model);
            discovery::DiscoveryConfig config;
            config.eps_rel = eps_rel;
            config.aggregate = aggregate == "max" ? discovery::Aggregate::Max : discovery::Aggregate::Mean;
            config.projection = discovery::projection_from_string(projection);
            config.iou_samples = iou_samples;
            config.camera_seed = camera_seed;
            if (discover->count("--render-size") > 0) config.render_size = size;
            const auto x0 = csg::flatten(model);
            const auto result = discovery::discover(model, x0, vars.variations, config);
            const discovery::Projector projector(model, result.method, result.cameras, config.image_projection,
                                                 config.image_projection_size);
            const auto space = manipulation::build_space(model, x0, vars.variations, result.rows, result.groups,
                                                         projector, !unbounded);
            io::write_text(out_path, text_of(io::space_to_json(space)));
            io::write_text(trace_path.empty() ? out_path + ".trace.json" : trace_path,
                           text_of(io::trace_to_json(result, model)));
            io::write_text(curve_path.empty() ? out_path + ".curve.tsv" : curve_path, io::curve_table(result));
            std::cerr << result.chosen.size() << " constraints kept of " << result.pool.size() << ", "
                      << space.free_count() << " free variables\n";
        } else if (*reparam) {
            const auto space = load_space(space_path);
            if (!check_path.empty()) {
                const io::Json doc = io::read_document(check_path);
                const io::Json& params = doc.is_object() && doc.contains("params") ? doc["params"] : doc;
                csg::ParamVector x(static_cast<Eigen::Index>(params.size()));
                for (std::size_t i = 0; i < params.size(); ++i) x[static_cast<Eigen::Index>(i)] = params[i].get<double>();
                const auto check = manipulation::bounds_check(space, x);
                emit(out_path, text_of(io::Json{{"ok", check.ok}, {"reason", check.reason}}));
                return check.ok ? 0 : 1;
            }
            const auto st = state_path.empty() ? manipulation::ManipulationState::rest(space)
                                               : io::state_from_json(io::read_document(state_path), space);
            const auto ev = manipulation::evaluate(space, st);
            io::Json doc;
            io::Json params = io::Json::array();
            for (Eigen::Index i = 0; i < ev.x.size(); ++i) params.push_back(ev.x[i]);
            doc["params"] = std::move(params);
            doc["present"] = ev.present;
            doc["warnings"] = ev.warnings;
            for (const auto& w : ev.warnings) std::cerr << "warning: " << w << "\n";
            emit(out_path, text_of(doc));
        } else if (*render) {
            const auto model = io::load_model(model_path);
            const auto x = pick_params(model, vars_path, label);
            const auto cams = raster::sample_cameras(camera_seed, cameras, csg::bounding_box(model, csg::flatten(model)));
            io::save_render_pack(out_path, raster::render_targets(model, x, cams, size));
        } else if (*export_mesh) {
            csg::TriangleMesh mesh;
            csg::Model model;
            if (!space_path.empty()) {
                const auto space = load_space(space_path);
                const auto st = state == "default" ? manipulation::ManipulationState::rest(space)
                                                   : io::state_from_json(io::read_document(state), space);
                const auto ev = manipulation::evaluate(space, st);
                const auto mask = std::make_unique<bool[]>(ev.present.size());
                std::copy(ev.present.begin(), ev.present.end(), mask.get());
                model = space.model;
                mesh = csg::tessellate(model, ev.x, segments, {mask.get(), ev.present.size()});
            } else {
                if (model_path.empty()) throw CLI::RequiredError("--model or --space");
                if (state != "default") throw CLI::ValidationError("--state", "a state document requires --space");
                model = io::load_model(model_path);
                mesh = csg::tessellate(model, csg::flatten(model), segments);
            }
            std::ostringstream obj;
            io::write_obj(obj, mesh, model);
            emit(out_path, obj.str());
        } else if (*serve) {
            const service::Service svc(load_space(space_path));
            service::HttpServer server(svc);
            const int bound = server.bind(host, port);
            g_server = &server;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            std::cerr << "listening on http://" << host << ":" << bound << "\n";
            server.run();
            g_server = nullptr;
        }
    } catch (const CLI::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
