#pragma once

// Documents (model, variations, candidate pools, traces, manipulation
// spaces), synthetic variation generation, and image/mesh file formats.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "reparamcad/constraints.hpp"
#include "reparamcad/csg.hpp"
#include "reparamcad/discovery.hpp"
#include "reparamcad/manipulation.hpp"
#include "reparamcad/raster.hpp"

namespace reparamcad::io {

using Json = nlohmann::ordered_json;
using csg::ParamVector;

inline constexpr std::string_view kModelSchema = "reparamcad.model/1";
inline constexpr std::string_view kVariationSchema = "reparamcad.variations/1";
inline constexpr std::string_view kPoolSchema = "reparamcad.pool/1";
inline constexpr std::string_view kTraceSchema = "reparamcad.trace/1";
inline constexpr std::string_view kSpaceSchema = "reparamcad.space/1";
inline constexpr std::string_view kRenderPackSchema = "reparamcad.renders/1";

/// Pretty-printed document text with a trailing newline.
std::string dump(const Json& doc);
Json parse(const std::string& text, const std::string& source = "<input>");
Json read_document(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

// ---- models -------------------------------------------------------------

Json model_to_json(const csg::Model& model);
/// Strict: unknown fields and wrong field types are errors naming the field.
csg::Model model_from_json(const Json& doc);
csg::Model load_model(const std::filesystem::path& path);
void save_model(const std::filesystem::path& path, const csg::Model& model);

/// "sha256:<hex>" over the compact canonical model document.
std::string content_hash(const csg::Model& model);

// ---- variations ---------------------------------------------------------

enum class Provenance { ExternalGenerator, Synthetic, Manual };
std::string_view to_string(Provenance p);
Provenance provenance_from_string(std::string_view name);

struct GroundTruth {
    std::vector<std::size_t> constraint_indices;  // into the enumerated pool
    std::vector<std::string> constraint_labels;
    std::size_t rank = 0;
    std::size_t free_dimension = 0;
    double sigma = 0.0;
    std::uint64_t seed = 0;
};

struct VariationDocument {
    std::string base_hash;
    Provenance provenance = Provenance::Manual;
    discovery::VariationSet variations;  // base = flattened model
    std::optional<GroundTruth> ground_truth;
};

Json variations_to_json(const VariationDocument& doc);
/// Verifies the base hash and vector lengths against `model`.
VariationDocument variations_from_json(const Json& doc, const csg::Model& model);
VariationDocument load_variations(const std::filesystem::path& path, const csg::Model& model);

struct SyntheticSpec {
    std::vector<std::size_t> constraint_indices;
    std::vector<Eigen::VectorXd> offsets;  // per variation, reduced coordinates
    std::vector<std::string> labels;       // optional; defaults to synthetic-<i>
    double sigma = 0.0;                    // fraction of the bbox diagonal
    std::uint64_t seed = 0;
};

/// x_v = N (y0 + offset_v) + gaussian(0, sigma * diag) with N the
/// ground-truth null-space basis and y0 the reduced coordinates of the
/// orthogonal projection of the model's parameters. Scales are floored at
/// 1e-4 diag after noise. Throws when an offset leaves a scale non-positive.
VariationDocument synth_variations(const csg::Model& model, const constraints::CandidatePool& pool,
                                   const SyntheticSpec& spec);

/// Random offsets uniform in +-amplitude * diag per free coordinate,
/// shrunk until every noiseless variation keeps scales above 10% of their
/// base values.
std::vector<Eigen::VectorXd> random_offsets(const csg::Model& model, const numeric::Subspace& ground_truth,
                                            std::size_t count, double amplitude, std::uint64_t seed);

// ---- pools, traces, spaces ----------------------------------------------

Json pool_to_json(const constraints::CandidatePool& pool);
constraints::CandidatePool pool_from_json(const Json& doc, std::size_t dimension);

Json trace_to_json(const discovery::DiscoveryResult& result, const csg::Model& model);
/// Tab-separated table: prefix size, constraint label, volumetric and pixel distortion.
std::string curve_table(const discovery::DiscoveryResult& result);

Json space_to_json(const manipulation::ManipulationSpace& space);
manipulation::ManipulationSpace space_from_json(const Json& doc);

/// Malformed content throws ParseError; wrong lengths throw DimensionMismatch.
manipulation::ManipulationState state_from_json(const Json& doc, const manipulation::ManipulationSpace& space);
Json state_to_json(const manipulation::ManipulationState& state);

// ---- meshes and images --------------------------------------------------

/// Indexed triangle wire format with per-primitive index ranges.
Json mesh_to_json(const csg::TriangleMesh& mesh, const csg::Model& model);
void write_obj(std::ostream& out, const csg::TriangleMesh& mesh, const csg::Model& model);

void write_png(const std::filesystem::path& path, const raster::Image& image);
raster::Image read_png(const std::filesystem::path& path);

Json camera_to_json(const raster::Camera& camera);
raster::Camera camera_from_json(const Json& doc);

/// Directory with renders.json plus one PNG per camera.
void save_render_pack(const std::filesystem::path& dir, std::span<const raster::RenderTarget> targets);
std::vector<raster::RenderTarget> load_render_pack(const std::filesystem::path& dir);

}  // namespace reparamcad::io
