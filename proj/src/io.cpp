#include "reparamcad/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <openssl/evp.h>
#include <png.h>

#include "reparamcad/error.hpp"

namespace reparamcad::io {

namespace {

namespace fs = std::filesystem;

[[noreturn]] void fail(const std::string& field, const std::string& what) {
    throw ParseError("field '" + field + "': " + what);
}

void check_keys(const Json& obj, const std::string& where, std::initializer_list<std::string_view> allowed) {
    if (!obj.is_object()) fail(where.empty() ? "<root>" : where, "expected an object");
    for (const auto& [key, value] : obj.items()) {
        (void)value;
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            fail(where.empty() ? key : where + "." + key, "unknown field");
        }
    }
}

std::string join(const std::string& where, std::string_view key) {
    return where.empty() ? std::string(key) : where + "." + std::string(key);
}

const Json& need(const Json& obj, const std::string& where, std::string_view key) {
    const auto it = obj.find(std::string(key));
    if (it == obj.end()) fail(join(where, key), "missing");
    return *it;
}

std::string get_string(const Json& obj, const std::string& where, std::string_view key) {
    const Json& v = need(obj, where, key);
    if (!v.is_string()) fail(join(where, key), "expected a string");
    return v.get<std::string>();
}

double as_number(const Json& v, const std::string& field) {
    if (!v.is_number()) fail(field, "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) fail(field, "expected a finite number");
    return d;
}

double get_number(const Json& obj, const std::string& where, std::string_view key) {
    return as_number(need(obj, where, key), join(where, key));
}

std::size_t as_index(const Json& v, const std::string& field) {
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
        fail(field, "expected a non-negative integer");
    }
    return v.get<std::size_t>();
}

bool get_bool(const Json& obj, const std::string& where, std::string_view key) {
    const Json& v = need(obj, where, key);
    if (!v.is_boolean()) fail(join(where, key), "expected a boolean");
    return v.get<bool>();
}

Eigen::VectorXd as_vector(const Json& v, const std::string& field, std::optional<std::size_t> length = {}) {
    if (!v.is_array()) fail(field, "expected an array of numbers");
    if (length && v.size() != *length) {
        throw DimensionMismatch("field '" + field + "': expected " + std::to_string(*length) + " numbers, got " +
                                std::to_string(v.size()));
    }
    Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) {
        out[static_cast<Eigen::Index>(i)] = as_number(v[i], field + "[" + std::to_string(i) + "]");
    }
    return out;
}

std::vector<std::size_t> as_indices(const Json& v, const std::string& field) {
    if (!v.is_array()) fail(field, "expected an array of indices");
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(as_index(v[i], field + "[" + std::to_string(i) + "]"));
    return out;
}

Json vector_json(const Eigen::VectorXd& v) {
    Json a = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

Json vec3_json(const Eigen::Vector3d& v) { return Json::array({v.x(), v.y(), v.z()}); }

void check_schema(const Json& doc, std::string_view expected) {
    const std::string schema = get_string(doc, "", "schema");
    if (schema != expected) fail("schema", "expected '" + std::string(expected) + "', got '" + schema + "'");
}

// Sparse row as [[column, coefficient], ...].
Json row_json(const Eigen::RowVectorXd& row) {
    Json out = Json::array();
    for (Eigen::Index j = 0; j < row.size(); ++j) {
        if (row[j] != 0.0) out.push_back(Json::array({j, row[j]}));
    }
    return out;
}

Eigen::RowVectorXd row_from_json(const Json& v, const std::string& field, std::size_t d) {
    if (!v.is_array()) fail(field, "expected an array of [column, coefficient] pairs");
    Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < v.size(); ++i) {
        const std::string f = field + "[" + std::to_string(i) + "]";
        if (!v[i].is_array() || v[i].size() != 2) fail(f, "expected [column, coefficient]");
        const std::size_t col = as_index(v[i][0], f + "[0]");
        if (col >= d) throw DimensionMismatch("field '" + f + "': column " + std::to_string(col) + " out of range");
        row[static_cast<Eigen::Index>(col)] = as_number(v[i][1], f + "[1]");
    }
    return row;
}

Json matrix_rows_json(const Eigen::MatrixXd& m) {
    Json out = Json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) out.push_back(row_json(m.row(i)));
    return out;
}

Eigen::MatrixXd matrix_rows_from_json(const Json& v, const std::string& field, std::size_t d) {
    if (!v.is_array()) fail(field, "expected an array of rows");
    Eigen::MatrixXd m(static_cast<Eigen::Index>(v.size()), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < v.size(); ++i) {
        m.row(static_cast<Eigen::Index>(i)) = row_from_json(v[i], field + "[" + std::to_string(i) + "]", d);
    }
    return m;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

std::string dump(const Json& doc) { return doc.dump(2) + "\n"; }

Json parse(const std::string& text, const std::string& source) {
    try {
        return Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw ParseError(source + ": " + e.what());
    }
}

Json read_document(const fs::path& path) { return parse(read_file(path), path.string()); }

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw Error("write failed for '" + path.string() + "'");
}

// ---- models -------------------------------------------------------------

Json model_to_json(const csg::Model& model) {
    Json doc;
    doc["schema"] = kModelSchema;
    doc["category"] = model.category();
    Json prims = Json::array();
    for (const auto& p : model.primitives()) {
        Json j;
        j["name"] = p.name;
        j["kind"] = csg::to_string(p.kind);
        j["translation"] = vec3_json(p.translation);
        j["scale"] = vec3_json(p.scale);
        if (p.top_radius) j["top_radius"] = *p.top_radius;
        prims.push_back(std::move(j));
    }
    doc["primitives"] = std::move(prims);
    return doc;
}

csg::Model model_from_json(const Json& doc) {
    check_keys(doc, "", {"schema", "category", "primitives"});
    check_schema(doc, kModelSchema);
    const std::string category = get_string(doc, "", "category");
    const Json& prims = need(doc, "", "primitives");
    if (!prims.is_array()) fail("primitives", "expected an array");
    if (prims.empty()) throw InvalidArgument("model must contain at least one primitive");
    std::vector<csg::Primitive> out;
    std::set<std::string> names;
    for (std::size_t i = 0; i < prims.size(); ++i) {
        const std::string where = "primitives[" + std::to_string(i) + "]";
        const Json& pj = prims[i];
        check_keys(pj, where, {"name", "kind", "translation", "scale", "top_radius"});
        csg::Primitive p;
        p.name = get_string(pj, where, "name");
        if (p.name.empty()) fail(where + ".name", "must not be empty");
        if (!names.insert(p.name).second) fail(where + ".name", "duplicate primitive name '" + p.name + "'");
        try {
            p.kind = csg::kind_from_string(get_string(pj, where, "kind"));
        } catch (const InvalidArgument& e) {
            fail(where + ".kind", e.what());
        }
        p.translation = as_vector(need(pj, where, "translation"), where + ".translation", 3);
        p.scale = as_vector(need(pj, where, "scale"), where + ".scale", 3);
        if (pj.contains("top_radius")) {
            if (p.kind != csg::PrimitiveKind::ConeCylinderY) {
                fail(where + ".top_radius", "only allowed on cone_cylinder_y");
            }
            p.top_radius = get_number(pj, where, "top_radius");
        } else if (p.kind == csg::PrimitiveKind::ConeCylinderY) {
            fail(where + ".top_radius", "missing");
        }
        out.push_back(std::move(p));
    }
    return csg::Model(std::move(out), category);
}

csg::Model load_model(const fs::path& path) {
    const Json doc = read_document(path);
    try {
        return model_from_json(doc);
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

void save_model(const fs::path& path, const csg::Model& model) { write_text(path, dump(model_to_json(model))); }

std::string content_hash(const csg::Model& model) {
    const std::string canonical = model_to_json(model).dump();
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(canonical.data(), canonical.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw Error("sha256 failed");
    }
    static constexpr char hex[] = "0123456789abcdef";
    std::string out = "sha256:";
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 15];
    }
    return out;
}

// ---- variations ---------------------------------------------------------

std::string_view to_string(Provenance p) {
    switch (p) {
        case Provenance::ExternalGenerator: return "external-generator";
        case Provenance::Synthetic: return "synthetic";
        case Provenance::Manual: return "manual";
    }
    return "manual";
}

Provenance provenance_from_string(std::string_view name) {
    if (name == "external-generator") return Provenance::ExternalGenerator;
    if (name == "synthetic") return Provenance::Synthetic;
    if (name == "manual") return Provenance::Manual;
    throw InvalidArgument("unknown provenance '" + std::string(name) + "'");
}

Json variations_to_json(const VariationDocument& doc) {
    Json out;
    out["schema"] = kVariationSchema;
    out["base_hash"] = doc.base_hash;
    out["provenance"] = to_string(doc.provenance);
    Json vars = Json::array();
    for (std::size_t i = 0; i < doc.variations.size(); ++i) {
        Json v;
        v["label"] = doc.variations.labels[i];
        v["params"] = vector_json(doc.variations.vectors[i]);
        vars.push_back(std::move(v));
    }
    out["variations"] = std::move(vars);
    if (doc.ground_truth) {
        const auto& gt = *doc.ground_truth;
        Json g;
        g["constraints"] = gt.constraint_indices;
        g["labels"] = gt.constraint_labels;
        g["rank"] = gt.rank;
        g["free_dimension"] = gt.free_dimension;
        g["sigma"] = gt.sigma;
        g["seed"] = gt.seed;
        out["ground_truth"] = std::move(g);
    }
    return out;
}

VariationDocument variations_from_json(const Json& doc, const csg::Model& model) {
    check_keys(doc, "", {"schema", "base_hash", "provenance", "variations", "ground_truth"});
    check_schema(doc, kVariationSchema);
    VariationDocument out;
    out.base_hash = get_string(doc, "", "base_hash");
    const std::string expected = content_hash(model);
    if (out.base_hash != expected) {
        throw InvalidArgument("variation document base hash " + out.base_hash + " does not match model " + expected);
    }
    try {
        out.provenance = provenance_from_string(get_string(doc, "", "provenance"));
    } catch (const InvalidArgument& e) {
        fail("provenance", e.what());
    }
    const Json& vars = need(doc, "", "variations");
    if (!vars.is_array()) fail("variations", "expected an array");
    out.variations.base = csg::flatten(model);
    for (std::size_t i = 0; i < vars.size(); ++i) {
        const std::string where = "variations[" + std::to_string(i) + "]";
        check_keys(vars[i], where, {"label", "params"});
        const std::string label = get_string(vars[i], where, "label");
        const Json& params = need(vars[i], where, "params");
        if (params.is_array() && params.size() != model.dimension()) {
            throw DimensionMismatch("field '" + where + ".params': expected " + std::to_string(model.dimension()) +
                                    " values, got " + std::to_string(params.size()));
        }
        out.variations.add(label, as_vector(params, where + ".params"));
    }
    out.variations.validate(model.dimension());
    if (doc.contains("ground_truth")) {
        const Json& g = doc["ground_truth"];
        check_keys(g, "ground_truth", {"constraints", "labels", "rank", "free_dimension", "sigma", "seed"});
        GroundTruth gt;
        gt.constraint_indices = as_indices(need(g, "ground_truth", "constraints"), "ground_truth.constraints");
        const Json& labels = need(g, "ground_truth", "labels");
        if (!labels.is_array()) fail("ground_truth.labels", "expected an array");
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (!labels[i].is_string()) fail("ground_truth.labels[" + std::to_string(i) + "]", "expected a string");
            gt.constraint_labels.push_back(labels[i].get<std::string>());
        }
        gt.rank = as_index(need(g, "ground_truth", "rank"), "ground_truth.rank");
        gt.free_dimension = as_index(need(g, "ground_truth", "free_dimension"), "ground_truth.free_dimension");
        gt.sigma = get_number(g, "ground_truth", "sigma");
        gt.seed = as_index(need(g, "ground_truth", "seed"), "ground_truth.seed");
        out.ground_truth = std::move(gt);
    }
    return out;
}

VariationDocument load_variations(const fs::path& path, const csg::Model& model) {
    const Json doc = read_document(path);
    try {
        return variations_from_json(doc, model);
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

namespace {

numeric::Subspace ground_truth_subspace(const csg::Model& model, const constraints::CandidatePool& pool,
                                        const std::vector<std::size_t>& indices) {
    std::vector<const constraints::SemanticConstraint*> set;
    for (const std::size_t i : indices) {
        if (i >= pool.size()) {
            throw InvalidArgument("constraint index " + std::to_string(i) + " outside pool of " +
                                  std::to_string(pool.size()));
        }
        set.push_back(&pool.constraints[i]);
    }
    return numeric::nullspace(constraints::rows_of(set, model.dimension()));
}

// Why x is not a valid shape, or empty.
std::string infeasibility(const csg::Model& model, const ParamVector& x, double min_fraction, const ParamVector& ref) {
    for (std::size_t i = 0; i < model.dimension(); ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        if (model.is_scale_param(i) && !(x[k] > min_fraction * ref[k])) {
            return "scale " + model.param_name(i) + " becomes " + std::to_string(x[k]);
        }
        if (model.is_top_radius_param(i) && (x[k] < 0.0 || x[k] > 1.0)) {
            return "top radius " + model.param_name(i) + " leaves [0, 1]";
        }
    }
    return {};
}

}  // namespace

VariationDocument synth_variations(const csg::Model& model, const constraints::CandidatePool& pool,
                                   const SyntheticSpec& spec) {
    if (!(spec.sigma >= 0.0) || !std::isfinite(spec.sigma)) throw InvalidArgument("sigma must be non-negative");
    if (spec.offsets.empty()) throw InvalidArgument("need at least one variation offset");
    if (!spec.labels.empty() && spec.labels.size() != spec.offsets.size()) {
        throw InvalidArgument("label count does not match offset count");
    }
    const numeric::Subspace sub = ground_truth_subspace(model, pool, spec.constraint_indices);
    const ParamVector x0 = csg::flatten(model);
    const Eigen::VectorXd y0 = sub.reduce(numeric::project_orthogonal(sub, x0));
    const double diag = csg::bounding_box(model, x0).diagonal();

    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    VariationDocument doc;
    doc.base_hash = content_hash(model);
    doc.provenance = Provenance::Synthetic;
    doc.variations.base = x0;
    for (std::size_t v = 0; v < spec.offsets.size(); ++v) {
        const Eigen::VectorXd& off = spec.offsets[v];
        if (static_cast<std::size_t>(off.size()) != sub.nullity()) {
            throw DimensionMismatch("offset " + std::to_string(v) + " has " + std::to_string(off.size()) +
                                    " entries, ground truth has " + std::to_string(sub.nullity()) + " free variables");
        }
        ParamVector x = sub.lift(y0 + off);
        const std::string why = infeasibility(model, x, 0.0, ParamVector::Zero(x.size()));
        if (!why.empty()) throw InvalidArgument("infeasible offset " + std::to_string(v) + ": " + why);
        for (Eigen::Index k = 0; k < x.size(); ++k) {
            const double noise = gauss(rng);
            if (spec.sigma > 0.0) x[k] += noise * spec.sigma * diag;
        }
        for (std::size_t i = 0; i < model.dimension(); ++i) {
            const auto k = static_cast<Eigen::Index>(i);
            if (model.is_scale_param(i)) x[k] = std::max(x[k], 1e-4 * diag);
            if (model.is_top_radius_param(i)) x[k] = std::clamp(x[k], 0.0, 1.0);
        }
        doc.variations.add(spec.labels.empty() ? "synthetic-" + std::to_string(v) : spec.labels[v], std::move(x));
    }
    GroundTruth gt;
    gt.constraint_indices = spec.constraint_indices;
    for (const std::size_t i : spec.constraint_indices) gt.constraint_labels.push_back(pool.constraints[i].label);
    gt.rank = sub.rank();
    gt.free_dimension = sub.nullity();
    gt.sigma = spec.sigma;
    gt.seed = spec.seed;
    doc.ground_truth = std::move(gt);
    return doc;
}

std::vector<Eigen::VectorXd> random_offsets(const csg::Model& model, const numeric::Subspace& ground_truth,
                                            std::size_t count, double amplitude, std::uint64_t seed) {
    const ParamVector x0 = csg::flatten(model);
    const Eigen::VectorXd y0 = ground_truth.reduce(numeric::project_orthogonal(ground_truth, x0));
    const ParamVector base = ground_truth.lift(y0);
    const double diag = csg::bounding_box(model, x0).diagonal();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    std::vector<Eigen::VectorXd> out;
    for (std::size_t v = 0; v < count; ++v) {
        Eigen::VectorXd off(static_cast<Eigen::Index>(ground_truth.nullity()));
        for (Eigen::Index k = 0; k < off.size(); ++k) off[k] = uni(rng) * amplitude * diag;
        for (int attempt = 0; attempt < 60; ++attempt) {
            if (infeasibility(model, ground_truth.lift(y0 + off), 0.1, base).empty()) break;
            off *= 0.5;
        }
        out.push_back(std::move(off));
    }
    return out;
}

// ---- pools, traces, spaces ----------------------------------------------

namespace {

Json constraint_json(const constraints::SemanticConstraint& c) {
    Json j;
    j["label"] = c.label;
    j["kind"] = constraints::to_string(c.kind);
    j["participants"] = c.participants;
    j["features"] = c.features;
    Json rows = Json::array();
    for (const auto& r : c.rows) rows.push_back(row_json(r.coeffs));
    j["rows"] = std::move(rows);
    return j;
}

}  // namespace

Json pool_to_json(const constraints::CandidatePool& pool) {
    Json doc;
    doc["schema"] = kPoolSchema;
    doc["tolerance"] = pool.tolerance;
    doc["dimension"] = pool.empty() ? 0 : pool.constraints.front().rows.front().coeffs.size();
    Json list = Json::array();
    for (std::size_t i = 0; i < pool.size(); ++i) {
        Json j;
        j["index"] = i;
        const Json c = constraint_json(pool.constraints[i]);
        for (const auto& [k, v] : c.items()) j[k] = v;
        list.push_back(std::move(j));
    }
    doc["constraints"] = std::move(list);
    return doc;
}

constraints::CandidatePool pool_from_json(const Json& doc, std::size_t dimension) {
    check_keys(doc, "", {"schema", "tolerance", "dimension", "constraints"});
    check_schema(doc, kPoolSchema);
    constraints::CandidatePool pool;
    pool.tolerance = get_number(doc, "", "tolerance");
    const Json& list = need(doc, "", "constraints");
    if (!list.is_array()) fail("constraints", "expected an array");
    if (!list.empty() && as_index(need(doc, "", "dimension"), "dimension") != dimension) {
        throw DimensionMismatch("pool dimension does not match model dimension " + std::to_string(dimension));
    }
    for (std::size_t i = 0; i < list.size(); ++i) {
        const std::string where = "constraints[" + std::to_string(i) + "]";
        const Json& j = list[i];
        check_keys(j, where, {"index", "label", "kind", "participants", "features", "rows"});
        constraints::SemanticConstraint c;
        c.label = get_string(j, where, "label");
        try {
            c.kind = constraints::kind_from_string(get_string(j, where, "kind"));
        } catch (const InvalidArgument& e) {
            fail(where + ".kind", e.what());
        }
        c.participants = as_indices(need(j, where, "participants"), where + ".participants");
        const Json& feats = need(j, where, "features");
        if (!feats.is_array()) fail(where + ".features", "expected an array");
        for (std::size_t k = 0; k < feats.size(); ++k) {
            if (!feats[k].is_number_integer()) fail(where + ".features", "expected integers");
            c.features.push_back(feats[k].get<int>());
        }
        const Json& rows = need(j, where, "rows");
        if (!rows.is_array() || rows.empty()) fail(where + ".rows", "expected a non-empty array");
        for (std::size_t r = 0; r < rows.size(); ++r) {
            c.rows.push_back({row_from_json(rows[r], where + ".rows[" + std::to_string(r) + "]", dimension)});
        }
        pool.constraints.push_back(std::move(c));
    }
    return pool;
}

Json trace_to_json(const discovery::DiscoveryResult& result, const csg::Model& model) {
    const auto& ranking = result.trace.ranking;
    const auto label = [&](std::size_t i) { return result.pool.constraints[i].label; };
    Json doc;
    doc["schema"] = kTraceSchema;
    doc["model_hash"] = content_hash(model);
    doc["method"] = discovery::to_string(result.method);
    doc["pool_size"] = result.pool.size();
    Json picks = Json::array();
    for (std::size_t k = 0; k < ranking.picks.size(); ++k) {
        const auto& s = ranking.picks[k];
        Json j;
        j["rank"] = k + 1;
        j["candidate"] = s.candidate;
        j["label"] = label(s.candidate);
        j["distortion"] = s.distortion;
        j["cumulative"] = s.cumulative;
        j["face_cost"] = s.face_cost;
        j["pixel_distortion"] = k < result.trace.pixel_curve.size() ? result.trace.pixel_curve[k] : 0.0;
        picks.push_back(std::move(j));
    }
    doc["picks"] = std::move(picks);
    Json redundant = Json::array();
    for (const auto& r : ranking.redundant) {
        redundant.push_back({{"candidate", r.candidate}, {"label", label(r.candidate)}, {"implied_by", r.implied_by}});
    }
    doc["redundant"] = std::move(redundant);
    Json infeasible = Json::array();
    for (const std::size_t i : ranking.infeasible) infeasible.push_back({{"candidate", i}, {"label", label(i)}});
    doc["infeasible"] = std::move(infeasible);
    doc["cutoff"] = result.trace.cutoff;
    Json chosen = Json::array();
    for (const std::size_t i : result.chosen) chosen.push_back(label(i));
    doc["chosen"] = std::move(chosen);
    doc["free_dimension"] = result.free_dimension();
    Json groups = Json::array();
    for (const auto& g : result.groups.groups) {
        Json names = Json::array();
        for (const std::size_t p : g) names.push_back(model.primitive(p).name);
        groups.push_back(std::move(names));
    }
    doc["groups"] = std::move(groups);
    return doc;
}

std::string curve_table(const discovery::DiscoveryResult& result) {
    std::ostringstream out;
    out << "prefix\tconstraint\tdistortion\tcumulative\tpixel_distortion\tkept\n";
    const auto& picks = result.trace.ranking.picks;
    char buf[64];
    const auto num = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.10g", v);
        return std::string(buf);
    };
    for (std::size_t k = 0; k < picks.size(); ++k) {
        out << (k + 1) << '\t' << result.pool.constraints[picks[k].candidate].label << '\t'
            << num(picks[k].distortion) << '\t' << num(picks[k].cumulative) << '\t'
            << num(k < result.trace.pixel_curve.size() ? result.trace.pixel_curve[k] : 0.0) << '\t'
            << (k < result.trace.cutoff ? 1 : 0) << '\n';
    }
    return out.str();
}

Json space_to_json(const manipulation::ManipulationSpace& space) {
    const auto& sub = space.subspace;
    Json doc;
    doc["schema"] = kSpaceSchema;
    doc["model"] = model_to_json(space.model);
    doc["method"] = discovery::to_string(space.method);
    doc["bounded"] = space.bounded;
    doc["constraints"] = matrix_rows_json(sub.constraints);
    doc["pivots"] = sub.pivots;
    Json free = Json::array();
    for (std::size_t k = 0; k < sub.nullity(); ++k) {
        const auto kk = static_cast<Eigen::Index>(k);
        Json j;
        j["index"] = sub.free[k];
        j["name"] = space.free_name(k);
        j["base"] = space.base_reduced[kk];
        j["lower"] = space.lower[kk];
        j["upper"] = space.upper[kk];
        j["basis"] = vector_json(sub.basis.col(kk));
        free.push_back(std::move(j));
    }
    doc["free"] = std::move(free);
    doc["base"] = vector_json(space.base);
    Json vars = Json::array();
    for (std::size_t i = 0; i < space.variation_count(); ++i) {
        vars.push_back({{"label", space.labels[i]}, {"delta", vector_json(space.deltas[i])}});
    }
    doc["variations"] = std::move(vars);
    Json groups = Json::array();
    for (const auto& g : space.groups) {
        Json names = Json::array();
        for (const std::size_t p : g.members) names.push_back(space.model.primitive(p).name);
        groups.push_back({{"label", g.label}, {"members", std::move(names)}, {"default_on", g.default_on}});
    }
    doc["groups"] = std::move(groups);
    return doc;
}

manipulation::ManipulationSpace space_from_json(const Json& doc) {
    check_keys(doc, "", {"schema", "model", "method", "bounded", "constraints", "pivots", "free", "base",
                         "variations", "groups"});
    check_schema(doc, kSpaceSchema);
    manipulation::ManipulationSpace space;
    try {
        space.model = model_from_json(need(doc, "", "model"));
    } catch (const ParseError& e) {
        throw ParseError(std::string("model: ") + e.what());
    }
    const std::size_t d = space.model.dimension();
    try {
        space.method = discovery::projection_from_string(get_string(doc, "", "method"));
    } catch (const InvalidArgument& e) {
        fail("method", e.what());
    }
    space.bounded = get_bool(doc, "", "bounded");
    auto& sub = space.subspace;
    sub.constraints = matrix_rows_from_json(need(doc, "", "constraints"), "constraints", d);
    sub.pivots = as_indices(need(doc, "", "pivots"), "pivots");
    const Json& free = need(doc, "", "free");
    if (!free.is_array()) fail("free", "expected an array");
    const auto nfree = static_cast<Eigen::Index>(free.size());
    sub.basis.resize(static_cast<Eigen::Index>(d), nfree);
    space.base_reduced.resize(nfree);
    space.lower.resize(nfree);
    space.upper.resize(nfree);
    for (std::size_t k = 0; k < free.size(); ++k) {
        const std::string where = "free[" + std::to_string(k) + "]";
        const auto kk = static_cast<Eigen::Index>(k);
        check_keys(free[k], where, {"index", "name", "base", "lower", "upper", "basis"});
        const std::size_t index = as_index(need(free[k], where, "index"), where + ".index");
        if (index >= d) throw DimensionMismatch("field '" + where + ".index': out of range");
        sub.free.push_back(index);
        space.base_reduced[kk] = get_number(free[k], where, "base");
        space.lower[kk] = get_number(free[k], where, "lower");
        space.upper[kk] = get_number(free[k], where, "upper");
        sub.basis.col(kk) = as_vector(need(free[k], where, "basis"), where + ".basis", d);
    }
    if (sub.pivots.size() + sub.free.size() != d) {
        throw DimensionMismatch("pivot and free variable counts do not add up to " + std::to_string(d));
    }
    space.base = as_vector(need(doc, "", "base"), "base", d);
    const Json& vars = need(doc, "", "variations");
    if (!vars.is_array()) fail("variations", "expected an array");
    for (std::size_t i = 0; i < vars.size(); ++i) {
        const std::string where = "variations[" + std::to_string(i) + "]";
        check_keys(vars[i], where, {"label", "delta"});
        space.labels.push_back(get_string(vars[i], where, "label"));
        space.deltas.push_back(as_vector(need(vars[i], where, "delta"), where + ".delta", d));
    }
    const Json& groups = need(doc, "", "groups");
    if (!groups.is_array()) fail("groups", "expected an array");
    for (std::size_t g = 0; g < groups.size(); ++g) {
        const std::string where = "groups[" + std::to_string(g) + "]";
        check_keys(groups[g], where, {"label", "members", "default_on"});
        manipulation::PartGroup group;
        group.label = get_string(groups[g], where, "label");
        group.default_on = get_bool(groups[g], where, "default_on");
        const Json& members = need(groups[g], where, "members");
        if (!members.is_array()) fail(where + ".members", "expected an array");
        for (const auto& m : members) {
            if (!m.is_string()) fail(where + ".members", "expected primitive names");
            try {
                group.members.push_back(space.model.index_of(m.get<std::string>()));
            } catch (const InvalidArgument& e) {
                fail(where + ".members", e.what());
            }
        }
        space.groups.push_back(std::move(group));
    }
    return space;
}

manipulation::ManipulationState state_from_json(const Json& doc, const manipulation::ManipulationSpace& space) {
    check_keys(doc, "", {"weights", "offsets", "toggles"});
    auto state = manipulation::ManipulationState::rest(space);
    if (doc.contains("weights")) {
        state.weights = as_vector(doc["weights"], "weights");
        if (static_cast<std::size_t>(state.weights.size()) != space.variation_count()) {
            throw DimensionMismatch("weights: expected " + std::to_string(space.variation_count()) + ", got " +
                                    std::to_string(state.weights.size()));
        }
    }
    if (doc.contains("offsets")) {
        state.offsets = as_vector(doc["offsets"], "offsets");
        if (static_cast<std::size_t>(state.offsets.size()) != space.free_count()) {
            throw DimensionMismatch("offsets: expected " + std::to_string(space.free_count()) + ", got " +
                                    std::to_string(state.offsets.size()));
        }
    }
    if (doc.contains("toggles")) {
        const Json& t = doc["toggles"];
        if (!t.is_array()) fail("toggles", "expected an array of booleans");
        state.toggles.clear();
        for (std::size_t i = 0; i < t.size(); ++i) {
            if (!t[i].is_boolean()) fail("toggles[" + std::to_string(i) + "]", "expected a boolean");
            state.toggles.push_back(t[i].get<bool>());
        }
        if (state.toggles.size() != space.groups.size()) {
            throw DimensionMismatch("toggles: expected " + std::to_string(space.groups.size()) + ", got " +
                                    std::to_string(state.toggles.size()));
        }
    }
    return state;
}

Json state_to_json(const manipulation::ManipulationState& state) {
    Json doc;
    doc["weights"] = vector_json(state.weights);
    doc["offsets"] = vector_json(state.offsets);
    doc["toggles"] = state.toggles;
    return doc;
}

// ---- meshes and images --------------------------------------------------

Json mesh_to_json(const csg::TriangleMesh& mesh, const csg::Model& model) {
    Json vertices = Json::array();
    for (const auto& v : mesh.vertices) {
        vertices.push_back(v.x());
        vertices.push_back(v.y());
        vertices.push_back(v.z());
    }
    Json indices = Json::array();
    for (const auto& t : mesh.triangles) {
        for (const auto i : t) indices.push_back(i);
    }
    Json ranges = Json::array();
    for (const auto& r : mesh.ranges) {
        Json j;
        j["primitive"] = r.primitive;
        j["name"] = model.primitive(r.primitive).name;
        j["first_vertex"] = r.first_vertex;
        j["vertex_count"] = r.vertex_count;
        j["first_index"] = 3 * r.first_triangle;
        j["index_count"] = 3 * r.triangle_count;
        ranges.push_back(std::move(j));
    }
    Json doc;
    doc["vertices"] = std::move(vertices);
    doc["indices"] = std::move(indices);
    doc["ranges"] = std::move(ranges);
    return doc;
}

void write_obj(std::ostream& out, const csg::TriangleMesh& mesh, const csg::Model& model) {
    char buf[128];
    out << "# " << model.category() << "\n";
    for (const auto& r : mesh.ranges) {
        out << "o " << model.primitive(r.primitive).name << "\n";
        for (std::size_t v = r.first_vertex; v < r.first_vertex + r.vertex_count; ++v) {
            const auto& p = mesh.vertices[v];
            std::snprintf(buf, sizeof buf, "v %.9g %.9g %.9g\n", p.x(), p.y(), p.z());
            out << buf;
        }
        for (std::size_t t = r.first_triangle; t < r.first_triangle + r.triangle_count; ++t) {
            const auto& tri = mesh.triangles[t];
            out << "f " << tri[0] + 1 << ' ' << tri[1] + 1 << ' ' << tri[2] + 1 << "\n";
        }
    }
}

void write_png(const fs::path& path, const raster::Image& image) {
    if (image.width <= 0 || image.height <= 0) throw InvalidArgument("cannot write an empty image");
    std::vector<png_byte> bytes(image.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) {
        bytes[i] = static_cast<png_byte>(std::lround(std::clamp(image.pixels[i], 0.0, 1.0) * 255.0));
    }
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(image.width);
    png.height = static_cast<png_uint_32>(image.height);
    png.format = PNG_FORMAT_GRAY;
    if (!png_image_write_to_file(&png, path.string().c_str(), 0, bytes.data(), 0, nullptr)) {
        throw Error("cannot write '" + path.string() + "': " + png.message);
    }
}

raster::Image read_png(const fs::path& path) {
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&png, path.string().c_str())) {
        throw ParseError("cannot read '" + path.string() + "': " + png.message);
    }
    png.format = PNG_FORMAT_GRAY;
    std::vector<png_byte> bytes(PNG_IMAGE_SIZE(png));
    if (!png_image_finish_read(&png, nullptr, bytes.data(), 0, nullptr)) {
        throw ParseError("cannot decode '" + path.string() + "': " + png.message);
    }
    raster::Image image(static_cast<int>(png.width), static_cast<int>(png.height));
    for (std::size_t i = 0; i < image.size(); ++i) image.pixels[i] = bytes[i] / 255.0;
    return image;
}

Json camera_to_json(const raster::Camera& camera) {
    Json j;
    j["azimuth"] = camera.azimuth;
    j["elevation"] = camera.elevation;
    j["distance"] = camera.distance;
    j["frame_diagonal"] = camera.frame_diagonal;
    j["look_at"] = vec3_json(camera.look_at);
    j["fov_y"] = camera.fov_y;
    return j;
}

raster::Camera camera_from_json(const Json& doc) {
    check_keys(doc, "camera", {"azimuth", "elevation", "distance", "frame_diagonal", "look_at", "fov_y"});
    raster::Camera c;
    c.azimuth = get_number(doc, "camera", "azimuth");
    c.elevation = get_number(doc, "camera", "elevation");
    c.distance = get_number(doc, "camera", "distance");
    c.frame_diagonal = get_number(doc, "camera", "frame_diagonal");
    c.look_at = as_vector(need(doc, "camera", "look_at"), "camera.look_at", 3);
    c.fov_y = get_number(doc, "camera", "fov_y");
    c.validate();
    return c;
}

void save_render_pack(const fs::path& dir, std::span<const raster::RenderTarget> targets) {
    if (targets.empty()) throw InvalidArgument("render pack needs at least one view");
    for (std::size_t i = 0; i < targets.size(); ++i) {
        const auto& im = targets[i].image;
        if (im.width != im.height) throw InvalidArgument("views[" + std::to_string(i) + "]: images must be square");
        if (im.width != targets[0].image.width) {
            throw InvalidArgument("views[" + std::to_string(i) + "]: image sizes differ");
        }
    }
    fs::create_directories(dir);
    Json views = Json::array();
    for (std::size_t i = 0; i < targets.size(); ++i) {
        const std::string file = "view_" + std::to_string(i) + ".png";
        write_png(dir / file, targets[i].image);
        views.push_back({{"file", file}, {"camera", camera_to_json(targets[i].camera)}});
    }
    Json doc;
    doc["schema"] = kRenderPackSchema;
    doc["views"] = std::move(views);
    write_text(dir / "renders.json", dump(doc));
}

std::vector<raster::RenderTarget> load_render_pack(const fs::path& dir) {
    const Json doc = read_document(dir / "renders.json");
    check_keys(doc, "", {"schema", "views"});
    check_schema(doc, kRenderPackSchema);
    const Json& views = need(doc, "", "views");
    if (!views.is_array() || views.empty()) fail("views", "expected a non-empty array");
    std::vector<raster::RenderTarget> out;
    for (std::size_t i = 0; i < views.size(); ++i) {
        const std::string where = "views[" + std::to_string(i) + "]";
        check_keys(views[i], where, {"file", "camera"});
        raster::RenderTarget t;
        t.camera = camera_from_json(need(views[i], where, "camera"));
        t.image = read_png(dir / get_string(views[i], where, "file"));
        if (t.image.width != t.image.height) throw InvalidArgument(where + ": images must be square");
        if (!out.empty() && t.image.width != out.front().image.width) {
            throw InvalidArgument(where + ": image sizes differ");
        }
        out.push_back(std::move(t));
    }
    return out;
}

}  // namespace reparamcad::io
