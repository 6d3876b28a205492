// Copyright (C) 2026 The stlite Authors
// SPDX-License-Identifier: Apache-2.0

#include "stlite/container.hpp"

#include <set>
#include <string>

#include "blob_io.hpp"
#include "json.hpp"
#include "stlite/error.hpp"

namespace stlite {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kManifest = "manifest.json";

std::string blob_name(std::uint32_t layer, std::size_t head, char kind) {
    return "layer" + std::to_string(layer) + "_head" + std::to_string(head) + "_" + kind + ".f32";
}

template <typename T>
T field(const json& obj, const char* key, const std::string& where) {
    auto it = obj.find(key);
    if (it == obj.end()) throw ValidationError(where + "missing field '" + key + "'");
    try {
        return it->get<T>();
    } catch (const json::exception&) {
        throw ValidationError(where + "field '" + key + "' has the wrong type");
    }
}

const json& array_field(const json& obj, const char* key, const std::string& where) {
    auto it = obj.find(key);
    if (it == obj.end()) throw ValidationError(where + "missing field '" + key + "'");
    if (!it->is_array()) throw ValidationError(where + "field '" + key + "' must be an array");
    return *it;
}

TokenMeta parse_meta(const json& j, const std::string& where) {
    if (!j.is_object()) throw ValidationError(where + "must be an object");
    const auto modality = field<std::string>(j, "modality", where);
    const auto frame = field<std::uint32_t>(j, "frame_index", where);
    if (modality == "text") {
        if ((j.contains("u") && !j["u"].is_null()) || (j.contains("v") && !j["v"].is_null())) {
            throw ValidationError(where + "text token with grid coordinate");
        }
        return TokenMeta::text(frame);
    }
    if (modality == "visual") {
        if (!j.contains("u") || !j.contains("v") || j["u"].is_null() || j["v"].is_null()) {
            throw ValidationError(where + "visual token without grid coordinate");
        }
        return TokenMeta::visual(frame, field<std::uint32_t>(j, "u", where),
                                 field<std::uint32_t>(j, "v", where));
    }
    throw ValidationError(where + "unknown modality '" + modality + "'");
}

LayerCache parse_layer(const json& lj, std::size_t position, const fs::path& dir) {
    std::string where = "layer " + std::to_string(position) + ": ";
    if (!lj.is_object()) throw ValidationError(where + "must be an object");
    const auto layer_index = field<std::uint32_t>(lj, "layer_index", where);
    where = "layer " + std::to_string(layer_index) + ": ";
    const auto num_heads = field<std::size_t>(lj, "num_heads", where);
    const auto head_dim = field<std::size_t>(lj, "head_dim", where);
    const auto seq_len = field<std::size_t>(lj, "seq_len", where);
    const auto query_len = lj.contains("query_len") ? field<std::size_t>(lj, "query_len", where) : 0;
    if (num_heads == 0) throw ValidationError(where + "num_heads must be >= 1");

    const auto& meta_j = array_field(lj, "token_meta", where);
    if (meta_j.size() != seq_len) {
        throw ValidationError(where + "token_meta has " + std::to_string(meta_j.size()) +
                              " entries, seq_len is " + std::to_string(seq_len));
    }
    std::vector<TokenMeta> meta;
    meta.reserve(seq_len);
    for (std::size_t i = 0; i < meta_j.size(); ++i) {
        meta.push_back(parse_meta(meta_j[i], where + "token_meta[" + std::to_string(i) + "]: "));
    }

    std::vector<FrameLayout> layouts;
    const auto& lay_j = array_field(lj, "layouts", where);
    for (std::size_t f = 0; f < lay_j.size(); ++f) {
        const std::string lw = where + "layouts[" + std::to_string(f) + "]: ";
        FrameLayout lay;
        lay.frame_index = field<std::uint32_t>(lay_j[f], "frame_index", lw);
        lay.grid_rows = field<std::uint32_t>(lay_j[f], "grid_rows", lw);
        lay.grid_cols = field<std::uint32_t>(lay_j[f], "grid_cols", lw);
        lay.span_start = field<std::size_t>(lay_j[f], "span_start", lw);
        lay.span_end = field<std::size_t>(lay_j[f], "span_end", lw);
        lay.pruned = lay_j[f].contains("pruned") ? field<bool>(lay_j[f], "pruned", lw) : false;
        layouts.push_back(lay);
    }

    std::vector<std::optional<Matrix>> keys(num_heads), values(num_heads), queries(num_heads);
    const auto& blobs = array_field(lj, "blobs", where);
    for (std::size_t b = 0; b < blobs.size(); ++b) {
        const std::string bw = where + "blobs[" + std::to_string(b) + "]: ";
        const auto head = field<std::size_t>(blobs[b], "head", bw);
        const auto kind = field<std::string>(blobs[b], "kind", bw);
        const auto file = field<std::string>(blobs[b], "file", bw);
        const auto byte_len = field<std::size_t>(blobs[b], "byte_len", bw);
        if (head >= num_heads) throw ValidationError(bw + "head " + std::to_string(head) + " out of range");
        if (file.empty() || fs::path(file).is_absolute() || file.find("..") != std::string::npos) {
            throw ValidationError(bw + "blob file must be a relative name inside the container");
        }
        std::optional<Matrix>* slot = nullptr;
        std::size_t rows = seq_len;
        if (kind == "K") {
            slot = &keys[head];
        } else if (kind == "V") {
            slot = &values[head];
        } else if (kind == "Q") {
            slot = &queries[head];
            rows = query_len;
        } else {
            throw ValidationError(bw + "unknown blob kind '" + kind + "'");
        }
        if (slot->has_value()) throw ValidationError(bw + "duplicate blob for head/kind");
        const std::size_t expected = rows * head_dim * sizeof(float);
        if (byte_len != expected) {
            throw ValidationError(bw + "blob length mismatch: byte_len " + std::to_string(byte_len) +
                                  " != rows x head_dim x 4 = " + std::to_string(expected));
        }
        const std::string what = bw + "(head " + std::to_string(head) + " " + kind + ") ";
        *slot = Matrix(rows, head_dim, detail::read_f32_blob(dir / file, byte_len, what));
    }

    std::vector<Matrix> k, v, q;
    for (std::size_t h = 0; h < num_heads; ++h) {
        if (!keys[h]) throw ValidationError(where + "missing K blob for head " + std::to_string(h));
        if (!values[h]) throw ValidationError(where + "missing V blob for head " + std::to_string(h));
        k.push_back(std::move(*keys[h]));
        v.push_back(std::move(*values[h]));
        if (query_len > 0) {
            if (!queries[h]) throw ValidationError(where + "missing Q blob for head " + std::to_string(h));
            q.push_back(std::move(*queries[h]));
        } else if (queries[h]) {
            throw ValidationError(where + "Q blob present but query_len is 0");
        }
    }
    return LayerCache(layer_index, std::move(k), std::move(v), std::move(meta), std::move(layouts),
                      std::move(q));
}

json layer_manifest(const LayerCache& c) {
    json lj;
    lj["layer_index"] = c.layer_index();
    lj["num_heads"] = c.num_heads();
    lj["head_dim"] = c.head_dim();
    lj["seq_len"] = c.seq_len();
    lj["query_len"] = c.query_len();
    json meta = json::array();
    for (const auto& tm : c.meta()) {
        json m;
        m["modality"] = std::string(to_string(tm.modality));
        m["frame_index"] = tm.frame_index;
        if (tm.grid) {
            m["u"] = tm.grid->u;
            m["v"] = tm.grid->v;
        }
        meta.push_back(std::move(m));
    }
    lj["token_meta"] = std::move(meta);
    json lays = json::array();
    for (const auto& lay : c.layouts()) {
        json l;
        l["frame_index"] = lay.frame_index;
        l["grid_rows"] = lay.grid_rows;
        l["grid_cols"] = lay.grid_cols;
        l["span_start"] = lay.span_start;
        l["span_end"] = lay.span_end;
        if (lay.pruned) l["pruned"] = true;
        lays.push_back(std::move(l));
    }
    lj["layouts"] = std::move(lays);
    json blobs = json::array();
    auto add = [&](std::size_t h, char kind, const Matrix& m) {
        json b;
        b["head"] = h;
        b["kind"] = std::string(1, kind);
        b["file"] = blob_name(c.layer_index(), h, kind);
        b["byte_len"] = m.data().size() * sizeof(float);
        blobs.push_back(std::move(b));
    };
    for (std::size_t h = 0; h < c.num_heads(); ++h) {
        add(h, 'K', c.keys()[h]);
        add(h, 'V', c.values()[h]);
        if (!c.queries().empty()) add(h, 'Q', c.queries()[h]);
    }
    lj["blobs"] = std::move(blobs);
    return lj;
}

}  // namespace

std::vector<LayerCache> load_cache(const fs::path& container) {
    const auto text = detail::read_text(container / kManifest);
    json manifest;
    try {
        manifest = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("manifest: malformed JSON: ") + e.what());
    }
    if (!manifest.is_object()) throw ValidationError("manifest: must be a JSON object");
    const auto version = field<int>(manifest, "version", "manifest: ");
    if (version != kContainerVersion) {
        throw ValidationError("manifest: unsupported version " + std::to_string(version));
    }
    const auto num_layers = field<std::size_t>(manifest, "num_layers", "manifest: ");
    const auto& layers = array_field(manifest, "layers", "manifest: ");
    if (layers.size() != num_layers) {
        throw ValidationError("manifest: num_layers is " + std::to_string(num_layers) + " but " +
                              std::to_string(layers.size()) + " layers are listed");
    }
    std::vector<LayerCache> out;
    out.reserve(num_layers);
    for (std::size_t l = 0; l < layers.size(); ++l) out.push_back(parse_layer(layers[l], l, container));
    return out;
}

void save_cache(const std::vector<LayerCache>& caches, const fs::path& container) {
    json manifest;
    manifest["version"] = kContainerVersion;
    manifest["num_layers"] = caches.size();
    manifest["layers"] = json::array();
    for (const auto& c : caches) manifest["layers"].push_back(layer_manifest(c));

    std::set<std::uint32_t> seen;
    for (const auto& c : caches) {
        if (!seen.insert(c.layer_index()).second) {
            throw ValidationError("layer " + std::to_string(c.layer_index()) + ": duplicate layer_index");
        }
    }
    detail::write_directory_atomically(container, [&](const fs::path& dir) {
        for (const auto& c : caches) {
            for (std::size_t h = 0; h < c.num_heads(); ++h) {
                detail::write_f32_blob(dir / blob_name(c.layer_index(), h, 'K'), c.keys()[h].data());
                detail::write_f32_blob(dir / blob_name(c.layer_index(), h, 'V'), c.values()[h].data());
                if (!c.queries().empty()) {
                    detail::write_f32_blob(dir / blob_name(c.layer_index(), h, 'Q'), c.queries()[h].data());
                }
            }
        }
        detail::write_text(dir / kManifest, manifest.dump(2) + "\n");
    });
}

}  // namespace stlite
