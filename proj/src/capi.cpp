#include "percept/percept.h"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <iostream>
#include <memory>
#include <new>
#include <string>

#include "dataset.hpp"
#include "error.hpp"
#include "image.hpp"
#include "output.hpp"
#include "pipeline.hpp"

struct pct_pipeline {
    percept::PipelineConfig cfg;
    mutable std::string outputs_cache;
};

struct pct_engine {
    percept::Engine impl;
};

struct pct_frame {
    std::string frame_id;
    percept::Tensor input;
};

struct pct_result {
    percept::FrameResult frame;
    std::string json;
    std::string phrase;
    std::string braille;
    bool braille_ready = false;
};

namespace {

thread_local std::string g_last_error = "no error";

pct_status to_status(percept::ErrorCode c) {
    using percept::ErrorCode;
    switch (c) {
        case ErrorCode::io: return PCT_E_IO;
        case ErrorCode::parse: return PCT_E_PARSE;
        case ErrorCode::invalid_shape: return PCT_E_INVALID_SHAPE;
        case ErrorCode::shape_mismatch: return PCT_E_SHAPE_MISMATCH;
        case ErrorCode::invalid_geometry: return PCT_E_INVALID_GEOMETRY;
        case ErrorCode::invalid_hyperparameter: return PCT_E_INVALID_HYPERPARAMETER;
        case ErrorCode::invalid_label: return PCT_E_INVALID_LABEL;
        case ErrorCode::invalid_annotation: return PCT_E_INVALID_ANNOTATION;
        case ErrorCode::invalid_config: return PCT_E_INVALID_CONFIG;
        case ErrorCode::bad_magic: return PCT_E_BAD_MAGIC;
        case ErrorCode::bad_version: return PCT_E_BAD_VERSION;
        case ErrorCode::bad_maxval: return PCT_E_BAD_MAXVAL;
        case ErrorCode::truncated_payload: return PCT_E_TRUNCATED;
        case ErrorCode::invalid_input: return PCT_E_INVALID_INPUT;
        case ErrorCode::unmappable_character: return PCT_E_UNMAPPABLE_CHAR;
        case ErrorCode::invalid_argument: return PCT_E_INVALID_ARGUMENT;
        case ErrorCode::internal: return PCT_E_INTERNAL;
    }
    return PCT_E_INTERNAL;
}

template <typename F>
pct_status guarded(F&& f) {
    try {
        f();
        return PCT_OK;
    } catch (const percept::Error& e) {
        g_last_error = e.what();
        return to_status(e.code());
    } catch (const std::bad_alloc&) {
        g_last_error = "out of memory";
        return PCT_E_INTERNAL;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return PCT_E_INTERNAL;
    }
}

pct_status fail_arg(const char* msg) {
    g_last_error = msg;
    return PCT_E_INVALID_ARGUMENT;
}

// Hands a std::string to C callers as a malloc'd buffer released by
// pct_string_free.
char* dup_for_c(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (!out) throw std::bad_alloc();
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

void fill_result(pct_result& r) {
    r.json = percept::to_json(r.frame);
    r.phrase = percept::describe_scene(r.frame);
}

}  // namespace

extern "C" {

const char* pct_last_error(void) { return g_last_error.c_str(); }

const char* pct_status_name(pct_status s) {
    switch (s) {
        case PCT_OK: return "ok";
        case PCT_E_IO: return "io";
        case PCT_E_PARSE: return "parse";
        case PCT_E_INVALID_SHAPE: return "invalid-shape";
        case PCT_E_SHAPE_MISMATCH: return "shape-mismatch";
        case PCT_E_INVALID_GEOMETRY: return "invalid-geometry";
        case PCT_E_INVALID_HYPERPARAMETER: return "invalid-hyperparameter";
        case PCT_E_INVALID_LABEL: return "invalid-label";
        case PCT_E_INVALID_ANNOTATION: return "invalid-annotation";
        case PCT_E_INVALID_CONFIG: return "invalid-config";
        case PCT_E_BAD_MAGIC: return "bad-magic";
        case PCT_E_BAD_VERSION: return "bad-version";
        case PCT_E_BAD_MAXVAL: return "bad-maxval";
        case PCT_E_TRUNCATED: return "truncated-payload";
        case PCT_E_INVALID_INPUT: return "invalid-input";
        case PCT_E_UNMAPPABLE_CHAR: return "unmappable-character";
        case PCT_E_INVALID_ARGUMENT: return "invalid-argument";
        case PCT_E_INTERNAL: return "internal";
    }
    return "unknown";
}

pct_status pct_pipeline_open(const char* config_path, pct_pipeline** out) {
    if (!config_path || !out) return fail_arg("pct_pipeline_open: NULL argument");
    *out = nullptr;
    return guarded([&] {
        auto p = std::make_unique<pct_pipeline>();
        p->cfg = percept::load_pipeline_config(config_path);
        *out = p.release();
    });
}

void pct_pipeline_free(pct_pipeline* p) { delete p; }

pct_status pct_pipeline_set_weights(pct_pipeline* p, const char* path) {
    if (!p || !path) return fail_arg("pct_pipeline_set_weights: NULL argument");
    p->cfg.weights_path = path;
    return PCT_OK;
}

pct_status pct_pipeline_set_thresholds(pct_pipeline* p, double conf, double iou) {
    if (!p) return fail_arg("pct_pipeline_set_thresholds: NULL pipeline");
    return guarded([&] {
        if (conf >= 0) {
            if (conf > 1)
                throw percept::Error(percept::ErrorCode::invalid_argument,
                                     "confidence threshold must lie in [0,1]");
            p->cfg.conf_threshold = conf;
        }
        if (iou >= 0) {
            if (iou > 1)
                throw percept::Error(percept::ErrorCode::invalid_argument,
                                     "suppression threshold must lie in [0,1]");
            p->cfg.iou_threshold = iou;
        }
    });
}

pct_status pct_pipeline_set_seed(pct_pipeline* p, uint64_t seed) {
    if (!p) return fail_arg("pct_pipeline_set_seed: NULL pipeline");
    p->cfg.train.seed = seed;
    return PCT_OK;
}

pct_status pct_pipeline_set_outputs(pct_pipeline* p, const char* modes) {
    if (!p || !modes) return fail_arg("pct_pipeline_set_outputs: NULL argument");
    return guarded([&] {
        bool json = false, braille = false, phrase = false;
        std::string token;
        const std::string src = modes;
        std::size_t pos = 0;
        while (pos <= src.size()) {
            const std::size_t comma = src.find(',', pos);
            token = src.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
            if (token == "json") json = true;
            else if (token == "braille") braille = true;
            else if (token == "phrase") phrase = true;
            else
                throw percept::Error(percept::ErrorCode::invalid_argument,
                                     "unknown output mode '" + token + "'");
            if (comma == std::string::npos) break;
            pos = comma + 1;
        }
        if (!json && !braille && !phrase)
            throw percept::Error(percept::ErrorCode::invalid_argument,
                                 "at least one output mode is required");
        p->cfg.out_json = json;
        p->cfg.out_braille = braille;
        p->cfg.out_phrase = phrase;
    });
}

const char* pct_pipeline_outputs(const pct_pipeline* p) {
    if (!p) return "";
    std::string csv;
    if (p->cfg.out_json) csv += "json";
    if (p->cfg.out_braille) csv += csv.empty() ? "braille" : ",braille";
    if (p->cfg.out_phrase) csv += csv.empty() ? "phrase" : ",phrase";
    p->outputs_cache = std::move(csv);
    return p->outputs_cache.c_str();
}

pct_status pct_engine_open(const pct_pipeline* p, pct_engine** out) {
    if (!p || !out) return fail_arg("pct_engine_open: NULL argument");
    *out = nullptr;
    return guarded([&] { *out = new pct_engine{percept::Engine(p->cfg)}; });
}

void pct_engine_free(pct_engine* e) { delete e; }

int pct_engine_is_detector(const pct_engine* e) {
    return e && e->impl.is_detector() ? 1 : 0;
}

pct_status pct_frame_load(const pct_engine* e, const char* image_path, pct_frame** out) {
    if (!e || !image_path || !out) return fail_arg("pct_frame_load: NULL argument");
    *out = nullptr;
    return guarded([&] {
        auto f = std::make_unique<pct_frame>();
        f->frame_id = std::filesystem::path(image_path).stem().string();
        f->input = e->impl.prepare(percept::load_ppm(image_path));
        *out = f.release();
    });
}

pct_status pct_frame_from_memory(const pct_engine* e, const void* bytes, size_t len,
                                 const char* frame_id, pct_frame** out) {
    if (!e || !bytes || !frame_id || !out) return fail_arg("pct_frame_from_memory: NULL argument");
    *out = nullptr;
    return guarded([&] {
        auto f = std::make_unique<pct_frame>();
        f->frame_id = frame_id;
        f->input = e->impl.prepare(
            percept::decode_ppm(static_cast<const std::uint8_t*>(bytes), len));
        *out = f.release();
    });
}

void pct_frame_free(pct_frame* f) { delete f; }

pct_status pct_engine_process(const pct_engine* e, const pct_frame* f, pct_result** out) {
    if (!e || !f || !out) return fail_arg("pct_engine_process: NULL argument");
    *out = nullptr;
    return guarded([&] {
        auto r = std::make_unique<pct_result>();
        r->frame = e->impl.process(f->input, f->frame_id);
        fill_result(*r);
        *out = r.release();
    });
}

void pct_result_free(pct_result* r) { delete r; }

const char* pct_result_json(const pct_result* r) { return r ? r->json.c_str() : ""; }

const char* pct_result_phrase(const pct_result* r) { return r ? r->phrase.c_str() : ""; }

pct_status pct_result_braille(pct_result* r, const char** out) {
    if (!r || !out) return fail_arg("pct_result_braille: NULL argument");
    *out = nullptr;
    return guarded([&] {
        if (!r->braille_ready) {
            r->braille = percept::to_braille(r->phrase);
            r->braille_ready = true;
        }
        *out = r->braille.c_str();
    });
}

size_t pct_result_detection_count(const pct_result* r) {
    return r ? r->frame.detections.size() : 0;
}

pct_status pct_generate_shapes(const char* dir, int count, uint64_t seed, int max_shapes) {
    if (!dir) return fail_arg("pct_generate_shapes: NULL directory");
    return guarded([&] { percept::generate_shapes_dataset(dir, count, seed, max_shapes); });
}

pct_status pct_train_toy(const pct_pipeline* p, const char* dataset_dir, const char* weights_out,
                         char** metrics_json) {
    if (!p || !dataset_dir || !metrics_json) return fail_arg("pct_train_toy: NULL argument");
    *metrics_json = nullptr;
    return guarded([&] {
        const std::string dest = weights_out ? weights_out : p->cfg.weights_path;
        const std::string metrics = percept::train_toy(p->cfg, dataset_dir, dest, std::cerr);
        *metrics_json = dup_for_c(metrics);
    });
}

pct_status pct_evaluate(const pct_pipeline* p, const char* dataset_dir,
                        const char* detections_path, char** report_json) {
    if (!p || !dataset_dir || !report_json) return fail_arg("pct_evaluate: NULL argument");
    *report_json = nullptr;
    return guarded([&] {
        const std::string report =
            percept::evaluate(p->cfg, dataset_dir, detections_path ? detections_path : "");
        *report_json = dup_for_c(report);
    });
}

pct_status pct_bench(const pct_pipeline* p, const char* image_path, int iterations,
                     char** report_json) {
    if (!p || !image_path || !report_json) return fail_arg("pct_bench: NULL argument");
    *report_json = nullptr;
    return guarded([&] {
        const std::string report = percept::bench(p->cfg, image_path, iterations);
        *report_json = dup_for_c(report);
    });
}

void pct_string_free(char* s) { std::free(s); }

}  // extern "C"
