/* percept: CNN-based object recognition for assistive frame pipelines.
 *
 * The library lives behind this flat C interface: opaque handles, status
 * codes, and strings owned by the handle that produced them (valid until
 * that handle is freed, or pct_string_free for the char** outputs). No
 * exceptions cross this boundary and no global state is shared beyond a
 * thread-local error message.
 *
 * Typical flow:
 *   pct_pipeline_open("pipeline.json", &p);
 *   pct_engine_open(p, &e);
 *   pct_frame_load(e, "frame.ppm", &f);
 *   pct_engine_process(e, f, &r);
 *   puts(pct_result_json(r));
 */

#ifndef PERCEPT_H
#define PERCEPT_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum pct_status {
    PCT_OK = 0,
    PCT_E_IO,
    PCT_E_PARSE,
    PCT_E_INVALID_SHAPE,
    PCT_E_SHAPE_MISMATCH,
    PCT_E_INVALID_GEOMETRY,
    PCT_E_INVALID_HYPERPARAMETER,
    PCT_E_INVALID_LABEL,
    PCT_E_INVALID_ANNOTATION,
    PCT_E_INVALID_CONFIG,
    PCT_E_BAD_MAGIC,
    PCT_E_BAD_VERSION,
    PCT_E_BAD_MAXVAL,
    PCT_E_TRUNCATED,
    PCT_E_INVALID_INPUT,
    PCT_E_UNMAPPABLE_CHAR,
    PCT_E_INVALID_ARGUMENT,
    PCT_E_INTERNAL
} pct_status;

/* Message for the most recent failure on this thread. Never NULL. */
const char* pct_last_error(void);

/* Stable lowercase name for a status code, e.g. "shape-mismatch". */
const char* pct_status_name(pct_status s);

/* ------------------------------------------------------------------ */
/* pipeline configuration                                             */

typedef struct pct_pipeline pct_pipeline;

/* Loads a pipeline config (JSON) from disk. Relative paths inside it
 * resolve against its own directory. */
pct_status pct_pipeline_open(const char* config_path, pct_pipeline** out);
void pct_pipeline_free(pct_pipeline* p);

/* Command-line style overrides, applied before pct_engine_open. */
pct_status pct_pipeline_set_weights(pct_pipeline* p, const char* path);
/* Pass a negative value to leave a threshold as configured. */
pct_status pct_pipeline_set_thresholds(pct_pipeline* p, double conf, double iou);
pct_status pct_pipeline_set_seed(pct_pipeline* p, uint64_t seed);
/* Comma-separated subset of "json,braille,phrase". */
pct_status pct_pipeline_set_outputs(pct_pipeline* p, const char* modes);
/* The currently selected modes in emission order, same format. */
const char* pct_pipeline_outputs(const pct_pipeline* p);

/* ------------------------------------------------------------------ */
/* engine and frames                                                  */

typedef struct pct_engine pct_engine;
typedef struct pct_frame pct_frame;
typedef struct pct_result pct_result;

/* Builds the network described by the pipeline and loads its weights
 * (when the config names some; otherwise seeded random weights stand). */
pct_status pct_engine_open(const pct_pipeline* p, pct_engine** out);
void pct_engine_free(pct_engine* e);

/* 1 when the network ends in a detection head, else 0. */
int pct_engine_is_detector(const pct_engine* e);

/* Decodes a binary PPM frame and resizes it to the engine's input
 * resolution. The frame id is the file name without directory or
 * extension (or the explicit id for the memory variant). */
pct_status pct_frame_load(const pct_engine* e, const char* image_path, pct_frame** out);
pct_status pct_frame_from_memory(const pct_engine* e, const void* bytes, size_t len,
                                 const char* frame_id, pct_frame** out);
void pct_frame_free(pct_frame* f);

/* Runs detection on a prepared frame. Detector engines only. */
pct_status pct_engine_process(const pct_engine* e, const pct_frame* f, pct_result** out);
void pct_result_free(pct_result* r);

/* Renderings of one processed frame. The JSON line is canonical and
 * newline terminated; the phrase is a short scene description; braille
 * is the phrase transliterated to grade-1 cells (it can fail when a
 * label holds characters braille cannot express). Returned strings stay
 * valid until the result is freed. */
const char* pct_result_json(const pct_result* r);
const char* pct_result_phrase(const pct_result* r);
pct_status pct_result_braille(pct_result* r, const char** out);
size_t pct_result_detection_count(const pct_result* r);

/* ------------------------------------------------------------------ */
/* dataset, training, evaluation, benchmarking                        */

/* Writes a deterministic synthetic shapes dataset (frames plus
 * annotations) into dir. Frames hold 1..max_shapes shapes (max_shapes in
 * 1..3; 1 yields the single-object variant for detector training). */
pct_status pct_generate_shapes(const char* dir, int count, uint64_t seed, int max_shapes);

/* Trains the pipeline's network on a dataset directory and writes the
 * weights to weights_out (NULL falls back to the config's weights path).
 * Per-epoch progress goes to stderr. On success *metrics_json receives a
 * malloc'd one-line JSON summary; free it with pct_string_free. */
pct_status pct_train_toy(const pct_pipeline* p, const char* dataset_dir, const char* weights_out,
                         char** metrics_json);

/* Scores the pipeline's network on a dataset directory: mAP at IoU 0.5
 * for detectors, top-1 accuracy for classifiers. detections_path may
 * name previously emitted result JSON lines to score instead of running
 * the network; pass NULL to run it. */
pct_status pct_evaluate(const pct_pipeline* p, const char* dataset_dir,
                        const char* detections_path, char** report_json);

/* Times pipeline stages over repeated runs of one image. */
pct_status pct_bench(const pct_pipeline* p, const char* image_path, int iterations,
                     char** report_json);

void pct_string_free(char* s);

#ifdef __cplusplus
}
#endif

#endif /* PERCEPT_H */
