/* C interface to the emfv library. Every call returns an emfv_status; on
 * failure the thread-local emfv_last_error_code() / emfv_last_error_message()
 * describe what went wrong. Strings returned through char** are owned by
 * the caller and released with emfv_string_free(). */
#ifndef EMFV_EMFV_H
#define EMFV_EMFV_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define EMFV_API __declspec(dllexport)
#else
#define EMFV_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum emfv_status {
  EMFV_OK = 0,
  EMFV_ERR_INVALID_ARGUMENT = 1,
  EMFV_ERR_DIMENSION = 2,
  EMFV_ERR_INVALID_VECTOR = 3,
  EMFV_ERR_EMPTY_GALLERY = 4,
  EMFV_ERR_DEGENERATE_VECTOR = 5,
  EMFV_ERR_LAYER_SHAPE = 6,
  EMFV_ERR_LABEL = 7,
  EMFV_ERR_BAND_COLLISION = 8,
  EMFV_ERR_DUPLICATE_PERSON = 9,
  EMFV_ERR_UNKNOWN_PERSON = 10,
  EMFV_ERR_FORMAT = 11,
  EMFV_ERR_INVARIANT = 12,
  EMFV_ERR_IO = 13,
  EMFV_ERR_SERIALIZATION = 14,
  EMFV_ERR_VERIFY_FAILED = 15,
  EMFV_ERR_INTERNAL = 99
} emfv_status;

typedef enum emfv_outcome {
  EMFV_IN_BAND = 0,
  EMFV_NEAREST_BAND = 1,
  EMFV_AMBIGUOUS_TIE = 2,
  EMFV_EMPTY_INDEX = 3
} emfv_outcome;

typedef enum emfv_mean_policy {
  EMFV_MEAN_FROZEN = 0,
  EMFV_MEAN_RECOMPUTE = 1
} emfv_mean_policy;

typedef struct emfv_index emfv_index;     /* banded index plus its gallery */
typedef struct emfv_network emfv_network; /* feature extractor */
typedef struct emfv_vectors emfv_vectors; /* {"id", "vector"} records */

typedef struct emfv_index_options {
  double margin;
  double single_sample_halfwidth;
  double tie_tolerance;
} emfv_index_options;

/* Person strings point into the index and stay valid until it is freed or
 * enrolled into. `other` is set only for EMFV_AMBIGUOUS_TIE (upper band);
 * `gap` only for EMFV_NEAREST_BAND. */
typedef struct emfv_classification {
  emfv_outcome outcome;
  double distance;
  const char* person;
  const char* other;
  double gap;
} emfv_classification;

typedef struct emfv_bench_row {
  size_t bands;
  size_t queries;
  double mean_comparisons;
  size_t max_comparisons;
  size_t bound;
  double nanos_per_query;
} emfv_bench_row;

typedef struct emfv_service_options {
  const char* config_path; /* JSON config file, may be NULL */
  const char* listen;      /* host:port, NULL keeps config/env value */
  const char* snapshot;
  const char* token;
  const char* weights;
  int mean_policy;         /* -1 keeps config value */
  int verbose;
} emfv_service_options;

EMFV_API const char* emfv_version(void);
EMFV_API const char* emfv_last_error_code(void);
EMFV_API const char* emfv_last_error_message(void);
EMFV_API void emfv_string_free(char* s);
EMFV_API const char* emfv_outcome_name(emfv_outcome outcome);

/* ---- vectors ---- */

EMFV_API emfv_status emfv_vectors_read(const char* path, emfv_vectors** out);
EMFV_API void emfv_vectors_free(emfv_vectors* v);
EMFV_API size_t emfv_vectors_count(const emfv_vectors* v);
EMFV_API const char* emfv_vectors_id(const emfv_vectors* v, size_t i);
EMFV_API const double* emfv_vectors_data(const emfv_vectors* v, size_t i,
                                         size_t* dimension);

/* Unit-L2 copy of `x` into `out` (same length). */
EMFV_API emfv_status emfv_normalize(const double* x, size_t dimension,
                                    double* out);

/* ---- index ---- */

EMFV_API void emfv_index_options_default(emfv_index_options* options);

/* Groups records by id, normalizes every vector and builds the index. */
EMFV_API emfv_status emfv_index_build(const emfv_vectors* gallery,
                                      const emfv_index_options* options,
                                      emfv_index** out);
EMFV_API emfv_status emfv_index_load(const char* path, emfv_index** out);
EMFV_API emfv_status emfv_index_save(const emfv_index* index, const char* path);
EMFV_API void emfv_index_free(emfv_index* index);

EMFV_API size_t emfv_index_person_count(const emfv_index* index);
EMFV_API size_t emfv_index_dimension(const emfv_index* index);
EMFV_API uint64_t emfv_index_version(const emfv_index* index);
/* Bands in ascending order. */
EMFV_API emfv_status emfv_index_band(const emfv_index* index, size_t i,
                                     const char** person, double* low,
                                     double* high);

/* Probes are normalized before use. */
EMFV_API emfv_status emfv_classify(const emfv_index* index, const double* probe,
                                   size_t dimension, emfv_classification* out);
EMFV_API emfv_status emfv_classify_distance(const emfv_index* index,
                                            double distance,
                                            emfv_classification* out);
EMFV_API emfv_status emfv_lookup_cost_distance(const emfv_index* index,
                                               double distance,
                                               size_t* comparisons);

EMFV_API emfv_status emfv_authenticate(const emfv_index* index,
                                       const char* person, const double* probe,
                                       size_t dimension, int* accepted,
                                       double* distance);
EMFV_API emfv_status emfv_authenticate_distance(const emfv_index* index,
                                                const char* person,
                                                double distance, int* accepted);

/* JSON object {outcome, distance, matches: [{person_id,
 * interval_distance}], tie?, version}. */
EMFV_API emfv_status emfv_identify(const emfv_index* index, const double* probe,
                                   size_t dimension, size_t max_neighbors,
                                   char** json);
EMFV_API emfv_status emfv_identify_distance(const emfv_index* index,
                                            double distance,
                                            size_t max_neighbors, char** json);

/* Adds `person` with the given samples (row-major, count x dimension).
 * On failure the index is unchanged. */
EMFV_API emfv_status emfv_enroll(emfv_index* index, const char* person,
                                 const double* samples, size_t count,
                                 size_t dimension, emfv_mean_policy policy,
                                 double* low, double* high);

/* Checks a snapshot file against the brute-force oracles: pairwise band
 * disjointness, every sample inside its own band, and classify/identify
 * agreement on the gallery samples plus `random_probes` seeded probes.
 * Writes a JSON report; returns EMFV_ERR_VERIFY_FAILED on any problem. */
EMFV_API emfv_status emfv_verify_file(const char* path, size_t random_probes,
                                      uint64_t seed, char** report);

/* ---- bench ---- */

/* Sizes 2, 8, 64, ... up to max_bands. Fills at most `capacity` rows. */
EMFV_API emfv_status emfv_bench(size_t max_bands, size_t queries, uint64_t seed,
                                emfv_bench_row* rows, size_t capacity,
                                size_t* count);

/* ---- network ---- */

EMFV_API emfv_status emfv_network_create(size_t image_side,
                                         size_t feature_dimension,
                                         size_t classes, uint64_t seed,
                                         emfv_network** out);
EMFV_API emfv_status emfv_network_load(const char* path, emfv_network** out);
EMFV_API emfv_status emfv_network_save(const emfv_network* net,
                                       const char* path);
EMFV_API void emfv_network_free(emfv_network* net);
EMFV_API size_t emfv_network_feature_dimension(const emfv_network* net);
EMFV_API size_t emfv_network_image_side(const emfv_network* net);

/* Trains on a directory with one subdirectory of PGM images per class.
 * Reports training accuracy and mean loss after the last epoch. */
EMFV_API emfv_status emfv_network_train_directory(
    emfv_network* net, const char* dir, double learning_rate, size_t epochs,
    size_t batch_size, uint64_t seed, double* accuracy, double* loss);

/* Unit-L2 features of a PGM image; `out` holds feature_dimension values. */
EMFV_API emfv_status emfv_network_extract_pgm(const emfv_network* net,
                                              const char* path, double* out,
                                              size_t capacity);

/* Writes a labeled synthetic face-like image directory. */
EMFV_API emfv_status emfv_write_synthetic_faces(const char* dir, size_t classes,
                                                size_t per_class, size_t side,
                                                uint64_t seed);

/* ---- service ---- */

/* Blocks serving HTTP until the process is stopped. Logs to stderr. */
EMFV_API emfv_status emfv_serve(const emfv_service_options* options);

#ifdef __cplusplus
}
#endif

#endif
