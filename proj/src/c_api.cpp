#include "emfv/emfv.h"

#include <algorithm>
#include <atomic>
#include <csignal>
#include <cstdlib>
#include <cstring>
#include <iostream>
#include <map>
#include <string>
#include <utility>

#include "emfv/banded_index.hpp"
#include "emfv/bench.hpp"
#include "emfv/errors.hpp"
#include "emfv/neuralnet.hpp"
#include "emfv/service.hpp"
#include "emfv/store.hpp"
#include "emfv/synthetic.hpp"
#include "emfv/verify.hpp"
#include "json.hpp"

struct emfv_index {
  emfv::Snapshot snap;
};

struct emfv_network {
  emfv::Network net;
};

struct emfv_vectors {
  std::vector<emfv::VectorRecord> records;
};

namespace {

using json = nlohmann::json;

thread_local std::string g_error_code;
thread_local std::string g_error_message;

const std::map<std::string, emfv_status>& status_table() {
  static const std::map<std::string, emfv_status> table{
      {"invalid_argument", EMFV_ERR_INVALID_ARGUMENT},
      {"dimension_mismatch", EMFV_ERR_DIMENSION},
      {"invalid_vector", EMFV_ERR_INVALID_VECTOR},
      {"empty_gallery", EMFV_ERR_EMPTY_GALLERY},
      {"degenerate_vector", EMFV_ERR_DEGENERATE_VECTOR},
      {"layer_shape", EMFV_ERR_LAYER_SHAPE},
      {"label_out_of_range", EMFV_ERR_LABEL},
      {"band_collision", EMFV_ERR_BAND_COLLISION},
      {"duplicate_person", EMFV_ERR_DUPLICATE_PERSON},
      {"unknown_person", EMFV_ERR_UNKNOWN_PERSON},
      {"format_error", EMFV_ERR_FORMAT},
      {"invariant_violation", EMFV_ERR_INVARIANT},
      {"io_error", EMFV_ERR_IO},
      {"serialization_error", EMFV_ERR_SERIALIZATION},
  };
  return table;
}

emfv_status fail(emfv_status status, std::string code, std::string message) {
  g_error_code = std::move(code);
  g_error_message = std::move(message);
  return status;
}

emfv_status invalid(const char* message) {
  return fail(EMFV_ERR_INVALID_ARGUMENT, "invalid_argument", message);
}

template <typename F>
emfv_status guarded(F&& body) {
  try {
    g_error_code.clear();
    g_error_message.clear();
    return body();
  } catch (const emfv::Error& e) {
    const auto& t = status_table();
    const auto it = t.find(e.code());
    return fail(it == t.end() ? EMFV_ERR_INTERNAL : it->second, e.code(),
                e.what());
  } catch (const std::bad_alloc&) {
    return fail(EMFV_ERR_INTERNAL, "internal", "out of memory");
  } catch (const std::exception& e) {
    return fail(EMFV_ERR_INTERNAL, "internal", e.what());
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

emfv::FeatureVector probe_vector(const double* probe, std::size_t dimension) {
  return emfv::normalize(
      emfv::FeatureVector(std::vector<double>(probe, probe + dimension)));
}

emfv::IndexOptions to_options(const emfv_index_options* o) {
  emfv::IndexOptions opts;
  if (o != nullptr) {
    opts.margin = o->margin;
    opts.single_sample_halfwidth = o->single_sample_halfwidth;
    opts.tie_tolerance = o->tie_tolerance;
  }
  return opts;
}

void fill(const emfv::BandedIndex& index, const emfv::ClassificationResult& r,
          emfv_classification* out) {
  // Point at the index's own copies so the strings outlive `r`.
  auto own = [&](const emfv::PersonId& p) {
    return index.find_band(p)->person.str().c_str();
  };
  *out = emfv_classification{EMFV_EMPTY_INDEX, r.distance_to_mean, nullptr,
                             nullptr, 0.0};
  if (const auto* in = std::get_if<emfv::InBand>(&r.outcome)) {
    out->outcome = EMFV_IN_BAND;
    out->person = own(in->person);
  } else if (const auto* near = std::get_if<emfv::NearestBand>(&r.outcome)) {
    out->outcome = EMFV_NEAREST_BAND;
    out->person = own(near->person);
    out->gap = near->gap;
  } else if (const auto* tie = std::get_if<emfv::AmbiguousTie>(&r.outcome)) {
    out->outcome = EMFV_AMBIGUOUS_TIE;
    out->person = own(tie->lower);
    out->other = own(tie->upper);
  }
}

std::string identify_json(const emfv::IdentifyResult& r, std::uint64_t version) {
  json matches = json::array();
  for (const auto& n : r.matches) {
    matches.push_back({{"person_id", n.person.str()},
                       {"interval_distance", n.interval_distance}});
  }
  json out{{"outcome", emfv::outcome_name(r.classification.outcome)},
           {"distance", r.classification.distance_to_mean},
           {"matches", std::move(matches)},
           {"version", version}};
  if (const auto* tie = std::get_if<emfv::AmbiguousTie>(&r.classification.outcome)) {
    out["tie"] = {tie->lower.str(), tie->upper.str()};
  }
  return out.dump();
}

std::atomic<emfv::Service*> g_serving{nullptr};

extern "C" void on_stop_signal(int) {
  if (auto* s = g_serving.load()) s->stop();
}

}  // namespace

extern "C" {

const char* emfv_version(void) { return "1.0.0"; }
const char* emfv_last_error_code(void) { return g_error_code.c_str(); }
const char* emfv_last_error_message(void) { return g_error_message.c_str(); }
void emfv_string_free(char* s) { std::free(s); }

const char* emfv_outcome_name(emfv_outcome outcome) {
  switch (outcome) {
    case EMFV_IN_BAND: return "in_band";
    case EMFV_NEAREST_BAND: return "nearest_band";
    case EMFV_AMBIGUOUS_TIE: return "ambiguous_tie";
    case EMFV_EMPTY_INDEX: return "empty_index";
  }
  return "unknown";
}

emfv_status emfv_vectors_read(const char* path, emfv_vectors** out) {
  if (path == nullptr || out == nullptr) return invalid("null argument");
  return guarded([&] {
    *out = new emfv_vectors{emfv::read_vector_file(path)};
    return EMFV_OK;
  });
}

void emfv_vectors_free(emfv_vectors* v) { delete v; }

size_t emfv_vectors_count(const emfv_vectors* v) {
  return v == nullptr ? 0 : v->records.size();
}

const char* emfv_vectors_id(const emfv_vectors* v, size_t i) {
  if (v == nullptr || i >= v->records.size()) return nullptr;
  return v->records[i].id.c_str();
}

const double* emfv_vectors_data(const emfv_vectors* v, size_t i,
                                size_t* dimension) {
  if (v == nullptr || i >= v->records.size()) return nullptr;
  if (dimension != nullptr) *dimension = v->records[i].values.size();
  return v->records[i].values.data();
}

emfv_status emfv_normalize(const double* x, size_t dimension, double* out) {
  if (x == nullptr || out == nullptr) return invalid("null argument");
  return guarded([&] {
    const auto n = probe_vector(x, dimension);
    std::copy(n.values().begin(), n.values().end(), out);
    return EMFV_OK;
  });
}

void emfv_index_options_default(emfv_index_options* options) {
  if (options == nullptr) return;
  const emfv::IndexOptions d;
  *options = {d.margin, d.single_sample_halfwidth, d.tie_tolerance};
}

emfv_status emfv_index_build(const emfv_vectors* gallery,
                             const emfv_index_options* options,
                             emfv_index** out) {
  if (gallery == nullptr || out == nullptr) return invalid("null argument");
  return guarded([&] {
    std::map<std::string, std::vector<emfv::FeatureVector>> grouped;
    for (const auto& r : gallery->records) {
      grouped[r.id].push_back(
          emfv::normalize(emfv::FeatureVector(r.values)));
    }
    emfv::Gallery g;
    for (auto& [id, samples] : grouped) {
      g = g.with_person(emfv::PersonId(id), std::move(samples));
    }
    auto index = emfv::build_index(g, to_options(options));
    *out = new emfv_index{{std::move(index), std::move(g)}};
    return EMFV_OK;
  });
}

emfv_status emfv_index_load(const char* path, emfv_index** out) {
  if (path == nullptr || out == nullptr) return invalid("null argument");
  return guarded([&] {
    *out = new emfv_index{emfv::load_snapshot(path)};
    return EMFV_OK;
  });
}

emfv_status emfv_index_save(const emfv_index* index, const char* path) {
  if (index == nullptr || path == nullptr) return invalid("null argument");
  return guarded([&] {
    emfv::save_snapshot(index->snap.index, index->snap.gallery, path);
    return EMFV_OK;
  });
}

void emfv_index_free(emfv_index* index) { delete index; }

size_t emfv_index_person_count(const emfv_index* index) {
  return index == nullptr ? 0 : index->snap.index.bands().size();
}

size_t emfv_index_dimension(const emfv_index* index) {
  return index == nullptr ? 0 : index->snap.index.dimension();
}

uint64_t emfv_index_version(const emfv_index* index) {
  return index == nullptr ? 0 : index->snap.index.version();
}

emfv_status emfv_index_band(const emfv_index* index, size_t i,
                            const char** person, double* low, double* high) {
  if (index == nullptr) return invalid("null index");
  const auto bands = index->snap.index.bands();
  if (i >= bands.size()) return invalid("band index out of range");
  if (person != nullptr) *person = bands[i].person.str().c_str();
  if (low != nullptr) *low = bands[i].low;
  if (high != nullptr) *high = bands[i].high;
  return EMFV_OK;
}

emfv_status emfv_classify(const emfv_index* index, const double* probe,
                          size_t dimension, emfv_classification* out) {
  if (index == nullptr || probe == nullptr || out == nullptr) {
    return invalid("null argument");
  }
  return guarded([&] {
    const auto& ix = index->snap.index;
    fill(ix, ix.classify(probe_vector(probe, dimension)), out);
    return EMFV_OK;
  });
}

emfv_status emfv_classify_distance(const emfv_index* index, double distance,
                                   emfv_classification* out) {
  if (index == nullptr || out == nullptr) return invalid("null argument");
  return guarded([&] {
    const auto& ix = index->snap.index;
    fill(ix, ix.classify_distance(distance), out);
    return EMFV_OK;
  });
}

emfv_status emfv_lookup_cost_distance(const emfv_index* index, double distance,
                                      size_t* comparisons) {
  if (index == nullptr || comparisons == nullptr) return invalid("null argument");
  return guarded([&] {
    *comparisons = index->snap.index.lookup_cost_distance(distance);
    return EMFV_OK;
  });
}

emfv_status emfv_authenticate(const emfv_index* index, const char* person,
                              const double* probe, size_t dimension,
                              int* accepted, double* distance) {
  if (index == nullptr || person == nullptr || probe == nullptr ||
      accepted == nullptr) {
    return invalid("null argument");
  }
  return guarded([&] {
    const auto& ix = index->snap.index;
    const emfv::PersonId id(person);
    const double d = ix.distance_to_mean(probe_vector(probe, dimension));
    *accepted = ix.authenticate_distance(id, d) ? 1 : 0;
    if (distance != nullptr) *distance = d;
    return EMFV_OK;
  });
}

emfv_status emfv_authenticate_distance(const emfv_index* index,
                                       const char* person, double distance,
                                       int* accepted) {
  if (index == nullptr || person == nullptr || accepted == nullptr) {
    return invalid("null argument");
  }
  return guarded([&] {
    *accepted = index->snap.index.authenticate_distance(emfv::PersonId(person),
                                                        distance)
                    ? 1
                    : 0;
    return EMFV_OK;
  });
}

emfv_status emfv_identify(const emfv_index* index, const double* probe,
                          size_t dimension, size_t max_neighbors, char** out) {
  if (index == nullptr || probe == nullptr || out == nullptr) {
    return invalid("null argument");
  }
  return guarded([&] {
    const auto& ix = index->snap.index;
    *out = dup_string(identify_json(
        ix.identify(probe_vector(probe, dimension), max_neighbors),
        ix.version()));
    return EMFV_OK;
  });
}

emfv_status emfv_identify_distance(const emfv_index* index, double distance,
                                   size_t max_neighbors, char** out) {
  if (index == nullptr || out == nullptr) return invalid("null argument");
  return guarded([&] {
    const auto& ix = index->snap.index;
    *out = dup_string(
        identify_json(ix.identify_distance(distance, max_neighbors), ix.version()));
    return EMFV_OK;
  });
}

emfv_status emfv_enroll(emfv_index* index, const char* person,
                        const double* samples, size_t count, size_t dimension,
                        emfv_mean_policy policy, double* low, double* high) {
  if (index == nullptr || person == nullptr || samples == nullptr) {
    return invalid("null argument");
  }
  return guarded([&] {
    std::vector<emfv::FeatureVector> vs;
    for (size_t i = 0; i < count; ++i) {
      vs.push_back(probe_vector(samples + i * dimension, dimension));
    }
    auto e = emfv::enroll(index->snap.index, index->snap.gallery,
                          emfv::PersonId(person), std::move(vs),
                          policy == EMFV_MEAN_RECOMPUTE
                              ? emfv::MeanPolicy::kRecompute
                              : emfv::MeanPolicy::kFrozen);
    if (low != nullptr) *low = e.band.low;
    if (high != nullptr) *high = e.band.high;
    index->snap = {std::move(e.index), std::move(e.gallery)};
    return EMFV_OK;
  });
}

emfv_status emfv_verify_file(const char* path, size_t random_probes,
                             uint64_t seed, char** out) {
  if (path == nullptr || out == nullptr) return invalid("null argument");
  return guarded([&] {
    const auto doc = emfv::parse_snapshot_document(emfv::read_file(path));
    const auto r = emfv::verify_snapshot(doc, random_probes, seed);
    json overlaps = json::array();
    for (const auto& [a, b] : r.overlaps) overlaps.push_back({a, b});
    json mismatches = json::array();
    for (const auto& m : r.oracle.mismatches) {
      mismatches.push_back(
          {{"probe", m.probe}, {"index", m.fast}, {"oracle", m.reference}});
    }
    json report{{"persons", r.persons},
                {"samples", r.samples},
                {"probes", r.oracle.probes},
                {"overlaps", std::move(overlaps)},
                {"samples_outside_band", r.samples_outside_band},
                {"mismatches", r.oracle.mismatches.size()},
                {"mismatch_details", std::move(mismatches)},
                {"ok", r.ok()}};
    if (!r.load_error.empty()) report["load_error"] = r.load_error;
    *out = dup_string(report.dump());
    if (!r.ok()) {
      return fail(EMFV_ERR_VERIFY_FAILED, "verify_failed",
                  "snapshot failed verification");
    }
    return EMFV_OK;
  });
}

emfv_status emfv_bench(size_t max_bands, size_t queries, uint64_t seed,
                       emfv_bench_row* rows, size_t capacity, size_t* count) {
  if (rows == nullptr || count == nullptr) return invalid("null argument");
  if (max_bands < 2) return invalid("bench needs at least 2 bands");
  return guarded([&] {
    const auto sizes = emfv::bench_sizes(max_bands);
    const auto result = emfv::run_bench(sizes, queries, seed);
    *count = std::min(capacity, result.size());
    for (size_t i = 0; i < *count; ++i) {
      const auto& r = result[i];
      rows[i] = {r.bands, r.queries, r.mean_comparisons, r.max_comparisons,
                 r.bound, r.nanos_per_query};
    }
    return EMFV_OK;
  });
}

emfv_status emfv_network_create(size_t image_side, size_t feature_dimension,
                                size_t classes, uint64_t seed,
                                emfv_network** out) {
  if (out == nullptr) return invalid("null argument");
  return guarded([&] {
    emfv::ArchitectureConfig cfg;
    cfg.image_side = image_side;
    cfg.feature_dimension = feature_dimension;
    cfg.num_classes = classes;
    *out = new emfv_network{emfv::default_network(cfg, seed)};
    return EMFV_OK;
  });
}

emfv_status emfv_network_load(const char* path, emfv_network** out) {
  if (path == nullptr || out == nullptr) return invalid("null argument");
  return guarded([&] {
    *out = new emfv_network{emfv::load_network(path)};
    return EMFV_OK;
  });
}

emfv_status emfv_network_save(const emfv_network* net, const char* path) {
  if (net == nullptr || path == nullptr) return invalid("null argument");
  return guarded([&] {
    emfv::save_network(net->net, path);
    return EMFV_OK;
  });
}

void emfv_network_free(emfv_network* net) { delete net; }

size_t emfv_network_feature_dimension(const emfv_network* net) {
  return net == nullptr ? 0 : net->net.feature_dimension();
}

size_t emfv_network_image_side(const emfv_network* net) {
  return net == nullptr ? 0 : net->net.input_shape().width;
}

emfv_status emfv_network_train_directory(emfv_network* net, const char* dir,
                                         double learning_rate, size_t epochs,
                                         size_t batch_size, uint64_t seed,
                                         double* accuracy, double* loss) {
  if (net == nullptr || dir == nullptr) return invalid("null argument");
  return guarded([&] {
    const auto data = emfv::load_labeled_directory(dir);
    emfv::TrainingConfig cfg;
    cfg.learning_rate = learning_rate;
    cfg.epochs = epochs;
    cfg.batch_size = batch_size;
    cfg.seed = seed;
    auto result = emfv::train(net->net, data.images, cfg);
    if (accuracy != nullptr) *accuracy = emfv::accuracy(result.network, data.images);
    if (loss != nullptr) *loss = result.loss_history.back();
    net->net = std::move(result.network);
    return EMFV_OK;
  });
}

emfv_status emfv_network_extract_pgm(const emfv_network* net, const char* path,
                                     double* out, size_t capacity) {
  if (net == nullptr || path == nullptr || out == nullptr) {
    return invalid("null argument");
  }
  return guarded([&] {
    const auto features =
        emfv::normalize(net->net.extract_features(emfv::read_pgm(path)));
    if (capacity < features.dimension()) {
      return invalid("output buffer smaller than the feature dimension");
    }
    std::copy(features.values().begin(), features.values().end(), out);
    return EMFV_OK;
  });
}

emfv_status emfv_write_synthetic_faces(const char* dir, size_t classes,
                                       size_t per_class, size_t side,
                                       uint64_t seed) {
  if (dir == nullptr) return invalid("null argument");
  return guarded([&] {
    emfv::write_labeled_directory(
        emfv::synthetic::face_like_images(classes, per_class, side, seed), dir);
    return EMFV_OK;
  });
}

emfv_status emfv_serve(const emfv_service_options* options) {
  if (options == nullptr) return invalid("null argument");
  return guarded([&] {
    emfv::ServiceConfig cfg;
    if (options->config_path != nullptr) {
      cfg = emfv::load_service_config(options->config_path);
    }
    emfv::apply_env_overrides(cfg, [](const char* k) { return std::getenv(k); });
    if (options->listen != nullptr) cfg.listen_address = options->listen;
    if (options->snapshot != nullptr) cfg.snapshot_path = options->snapshot;
    if (options->token != nullptr) cfg.bearer_token = options->token;
    if (options->weights != nullptr) cfg.weights_path = options->weights;
    if (options->mean_policy == EMFV_MEAN_FROZEN) {
      cfg.mean_policy = emfv::MeanPolicy::kFrozen;
    } else if (options->mean_policy == EMFV_MEAN_RECOMPUTE) {
      cfg.mean_policy = emfv::MeanPolicy::kRecompute;
    }
    if (options->verbose != 0) cfg.verbose = true;

    emfv::Service service(std::move(cfg), &std::cerr);
    g_serving.store(&service);
    std::signal(SIGINT, on_stop_signal);
    std::signal(SIGTERM, on_stop_signal);
    try {
      service.run();
    } catch (...) {
      g_serving.store(nullptr);
      throw;
    }
    g_serving.store(nullptr);
    return EMFV_OK;
  });
}

}  // extern "C"
