// emfv: operator tool over the C interface.
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "emfv/emfv.h"
#include "json.hpp"

namespace {

using json = nlohmann::json;

constexpr const char* kUsage =
    "usage: emfv <verb> [flags]\n"
    "verbs: train extract build enroll identify authenticate verify bench serve\n"
    "run 'emfv <verb> --help' for the flags of one verb\n";

struct Failure {
  emfv_status status;
};

// Throws so every verb can bail out through one exit path.
void check(emfv_status s) {
  if (s != EMFV_OK) throw Failure{s};
}

int report_failure() {
  json err{{"code", emfv_last_error_code()},
           {"message", emfv_last_error_message()}};
  std::cerr << err.dump() << "\n";
  return 1;
}

struct IndexHandle {
  emfv_index* p = nullptr;
  ~IndexHandle() { emfv_index_free(p); }
};
struct VectorsHandle {
  emfv_vectors* p = nullptr;
  ~VectorsHandle() { emfv_vectors_free(p); }
};
struct NetworkHandle {
  emfv_network* p = nullptr;
  ~NetworkHandle() { emfv_network_free(p); }
};

std::vector<double> record(const emfv_vectors* v, std::size_t i) {
  std::size_t dim = 0;
  const double* data = emfv_vectors_data(v, i, &dim);
  return {data, data + dim};
}

json band_list(const emfv_index* index) {
  json bands = json::array();
  for (std::size_t i = 0; i < emfv_index_person_count(index); ++i) {
    const char* person = nullptr;
    double low = 0, high = 0;
    check(emfv_index_band(index, i, &person, &low, &high));
    bands.push_back({{"person_id", person}, {"band", {low, high}}});
  }
  return bands;
}

emfv_mean_policy parse_policy(const std::string& name) {
  if (name == "frozen") return EMFV_MEAN_FROZEN;
  if (name == "recompute") return EMFV_MEAN_RECOMPUTE;
  throw CLI::ValidationError("--mean-policy", "must be frozen or recompute");
}

struct Args {
  std::uint64_t seed = 0;
  std::string data, out, weights, gallery, snapshot, person, vectors;
  std::string format = "table", mean_policy = "frozen";
  std::string config, listen, token;
  std::vector<std::string> images;
  std::optional<double> distance;
  double lr = 0.05, margin = 0.05, halfwidth = 0.02, tie_tolerance = 0.0;
  std::size_t epochs = 20, batch = 8, side = 32, features = 256;
  std::size_t synthetic_classes = 0, per_class = 50;
  std::size_t max_neighbors = 5, probes = 1000, persons = 4096, queries = 1000;
  bool timing = true, verbose = false;
};

int run_train(const Args& a) {
  std::string dir = a.data;
  if (a.synthetic_classes > 0) {
    if (dir.empty()) throw CLI::ValidationError("--data", "needed with --synthetic");
    check(emfv_write_synthetic_faces(dir.c_str(), a.synthetic_classes,
                                     a.per_class, a.side, a.seed));
  }
  std::size_t classes = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_directory()) ++classes;
  }
  NetworkHandle net;
  check(emfv_network_create(a.side, a.features, classes, a.seed, &net.p));
  double acc = 0, loss = 0;
  check(emfv_network_train_directory(net.p, dir.c_str(), a.lr, a.epochs,
                                     a.batch, a.seed, &acc, &loss));
  check(emfv_network_save(net.p, a.out.c_str()));
  std::cout << json{{"classes", classes},
                    {"training_accuracy", acc},
                    {"loss", loss},
                    {"weights", a.out}}
                   .dump()
            << "\n";
  return 0;
}

int run_extract(const Args& a) {
  if (!a.vectors.empty()) {
    VectorsHandle v;
    check(emfv_vectors_read(a.vectors.c_str(), &v.p));
    for (std::size_t i = 0; i < emfv_vectors_count(v.p); ++i) {
      auto x = record(v.p, i);
      std::vector<double> n(x.size());
      check(emfv_normalize(x.data(), x.size(), n.data()));
      std::cout << json{{"id", emfv_vectors_id(v.p, i)}, {"vector", n}}.dump()
                << "\n";
    }
    return 0;
  }
  if (a.weights.empty() || a.images.empty()) {
    throw CLI::ValidationError("extract", "needs --vectors, or --weights with --image");
  }
  NetworkHandle net;
  check(emfv_network_load(a.weights.c_str(), &net.p));
  std::vector<double> buf(emfv_network_feature_dimension(net.p));
  for (const auto& img : a.images) {
    check(emfv_network_extract_pgm(net.p, img.c_str(), buf.data(), buf.size()));
    // Labeled layout: <person>/<image>.pgm
    std::string id = a.person;
    if (id.empty()) id = std::filesystem::path(img).parent_path().filename().string();
    if (id.empty()) id = std::filesystem::path(img).stem().string();
    std::cout << json{{"id", id},
                      {"vector", buf}}
                     .dump()
              << "\n";
  }
  return 0;
}

int run_build(const Args& a) {
  VectorsHandle v;
  check(emfv_vectors_read(a.gallery.c_str(), &v.p));
  emfv_index_options opts{a.margin, a.halfwidth, a.tie_tolerance};
  IndexHandle index;
  check(emfv_index_build(v.p, &opts, &index.p));
  check(emfv_index_save(index.p, a.out.c_str()));
  std::cout << json{{"persons", emfv_index_person_count(index.p)},
                    {"dimension", emfv_index_dimension(index.p)},
                    {"version", emfv_index_version(index.p)},
                    {"bands", band_list(index.p)}}
                   .dump()
            << "\n";
  return 0;
}

int run_enroll(const Args& a) {
  IndexHandle index;
  check(emfv_index_load(a.snapshot.c_str(), &index.p));
  VectorsHandle v;
  check(emfv_vectors_read(a.vectors.c_str(), &v.p));
  std::vector<double> samples;
  std::size_t dim = 0;
  for (std::size_t i = 0; i < emfv_vectors_count(v.p); ++i) {
    auto x = record(v.p, i);
    if (i == 0) dim = x.size();
    if (x.size() != dim) {
      throw CLI::ValidationError("--vectors", "samples differ in length");
    }
    samples.insert(samples.end(), x.begin(), x.end());
  }
  if (dim == 0) throw CLI::ValidationError("--vectors", "no samples");
  double low = 0, high = 0;
  check(emfv_enroll(index.p, a.person.c_str(), samples.data(),
                    samples.size() / dim, dim, parse_policy(a.mean_policy), &low,
                    &high));
  const std::string out = a.out.empty() ? a.snapshot : a.out;
  check(emfv_index_save(index.p, out.c_str()));
  std::cout << json{{"person_id", a.person},
                    {"version", emfv_index_version(index.p)},
                    {"band", {low, high}}}
                   .dump()
            << "\n";
  return 0;
}

std::string take(char* s) {
  std::string out(s);
  emfv_string_free(s);
  return out;
}

int run_identify(const Args& a) {
  IndexHandle index;
  check(emfv_index_load(a.snapshot.c_str(), &index.p));
  char* out = nullptr;
  if (a.distance) {
    check(emfv_identify_distance(index.p, *a.distance, a.max_neighbors, &out));
    std::cout << take(out) << "\n";
    return 0;
  }
  VectorsHandle v;
  check(emfv_vectors_read(a.vectors.c_str(), &v.p));
  for (std::size_t i = 0; i < emfv_vectors_count(v.p); ++i) {
    auto x = record(v.p, i);
    check(emfv_identify(index.p, x.data(), x.size(), a.max_neighbors, &out));
    json r = json::parse(take(out));
    r["probe"] = emfv_vectors_id(v.p, i);
    std::cout << r.dump() << "\n";
  }
  return 0;
}

int run_authenticate(const Args& a) {
  IndexHandle index;
  check(emfv_index_load(a.snapshot.c_str(), &index.p));
  auto emit = [&](int accepted, double d, const char* probe) {
    json r{{"decision", accepted != 0 ? "accept" : "reject"},
           {"person_id", a.person},
           {"distance", d}};
    if (probe != nullptr) r["probe"] = probe;
    std::cout << r.dump() << "\n";
  };
  int accepted = 0;
  if (a.distance) {
    check(emfv_authenticate_distance(index.p, a.person.c_str(), *a.distance,
                                     &accepted));
    emit(accepted, *a.distance, nullptr);
    return 0;
  }
  VectorsHandle v;
  check(emfv_vectors_read(a.vectors.c_str(), &v.p));
  for (std::size_t i = 0; i < emfv_vectors_count(v.p); ++i) {
    auto x = record(v.p, i);
    double d = 0;
    check(emfv_authenticate(index.p, a.person.c_str(), x.data(), x.size(),
                            &accepted, &d));
    emit(accepted, d, emfv_vectors_id(v.p, i));
  }
  return 0;
}

int run_verify(const Args& a) {
  char* out = nullptr;
  const emfv_status s =
      emfv_verify_file(a.snapshot.c_str(), a.probes, a.seed, &out);
  if (out == nullptr) check(s);
  const json report = json::parse(take(out));
  std::cout << report.dump() << "\n";
  std::cout << report["mismatches"].get<std::size_t>() << " mismatches, "
            << report["overlaps"].size() << " overlapping band pairs\n";
  if (s == EMFV_ERR_VERIFY_FAILED) {
    report_failure();
    return 1;
  }
  check(s);
  return 0;
}

int run_bench(const Args& a) {
  std::vector<emfv_bench_row> rows(64);
  std::size_t n = 0;
  check(emfv_bench(a.persons, a.queries, a.seed, rows.data(), rows.size(), &n));
  rows.resize(n);
  if (a.format == "csv") {
    std::cout << "bands,queries,mean_comparisons,max_comparisons,bound";
    if (a.timing) std::cout << ",ns_per_query";
    std::cout << "\n";
    for (const auto& r : rows) {
      std::printf("%zu,%zu,%.4f,%zu,%zu", r.bands, r.queries,
                  r.mean_comparisons, r.max_comparisons, r.bound);
      if (a.timing) std::printf(",%.1f", r.nanos_per_query);
      std::printf("\n");
    }
    return 0;
  }
  std::printf("%8s %8s %10s %8s %6s", "bands", "queries", "mean_cmp",
              "max_cmp", "bound");
  if (a.timing) std::printf(" %12s", "ns/query");
  std::printf("\n");
  for (const auto& r : rows) {
    std::printf("%8zu %8zu %10.4f %8zu %6zu", r.bands, r.queries,
                r.mean_comparisons, r.max_comparisons, r.bound);
    if (a.timing) std::printf(" %12.1f", r.nanos_per_query);
    std::printf("\n");
  }
  return 0;
}

int run_serve(const Args& a) {
  auto opt = [](const std::string& s) { return s.empty() ? nullptr : s.c_str(); };
  emfv_service_options o{opt(a.config),  opt(a.listen),  opt(a.snapshot),
                         opt(a.token),   opt(a.weights), -1,
                         a.verbose ? 1 : 0};
  if (!a.mean_policy.empty()) o.mean_policy = parse_policy(a.mean_policy);
  check(emfv_serve(&o));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  static const std::vector<std::string> verbs{
      "train", "extract", "build", "enroll", "identify",
      "authenticate", "verify", "bench", "serve"};
  if (argc < 2) {
    std::cerr << kUsage;
    return 2;
  }
  const std::string verb = argv[1];
  if (verb == "--help" || verb == "-h") {
    std::cout << kUsage;
    return 0;
  }
  if (std::find(verbs.begin(), verbs.end(), verb) == verbs.end()) {
    std::cerr << "emfv: unknown verb '" << verb << "'\n" << kUsage;
    return 2;
  }

  Args a;
  CLI::App app{"emfv " + verb};
  app.name("emfv " + verb);
  app.add_option("--seed", a.seed, "RNG seed");

  if (verb == "train") {
    app.add_option("--data", a.data, "directory with one subdirectory per class")
        ->required();
    app.add_option("--out", a.out, "weights file to write")->required();
    app.add_option("--synthetic", a.synthetic_classes,
                   "first write this many synthetic classes into --data");
    app.add_option("--per-class", a.per_class, "synthetic images per class");
    app.add_option("--side", a.side, "image side in pixels");
    app.add_option("--features", a.features, "feature dimension");
    app.add_option("--epochs", a.epochs);
    app.add_option("--lr", a.lr);
    app.add_option("--batch", a.batch);
  } else if (verb == "extract") {
    app.add_option("--weights", a.weights);
    app.add_option("--image", a.images, "PGM image(s)");
    app.add_option("--person", a.person, "id for every image (default: parent directory)");
    app.add_option("--vectors", a.vectors, "vector file to normalize");
  } else if (verb == "build") {
    app.add_option("--gallery", a.gallery, "vector file, id = person")->required();
    app.add_option("--out", a.out, "snapshot to write")->required();
    app.add_option("--margin", a.margin);
    app.add_option("--halfwidth", a.halfwidth, "band half-width for zero-width persons");
    app.add_option("--tie-tolerance", a.tie_tolerance);
  } else if (verb == "enroll") {
    app.add_option("--snapshot", a.snapshot)->required();
    app.add_option("--person", a.person)->required();
    app.add_option("--vectors", a.vectors, "samples")->required();
    app.add_option("--mean-policy", a.mean_policy, "frozen or recompute");
    app.add_option("--out", a.out, "defaults to --snapshot");
  } else if (verb == "identify" || verb == "authenticate") {
    app.add_option("--snapshot", a.snapshot)->required();
    auto* d = app.add_option("--distance", a.distance, "precomputed distance to mean");
    auto* v = app.add_option("--vectors", a.vectors, "probe vector file");
    d->excludes(v);
    if (verb == "identify") {
      app.add_option("--max-neighbors", a.max_neighbors)
          ->check(CLI::PositiveNumber);
    } else {
      app.add_option("--person", a.person)->required();
    }
  } else if (verb == "verify") {
    app.add_option("--snapshot", a.snapshot)->required();
    app.add_option("--probes", a.probes, "random probes beyond the gallery");
  } else if (verb == "bench") {
    app.add_option("--persons", a.persons, "largest band count");
    app.add_option("--queries", a.queries);
    app.add_option("--format", a.format)->check(CLI::IsMember({"table", "csv"}));
    app.add_flag("!--no-timing", a.timing, "omit the wall-time column");
  } else if (verb == "serve") {
    a.mean_policy.clear();
    app.add_option("--config", a.config);
    app.add_option("--listen", a.listen, "host:port");
    app.add_option("--snapshot", a.snapshot);
    app.add_option("--token", a.token);
    app.add_option("--weights", a.weights);
    app.add_option("--mean-policy", a.mean_policy);
    app.add_flag("--verbose", a.verbose);
  }

  try {
    app.parse(argc - 1, argv + 1);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if ((verb == "identify" || verb == "authenticate") && !a.distance &&
        a.vectors.empty()) {
      throw CLI::ValidationError(verb, "needs --distance or --vectors");
    }
    if (verb == "train") return run_train(a);
    if (verb == "extract") return run_extract(a);
    if (verb == "build") return run_build(a);
    if (verb == "enroll") return run_enroll(a);
    if (verb == "identify") return run_identify(a);
    if (verb == "authenticate") return run_authenticate(a);
    if (verb == "verify") return run_verify(a);
    if (verb == "bench") return run_bench(a);
    return run_serve(a);
  } catch (const Failure&) {
    return report_failure();
  } catch (const CLI::Error& e) {
    std::cerr << json{{"code", "invalid_argument"}, {"message", e.what()}}.dump()
              << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << json{{"code", "io_error"}, {"message", e.what()}}.dump() << "\n";
    return 1;
  }
}
