#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"
#include "emfv/emfv.h"
#include "json.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("emfv_capi_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Two persons in 2-D: a clusters near the diagonal, b hugs the first axis.
// The mean sits close to a, so a's band lies below b's.
void write_gallery(const fs::path& path) {
  std::ofstream out(path);
  out << R"({"id": "a", "vector": [1.0, 1.0]})" << "\n"
      << R"({"id": "a", "vector": [1.0, 0.9]})" << "\n"
      << R"({"id": "b", "vector": [1.0, 0.05]})" << "\n"
      << R"({"id": "b", "vector": [1.0, 0.1]})" << "\n"
      << R"({"id": "a", "vector": [0.9, 1.0]})" << "\n";
}

}  // namespace

TEST_CASE("build, query, enroll and persist through the C interface") {
  const fs::path dir = temp_dir("flow");
  write_gallery(dir / "g.jsonl");

  emfv_vectors* v = nullptr;
  REQUIRE(emfv_vectors_read((dir / "g.jsonl").c_str(), &v) == EMFV_OK);
  CHECK(emfv_vectors_count(v) == 5);
  CHECK(std::string(emfv_vectors_id(v, 2)) == "b");

  emfv_index_options opts;
  emfv_index_options_default(&opts);
  CHECK(opts.margin == 0.05);
  emfv_index* idx = nullptr;
  REQUIRE(emfv_index_build(v, &opts, &idx) == EMFV_OK);
  CHECK(emfv_index_person_count(idx) == 2);
  CHECK(emfv_index_dimension(idx) == 2);
  CHECK(emfv_index_version(idx) == 1);

  const char* person = nullptr;
  double low = 0, high = 0;
  REQUIRE(emfv_index_band(idx, 0, &person, &low, &high) == EMFV_OK);
  CHECK(low <= high);
  CHECK(emfv_index_band(idx, 5, &person, &low, &high) == EMFV_ERR_INVALID_ARGUMENT);

  // A gallery sample classifies into its own band.
  std::size_t dim = 0;
  const double* sample = emfv_vectors_data(v, 0, &dim);
  emfv_classification c;
  REQUIRE(emfv_classify(idx, sample, dim, &c) == EMFV_OK);
  CHECK(c.outcome == EMFV_IN_BAND);
  CHECK(std::string(c.person) == "a");
  CHECK(std::string(emfv_outcome_name(c.outcome)) == "in_band");

  REQUIRE(emfv_classify_distance(idx, low, &c) == EMFV_OK);
  CHECK(c.outcome == EMFV_IN_BAND);

  int accepted = -1;
  double d = 0;
  REQUIRE(emfv_authenticate(idx, "a", sample, dim, &accepted, &d) == EMFV_OK);
  CHECK(accepted == 1);
  CHECK(emfv_authenticate_distance(idx, "zz", 0.1, &accepted) ==
        EMFV_ERR_UNKNOWN_PERSON);
  CHECK(std::string(emfv_last_error_code()) == "unknown_person");
  CHECK(std::strlen(emfv_last_error_message()) > 0);

  char* out = nullptr;
  REQUIRE(emfv_identify(idx, sample, dim, 2, &out) == EMFV_OK);
  const json r = json::parse(out);
  emfv_string_free(out);
  CHECK(r["matches"][0]["person_id"] == "a");
  CHECK(r["matches"].size() == 2);

  const double wrong[3] = {1, 1, 1};
  CHECK(emfv_classify(idx, wrong, 3, &c) == EMFV_ERR_DIMENSION);
  const double zero[2] = {0, 0};
  CHECK(emfv_classify(idx, zero, 2, &c) == EMFV_ERR_DEGENERATE_VECTOR);
  CHECK(emfv_classify(nullptr, zero, 2, &c) == EMFV_ERR_INVALID_ARGUMENT);

  // Duplicate enrollment fails and leaves the handle as it was.
  CHECK(emfv_enroll(idx, "a", sample, 1, dim, EMFV_MEAN_FROZEN, &low, &high) ==
        EMFV_ERR_DUPLICATE_PERSON);
  CHECK(emfv_index_version(idx) == 1);

  REQUIRE(emfv_index_save(idx, (dir / "snap.json").c_str()) == EMFV_OK);
  emfv_index* loaded = nullptr;
  REQUIRE(emfv_index_load((dir / "snap.json").c_str(), &loaded) == EMFV_OK);
  CHECK(emfv_index_person_count(loaded) == 2);

  char* report = nullptr;
  CHECK(emfv_verify_file((dir / "snap.json").c_str(), 500, 1, &report) == EMFV_OK);
  REQUIRE(report != nullptr);
  CHECK(json::parse(report)["mismatches"] == 0);
  emfv_string_free(report);

  CHECK(emfv_index_load((dir / "missing.json").c_str(), &loaded) == EMFV_ERR_IO);

  emfv_index_free(loaded);
  emfv_index_free(idx);
  emfv_vectors_free(v);
  fs::remove_all(dir);
}

TEST_CASE("verify reports a hand-edited overlap") {
  const fs::path dir = temp_dir("verify");
  write_gallery(dir / "g.jsonl");
  emfv_vectors* v = nullptr;
  REQUIRE(emfv_vectors_read((dir / "g.jsonl").c_str(), &v) == EMFV_OK);
  emfv_index* idx = nullptr;
  REQUIRE(emfv_index_build(v, nullptr, &idx) == EMFV_OK);
  REQUIRE(emfv_index_save(idx, (dir / "snap.json").c_str()) == EMFV_OK);

  std::ifstream in(dir / "snap.json");
  json doc = json::parse(in);
  doc["persons"][1]["band"][0] = doc["persons"][0]["band"][1];
  std::ofstream(dir / "bad.json") << doc.dump();

  char* report = nullptr;
  CHECK(emfv_verify_file((dir / "bad.json").c_str(), 10, 1, &report) ==
        EMFV_ERR_VERIFY_FAILED);
  REQUIRE(report != nullptr);
  const json r = json::parse(report);
  emfv_string_free(report);
  CHECK(r["overlaps"].size() == 1);
  CHECK(r["ok"] == false);
  CHECK(r.contains("load_error"));

  emfv_index_free(idx);
  emfv_vectors_free(v);
  fs::remove_all(dir);
}

TEST_CASE("bench rows respect the comparison bound") {
  emfv_bench_row rows[16];
  std::size_t n = 0;
  REQUIRE(emfv_bench(512, 300, 7, rows, 16, &n) == EMFV_OK);
  REQUIRE(n == 4);
  CHECK(rows[0].bands == 2);
  CHECK(rows[3].bands == 512);
  for (std::size_t i = 0; i < n; ++i) CHECK(rows[i].max_comparisons <= rows[i].bound);
  CHECK(rows[3].bound == 11);
  CHECK(emfv_bench(1, 10, 7, rows, 16, &n) == EMFV_ERR_INVALID_ARGUMENT);
}

TEST_CASE("network through the C interface") {
  const fs::path dir = temp_dir("net");
  REQUIRE(emfv_write_synthetic_faces((dir / "data").c_str(), 2, 4, 16, 1) == EMFV_OK);
  emfv_network* net = nullptr;
  REQUIRE(emfv_network_create(16, 8, 2, 3, &net) == EMFV_OK);
  CHECK(emfv_network_feature_dimension(net) == 8);
  CHECK(emfv_network_image_side(net) == 16);
  double acc = -1, loss = -1;
  REQUIRE(emfv_network_train_directory(net, (dir / "data").c_str(), 0.05, 2, 4, 1,
                                       &acc, &loss) == EMFV_OK);
  CHECK(acc >= 0.0);
  CHECK(loss > 0.0);
  REQUIRE(emfv_network_save(net, (dir / "w.bin").c_str()) == EMFV_OK);
  emfv_network* back = nullptr;
  REQUIRE(emfv_network_load((dir / "w.bin").c_str(), &back) == EMFV_OK);

  const fs::path img = *fs::directory_iterator(dir / "data" / "p00");
  double f1[8], f2[8];
  REQUIRE(emfv_network_extract_pgm(net, img.c_str(), f1, 8) == EMFV_OK);
  REQUIRE(emfv_network_extract_pgm(back, img.c_str(), f2, 8) == EMFV_OK);
  CHECK(std::memcmp(f1, f2, sizeof f1) == 0);
  CHECK(emfv_network_extract_pgm(net, img.c_str(), f1, 4) == EMFV_ERR_INVALID_ARGUMENT);
  CHECK(emfv_network_create(16, 8, 2, 3, nullptr) == EMFV_ERR_INVALID_ARGUMENT);
  CHECK(emfv_network_create(15, 8, 2, 3, &back) == EMFV_ERR_LAYER_SHAPE);

  emfv_network_free(back);
  emfv_network_free(net);
  fs::remove_all(dir);
}
