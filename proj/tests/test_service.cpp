#include <chrono>
#include <filesystem>
#include <map>
#include <random>
#include <sstream>
#include <thread>

#include "doctest.h"
#include "emfv/errors.hpp"
#include "emfv/service.hpp"
#include "emfv/synthetic.hpp"
#include "fixtures.hpp"
#include "httplib.h"
#include "json.hpp"

using namespace emfv;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::string kAuth = "Bearer s3cret";

// The reported bands, exactly, around the shell center; a tiny tie
// tolerance absorbs the rounding in vector distances.
Snapshot exact_band_snapshot() {
  synthetic::DistanceShell shell(256);
  std::vector<double> c(shell.center().begin(), shell.center().end());
  IndexOptions o;
  o.tie_tolerance = 1e-9;
  std::vector<Band> bands{{PersonId("p1"), 0.85, 1.12},
                          {PersonId("p2"), 1.18, 1.32},
                          {PersonId("p3"), 0.39, 0.68}};
  return {BandedIndex::from_bands(MeanVector(c, 60), bands, o, 1), Gallery{}};
}

json vec(const FeatureVector& v) {
  return json(std::vector<double>(v.values().begin(), v.values().end()));
}

json body(const HttpResponse& r) { return json::parse(r.body); }

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("emfv_svc_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("authenticate over the reported bands") {
  Service svc(ServiceConfig{}, exact_band_snapshot(), std::nullopt);
  synthetic::DistanceShell shell(256);
  std::mt19937_64 rng(1);

  auto r = svc.handle_authenticate(
      json{{"person_id", "p1"}, {"probe", vec(shell.sample(0.90, rng))}}.dump());
  CHECK(r.status == 200);
  CHECK(body(r)["decision"] == "accept");
  CHECK(body(r)["distance"].get<double>() == doctest::Approx(0.90));

  r = svc.handle_authenticate(
      json{{"person_id", "p1"}, {"probe", vec(shell.sample(1.25, rng))}}.dump());
  CHECK(r.status == 200);
  CHECK(body(r)["decision"] == "reject");

  r = svc.handle_authenticate(
      json{{"person_id", "nobody"}, {"probe", vec(shell.sample(1.0, rng))}}.dump());
  CHECK(r.status == 404);
  CHECK(body(r)["code"] == "unknown_person");

  r = svc.handle_authenticate(json{{"person_id", "p1"}, {"probe", "x"}}.dump());
  CHECK(r.status == 400);
  r = svc.handle_authenticate(json{{"person_id", "p1"}, {"probe", {1.0, -1.0}}}.dump());
  CHECK(r.status == 400);
  CHECK(body(r)["code"] == "invalid_vector");
}

TEST_CASE("identify over the reported bands") {
  Service svc(ServiceConfig{}, exact_band_snapshot(), std::nullopt);
  synthetic::DistanceShell shell(256);
  std::mt19937_64 rng(2);

  auto r = svc.handle_identify(json{{"probe", vec(shell.sample(0.95, rng))}}.dump());
  REQUIRE(r.status == 200);
  CHECK(body(r)["matches"][0]["person_id"] == "p1");
  CHECK(body(r)["outcome"] == "in_band");
  CHECK_FALSE(body(r).contains("tie"));

  r = svc.handle_identify(
      json{{"probe", vec(shell.sample(1.15, rng))}, {"max_neighbors", 2}}.dump());
  REQUIRE(r.status == 200);
  CHECK(body(r)["tie"] == json{"p1", "p2"});
  CHECK(body(r)["matches"].size() == 2);

  r = svc.handle_identify(json{{"probe", vec(shell.sample(0.95, rng))},
                               {"max_neighbors", 0}}.dump());
  CHECK(r.status == 400);
  r = svc.handle_identify("{not json");
  CHECK(r.status == 400);
  CHECK(r.body.find("not json") == std::string::npos);
  r = svc.handle_identify(json{{"probe", {1.0, 2.0}}}.dump());
  CHECK(r.status == 400);
  CHECK(body(r)["code"] == "dimension_mismatch");
}

TEST_CASE("identical identify requests give byte-identical bodies") {
  Service svc(ServiceConfig{}, exact_band_snapshot(), std::nullopt);
  synthetic::DistanceShell shell(256);
  std::mt19937_64 rng(3);
  const std::string req = json{{"probe", vec(shell.sample(0.5, rng))}}.dump();
  CHECK(svc.handle_identify(req).body == svc.handle_identify(req).body);
}

TEST_CASE("identify on an empty index") {
  ServiceConfig cfg;
  Service svc(cfg, Snapshot{BandedIndex::from_bands({}, {}, {}, 0), {}},
              std::nullopt);
  const auto r = svc.handle_identify(json{{"probe", {0.5, 0.5}}}.dump());
  CHECK(r.status == 200);
  CHECK(body(r)["matches"] == json::array());
  CHECK(body(r)["outcome"] == "empty_index");
}

TEST_CASE("enroll") {
  const fs::path dir = temp_dir("enroll");
  ServiceConfig cfg;
  cfg.bearer_token = "s3cret";
  cfg.snapshot_path = dir / "snap.json";
  const Gallery g = fixture::reported_gallery(5);
  const BandedIndex idx = build_index(g);
  std::ostringstream log;
  Service svc(cfg, Snapshot{idx, g}, std::nullopt, &log);

  synthetic::DistanceShell shell(256);
  std::mt19937_64 rng(6);
  auto near_mean = [&](double d) {
    const auto off = shell.offset(d, rng);
    std::vector<double> v(256);
    for (std::size_t i = 0; i < 256; ++i) {
      v[i] = std::max(0.0, idx.mean().values()[i] + off[i]);
    }
    return vec(FeatureVector(v));
  };
  const json samples = {near_mean(1.50), near_mean(1.55), near_mean(1.60)};

  auto r = svc.handle_enroll(json{{"person_id", "p4"}, {"samples", samples}}.dump(), "");
  CHECK(r.status == 401);
  r = svc.handle_enroll(json{{"person_id", "p4"}, {"samples", samples}}.dump(),
                        "Bearer wrong");
  CHECK(r.status == 401);
  CHECK(svc.snapshot()->index.version() == 1);

  r = svc.handle_enroll(json{{"person_id", "p4"}, {"samples", samples}}.dump(), kAuth);
  REQUIRE(r.status == 200);
  CHECK(body(r)["version"] == 2);
  CHECK(body(r)["band"][0].get<double>() == doctest::Approx(1.495).epsilon(1e-6));
  CHECK(body(r)["band"][1].get<double>() == doctest::Approx(1.605).epsilon(1e-6));
  CHECK(svc.snapshot()->index.bands().size() == 4);
  // Persisted before the acknowledgement.
  const Snapshot on_disk = load_snapshot(cfg.snapshot_path);
  CHECK(on_disk.index == svc.snapshot()->index);

  r = svc.handle_enroll(json{{"person_id", "p4"}, {"samples", samples}}.dump(), kAuth);
  CHECK(r.status == 409);
  CHECK(body(r)["code"] == "duplicate_person");

  r = svc.handle_enroll(
      json{{"person_id", "p5"}, {"samples", {near_mean(1.25)}}}.dump(), kAuth);
  CHECK(r.status == 409);
  CHECK(body(r)["code"] == "band_collision");

  r = svc.handle_enroll(json{{"person_id", "p6"}, {"samples", {{1.0, 2.0}}}}.dump(),
                        kAuth);
  CHECK(r.status == 400);
  CHECK(body(r)["code"] == "dimension_mismatch");

  r = svc.handle_enroll(json{{"person_id", "p7"}, {"samples", json::array()}}.dump(),
                        kAuth);
  CHECK(r.status == 400);

  r = svc.handle_enroll(
      json{{"person_id", "p8"}, {"samples", {{{"image", "AAAA"}}}}}.dump(), kAuth);
  CHECK(r.status == 501);

  // Failed enrollments left the served version where it was.
  CHECK(svc.snapshot()->index.version() == 2);
  CHECK(load_snapshot(cfg.snapshot_path).index.version() == 2);
  fs::remove_all(dir);
}

TEST_CASE("enroll is refused when no token is configured") {
  Service svc(ServiceConfig{}, exact_band_snapshot(), std::nullopt);
  const auto r = svc.handle_enroll(
      json{{"person_id", "p4"}, {"samples", {{1.0}}}}.dump(), "Bearer ");
  CHECK(r.status == 401);
}

TEST_CASE("image payloads go through the network") {
  ArchitectureConfig arch;
  arch.image_side = 16;
  arch.feature_dimension = 8;
  Network net = default_network(arch, 4);

  ServiceConfig cfg;
  cfg.bearer_token = "s3cret";
  Service svc(cfg, Snapshot{BandedIndex::from_bands({}, {}, {}, 0), {}}, net);

  const auto images = synthetic::face_like_images(1, 2, 16, 3);
  auto b64 = [](const Tensor& img) {
    std::string pgm = "P5\n16 16\n255\n";
    for (double v : img.data()) {
      pgm.push_back(static_cast<char>(static_cast<unsigned char>(v * 255.0 + 0.5)));
    }
    return httplib::detail::base64_encode(pgm);
  };
  auto r = svc.handle_enroll(
      json{{"person_id", "a"},
           {"samples", {{{"image", b64(images.images[0].image)}}}}}
          .dump(),
      kAuth);
  REQUIRE(r.status == 200);
  CHECK(svc.snapshot()->index.dimension() == 8);

  r = svc.handle_identify(
      json{{"probe", {{"image", b64(images.images[1].image)}}}}.dump());
  CHECK(r.status == 200);
  CHECK(body(r)["matches"][0]["person_id"] == "a");

  r = svc.handle_identify(json{{"probe", {{"image", "!!!"}}}}.dump());
  CHECK(r.status == 400);
  r = svc.handle_identify(
      json{{"probe", {{"image", httplib::detail::base64_encode("P5\n99")}}}}.dump());
  CHECK(r.status == 400);
}

TEST_CASE("persons, health and routing") {
  std::ostringstream log;
  ServiceConfig cfg;
  cfg.verbose = true;
  Service svc(cfg, exact_band_snapshot(), std::nullopt, &log);
  auto r = svc.dispatch("GET", "/v1/persons", "", "");
  REQUIRE(r.status == 200);
  CHECK(body(r)["persons"].size() == 3);
  CHECK(body(r)["persons"][0]["id"] == "p3");
  CHECK(body(r)["persons"][0]["band"] == json{0.39, 0.68});
  CHECK_FALSE(body(r)["persons"][0].contains("samples"));
  r = svc.dispatch("GET", "/v1/health", "", "");
  CHECK(body(r)["status"] == "ok");
  CHECK(svc.dispatch("GET", "/v1/nowhere", "", "").status == 404);
  CHECK(svc.dispatch("DELETE", "/v1/persons", "", "").status == 404);
  CHECK(log.str().find("GET /v1/persons -> 200") != std::string::npos);
}

TEST_CASE("config file and environment overrides") {
  const fs::path dir = temp_dir("config");
  write_file_atomic(dir / "c.json",
                    R"({"listen": "0.0.0.0:9000", "mean_policy": "recompute",
                        "margin": 0.1, "tie_tolerance": 0.001, "token": "t",
                        "verbose": true})");
  ServiceConfig c = load_service_config(dir / "c.json");
  CHECK(c.listen_address == "0.0.0.0:9000");
  CHECK(c.mean_policy == MeanPolicy::kRecompute);
  CHECK(c.options.margin == 0.1);
  CHECK(c.options.tie_tolerance == 0.001);
  CHECK(c.bearer_token == "t");
  CHECK(c.verbose);

  std::map<std::string, std::string> env{{"EMFV_ADDR", "127.0.0.1:1"},
                                         {"EMFV_TOKEN", "other"}};
  apply_env_overrides(c, [&](const char* k) -> const char* {
    auto it = env.find(k);
    return it == env.end() ? nullptr : it->second.c_str();
  });
  CHECK(c.listen_address == "127.0.0.1:1");
  CHECK(c.bearer_token == "other");
  CHECK(c.snapshot_path.empty());

  write_file_atomic(dir / "bad.json", "[1]");
  CHECK_THROWS_AS(load_service_config(dir / "bad.json"), FormatError);
  fs::remove_all(dir);
}

TEST_CASE("serves over HTTP") {
  ServiceConfig cfg;
  cfg.listen_address = "127.0.0.1:0";
  Service svc(cfg, exact_band_snapshot(), std::nullopt);
  std::thread server([&] { svc.run(); });
  for (int i = 0; i < 200 && svc.bound_port() == 0; ++i) {
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  REQUIRE(svc.bound_port() != 0);
  httplib::Client client("127.0.0.1", svc.bound_port());
  auto res = client.Get("/v1/health");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(json::parse(res->body)["persons"] == 3);
  res = client.Post("/v1/identify", "{", "application/json");
  REQUIRE(res);
  CHECK(res->status == 400);
  svc.stop();
  server.join();
}
