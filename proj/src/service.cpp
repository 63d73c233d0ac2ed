#include "emfv/service.hpp"

#include <boost/archive/iterators/binary_from_base64.hpp>
#include <boost/archive/iterators/transform_width.hpp>
#include <chrono>
#include <cmath>

#include "emfv/errors.hpp"
#include "httplib.h"
#include "json.hpp"

namespace emfv {

using json = nlohmann::json;

namespace {

class UnauthorizedError : public Error {
 public:
  UnauthorizedError() : Error("unauthorized", "missing or invalid bearer token") {}
};

class ImagesUnsupportedError : public Error {
 public:
  ImagesUnsupportedError()
      : Error("images_unsupported",
              "image payloads need a trained network; none is configured") {}
};

class MalformedRequestError : public Error {
 public:
  explicit MalformedRequestError(const std::string& message)
      : Error("malformed_request", message) {}
};

int status_for(const std::string& code) {
  if (code == "band_collision" || code == "duplicate_person") return 409;
  if (code == "unknown_person") return 404;
  if (code == "unauthorized") return 401;
  if (code == "images_unsupported") return 501;
  if (code == "io_error" || code == "serialization_error") return 500;
  return 400;
}

HttpResponse error_response(const Error& e) {
  return {status_for(e.code()),
          json{{"code", e.code()}, {"message", e.what()}}.dump()};
}

HttpResponse ok(const json& body) { return {200, body.dump()}; }

// Never echo the body back: parser diagnostics quote the offending input.
json parse_body(std::string_view body) {
  json j = json::parse(body.begin(), body.end(), nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw MalformedRequestError("request body must be a JSON object");
  }
  return j;
}

std::string decode_base64(std::string text) {
  using namespace boost::archive::iterators;
  using Decoder =
      transform_width<binary_from_base64<std::string::const_iterator>, 8, 6>;
  std::erase_if(text, [](char c) {
    return c == '\n' || c == '\r' || c == ' ' || c == '\t';
  });
  std::size_t pad = 0;
  while (!text.empty() && text.back() == '=') {
    text.pop_back();
    ++pad;
  }
  if (pad > 2) throw MalformedRequestError("image is not valid base64");
  try {
    std::string out(Decoder(text.cbegin()), Decoder(text.cend()));
    return out;
  } catch (const std::exception&) {
    throw MalformedRequestError("image is not valid base64");
  }
}

std::string require_string(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_string() || it->get<std::string>().empty()) {
    throw MalformedRequestError(std::string("'") + key +
                                "' must be a non-empty string");
  }
  return it->get<std::string>();
}

json band_json(const Band& b) { return json::array({b.low, b.high}); }

}  // namespace

ServiceConfig load_service_config(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw FormatError("service config " + path.string() +
                      " is not a JSON object");
  }
  ServiceConfig c;
  try {
    if (j.contains("listen")) c.listen_address = j["listen"].get<std::string>();
    if (j.contains("snapshot")) c.snapshot_path = j["snapshot"].get<std::string>();
    if (j.contains("mean_policy")) {
      c.mean_policy = mean_policy_from_string(j["mean_policy"].get<std::string>());
    }
    if (j.contains("margin")) c.options.margin = j["margin"].get<double>();
    if (j.contains("tie_tolerance")) {
      c.options.tie_tolerance = j["tie_tolerance"].get<double>();
    }
    if (j.contains("token")) c.bearer_token = j["token"].get<std::string>();
    if (j.contains("weights")) c.weights_path = j["weights"].get<std::string>();
    if (j.contains("verbose")) c.verbose = j["verbose"].get<bool>();
  } catch (const json::exception& e) {
    throw FormatError("service config " + path.string() + ": " + e.what());
  }
  return c;
}

void apply_env_overrides(
    ServiceConfig& config,
    const std::function<const char*(const char*)>& getenv_fn) {
  if (const char* v = getenv_fn("EMFV_ADDR"); v != nullptr && *v != '\0') {
    config.listen_address = v;
  }
  if (const char* v = getenv_fn("EMFV_SNAPSHOT"); v != nullptr && *v != '\0') {
    config.snapshot_path = v;
  }
  if (const char* v = getenv_fn("EMFV_TOKEN"); v != nullptr && *v != '\0') {
    config.bearer_token = v;
  }
}

Service::Service(ServiceConfig config, std::ostream* log)
    : config_(std::move(config)), log_(log) {
  Snapshot initial;
  if (!config_.snapshot_path.empty() &&
      std::filesystem::exists(config_.snapshot_path)) {
    initial = load_snapshot(config_.snapshot_path);
  } else {
    initial.index = BandedIndex::from_bands({}, {}, config_.options, 0);
  }
  current_ = std::make_shared<const Snapshot>(std::move(initial));
  if (!config_.weights_path.empty()) {
    network_ = load_network(config_.weights_path);
  }
}

Service::Service(ServiceConfig config, Snapshot initial,
                 std::optional<Network> network, std::ostream* log)
    : config_(std::move(config)),
      network_(std::move(network)),
      current_(std::make_shared<const Snapshot>(std::move(initial))),
      log_(log) {}

std::shared_ptr<const Snapshot> Service::snapshot() const {
  std::shared_lock lock(snapshot_mutex_);
  return current_;
}

namespace {

FeatureVector parse_probe(const json& j, const std::optional<Network>& net) {
  if (j.is_array()) {
    std::vector<double> values;
    values.reserve(j.size());
    for (const auto& v : j) {
      if (!v.is_number()) {
        throw MalformedRequestError("vector entries must be numbers");
      }
      values.push_back(v.get<double>());
    }
    return normalize(FeatureVector(std::move(values)));
  }
  if (j.is_object() && j.contains("image")) {
    if (!j["image"].is_string()) {
      throw MalformedRequestError("'image' must be a base64 string");
    }
    if (!net) throw ImagesUnsupportedError();
    Tensor img;
    try {
      img = decode_pgm(decode_base64(j["image"].get<std::string>()));
    } catch (const FormatError&) {
      throw MalformedRequestError("image payload is not a greyscale PGM");
    }
    return normalize(net->extract_features(img));
  }
  throw MalformedRequestError(
      "a sample must be an array of numbers or {\"image\": base64}");
}

}  // namespace

HttpResponse Service::handle_enroll(std::string_view body,
                                    std::string_view authorization) {
  try {
    if (config_.bearer_token.empty() ||
        authorization != "Bearer " + config_.bearer_token) {
      throw UnauthorizedError();
    }
    const json req = parse_body(body);
    const PersonId person(require_string(req, "person_id"));
    const auto it = req.find("samples");
    if (it == req.end() || !it->is_array() || it->empty()) {
      throw MalformedRequestError("'samples' must be a non-empty array");
    }
    std::vector<FeatureVector> samples;
    for (const auto& s : *it) samples.push_back(parse_probe(s, network_));

    std::lock_guard writer(writer_mutex_);
    const auto base = snapshot();
    Enrollment e = enroll(base->index, base->gallery, person,
                          std::move(samples), config_.mean_policy);
    if (!config_.snapshot_path.empty()) {
      save_snapshot(e.index, e.gallery, config_.snapshot_path);
    }
    const std::uint64_t version = e.index.version();
    const Band band = e.band;
    auto next = std::make_shared<const Snapshot>(
        Snapshot{std::move(e.index), std::move(e.gallery)});
    {
      std::unique_lock lock(snapshot_mutex_);
      current_ = std::move(next);
    }
    return ok({{"person_id", band.person.str()},
               {"version", version},
               {"band", band_json(band)}});
  } catch (const Error& e) {
    return error_response(e);
  }
}

HttpResponse Service::handle_authenticate(std::string_view body) const {
  try {
    const json req = parse_body(body);
    const PersonId person(require_string(req, "person_id"));
    if (!req.contains("probe")) throw MalformedRequestError("missing 'probe'");
    const auto snap = snapshot();
    if (snap->index.find_band(person) == nullptr) {
      throw UnknownPersonError("person " + person.str() + " is not enrolled");
    }
    const FeatureVector probe = parse_probe(req["probe"], network_);
    const double d = snap->index.distance_to_mean(probe);
    const bool accept = snap->index.authenticate_distance(person, d);
    return ok({{"decision", accept ? "accept" : "reject"},
               {"person_id", person.str()},
               {"distance", d},
               {"version", snap->index.version()}});
  } catch (const Error& e) {
    return error_response(e);
  }
}

HttpResponse Service::handle_identify(std::string_view body) const {
  try {
    const json req = parse_body(body);
    if (!req.contains("probe")) throw MalformedRequestError("missing 'probe'");
    std::size_t max_neighbors = 5;
    if (req.contains("max_neighbors")) {
      if (!req["max_neighbors"].is_number_unsigned() ||
          req["max_neighbors"].get<std::size_t>() == 0) {
        throw MalformedRequestError("'max_neighbors' must be a positive integer");
      }
      max_neighbors = req["max_neighbors"].get<std::size_t>();
    }
    const FeatureVector probe = parse_probe(req["probe"], network_);
    const auto snap = snapshot();
    const IdentifyResult r = snap->index.identify(probe, max_neighbors);

    json matches = json::array();
    for (const auto& n : r.matches) {
      matches.push_back({{"person_id", n.person.str()},
                         {"interval_distance", n.interval_distance}});
    }
    json out{{"outcome", outcome_name(r.classification.outcome)},
             {"distance", r.classification.distance_to_mean},
             {"matches", std::move(matches)},
             {"version", snap->index.version()}};
    if (const auto* tie = std::get_if<AmbiguousTie>(&r.classification.outcome)) {
      out["tie"] = {tie->lower.str(), tie->upper.str()};
    }
    return ok(out);
  } catch (const Error& e) {
    return error_response(e);
  }
}

HttpResponse Service::handle_persons() const {
  const auto snap = snapshot();
  json persons = json::array();
  for (const Band& b : snap->index.bands()) {
    persons.push_back({{"id", b.person.str()}, {"band", band_json(b)}});
  }
  return ok({{"version", snap->index.version()}, {"persons", std::move(persons)}});
}

HttpResponse Service::handle_health() const {
  const auto snap = snapshot();
  return ok({{"status", "ok"},
             {"version", snap->index.version()},
             {"persons", snap->index.bands().size()},
             {"dimension", snap->index.dimension()},
             {"images", network_.has_value()}});
}

HttpResponse Service::dispatch(std::string_view method, std::string_view path,
                               std::string_view body,
                               std::string_view authorization) {
  HttpResponse r;
  if (method == "POST" && path == "/v1/enroll") {
    r = handle_enroll(body, authorization);
  } else if (method == "POST" && path == "/v1/authenticate") {
    r = handle_authenticate(body);
  } else if (method == "POST" && path == "/v1/identify") {
    r = handle_identify(body);
  } else if (method == "GET" && path == "/v1/persons") {
    r = handle_persons();
  } else if (method == "GET" && path == "/v1/health") {
    r = handle_health();
  } else {
    r = {404, json{{"code", "not_found"}, {"message", "no such endpoint"}}.dump()};
  }
  log_request(method, path, r.status);
  return r;
}

void Service::log_request(std::string_view method, std::string_view path,
                          int status) const {
  if (log_ == nullptr) return;
  std::lock_guard lock(log_mutex_);
  *log_ << "emfv: " << method << " " << path << " -> " << status;
  if (config_.verbose) {
    const auto snap = snapshot();
    *log_ << " version=" << snap->index.version()
          << " persons=" << snap->index.bands().size();
  }
  *log_ << "\n";
}

void Service::run() {
  httplib::Server server;
  auto route = [this](const httplib::Request& req, httplib::Response& res) {
    HttpResponse r = dispatch(req.method, req.path, req.body,
                              req.get_header_value("Authorization"));
    res.status = r.status;
    res.set_content(r.body, "application/json");
  };
  for (const char* p : {"/v1/enroll", "/v1/authenticate", "/v1/identify"}) {
    server.Post(p, route);
  }
  for (const char* p : {"/v1/persons", "/v1/health"}) server.Get(p, route);

  const std::string& addr = config_.listen_address;
  const auto colon = addr.rfind(':');
  if (colon == std::string::npos) {
    throw InvalidArgumentError("listen address must be host:port");
  }
  const std::string host = addr.substr(0, colon);
  int port = 0;
  try {
    port = std::stoi(addr.substr(colon + 1));
  } catch (const std::exception&) {
    throw InvalidArgumentError("listen address has no valid port");
  }
  const int bound = port == 0 ? server.bind_to_any_port(host.c_str())
                              : (server.bind_to_port(host.c_str(), port) ? port : -1);
  if (bound < 0) throw IoError("cannot bind " + addr);
  server_.store(&server);
  bound_port_.store(bound);
  if (log_ != nullptr) {
    std::lock_guard lock(log_mutex_);
    *log_ << "emfv: listening on " << host << ":" << bound << "\n";
  }
  server.listen_after_bind();
  server_.store(nullptr);
  bound_port_.store(0);
}

void Service::stop() {
  if (auto* s = static_cast<httplib::Server*>(server_.load())) s->stop();
}

}  // namespace emfv
