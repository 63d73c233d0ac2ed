#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <shared_mutex>
#include <string>
#include <string_view>

#include "emfv/banded_index.hpp"
#include "emfv/neuralnet.hpp"
#include "emfv/store.hpp"

namespace emfv {

struct ServiceConfig {
  std::string listen_address = "127.0.0.1:8080";
  std::filesystem::path snapshot_path;  // empty: keep the index in memory
  MeanPolicy mean_policy = MeanPolicy::kFrozen;
  IndexOptions options;
  std::string bearer_token;             // empty: enrollment is refused
  std::filesystem::path weights_path;   // empty: image payloads get 501
  bool verbose = false;
};

// JSON config file; keys listen, snapshot, mean_policy, margin,
// tie_tolerance, token, weights, verbose. Throws FormatError / IoError.
ServiceConfig load_service_config(const std::filesystem::path& path);

// EMFV_ADDR, EMFV_SNAPSHOT and EMFV_TOKEN override the matching fields.
void apply_env_overrides(
    ServiceConfig& config,
    const std::function<const char*(const char*)>& getenv_fn);

struct HttpResponse {
  int status = 200;
  std::string body;
};

// Enroll / authenticate / identify over JSON bodies. Readers work on an
// immutable snapshot pointer; enrollments are serialized by one writer
// lock, persisted, and only then published.
class Service {
 public:
  // Loads the snapshot and weights named in `config` when they exist.
  explicit Service(ServiceConfig config, std::ostream* log = nullptr);
  Service(ServiceConfig config, Snapshot initial,
          std::optional<Network> network, std::ostream* log = nullptr);

  HttpResponse handle_enroll(std::string_view body,
                             std::string_view authorization);
  HttpResponse handle_authenticate(std::string_view body) const;
  HttpResponse handle_identify(std::string_view body) const;
  HttpResponse handle_persons() const;
  HttpResponse handle_health() const;

  // Routes a request the way the HTTP listener does.
  HttpResponse dispatch(std::string_view method, std::string_view path,
                        std::string_view body, std::string_view authorization);

  std::shared_ptr<const Snapshot> snapshot() const;
  const ServiceConfig& config() const noexcept { return config_; }

  // Blocks serving HTTP on config().listen_address until stop().
  void run();
  void stop();
  // Port actually bound by run(); 0 before binding.
  int bound_port() const noexcept { return bound_port_.load(); }

 private:
  void log_request(std::string_view method, std::string_view path,
                   int status) const;

  ServiceConfig config_;
  std::optional<Network> network_;
  std::shared_ptr<const Snapshot> current_;
  mutable std::shared_mutex snapshot_mutex_;
  std::mutex writer_mutex_;
  std::ostream* log_;
  mutable std::mutex log_mutex_;
  std::atomic<int> bound_port_{0};
  std::atomic<void*> server_{nullptr};
};

}  // namespace emfv
