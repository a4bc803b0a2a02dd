#pragma once

#include <atomic>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "avp/error.hpp"
#include "avp/workspace.hpp"

namespace httplib {
class Server;
}

namespace avp::service {

struct ApiConfig {
  std::string listen_address = "127.0.0.1";
  int port = 8080;  // 0 binds an ephemeral port
  std::filesystem::path corpus_root;
  std::filesystem::path artifact_dir;
  std::string transcoder;
  double fingerprint_tau = 4.0;
  std::optional<std::filesystem::path> similarity_weights_path;
};

// Relative paths are resolved against the config file's directory.
// Throws ConfigError on unreadable files, unknown types or missing paths.
ApiConfig load_config(const std::filesystem::path& path);
ApiConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
void check_config(const ApiConfig& cfg);

// Explicit path, else $AVP_CONFIG. Throws ConfigError when neither is set.
std::filesystem::path resolve_config_path(const std::optional<std::filesystem::path>& explicit_path);

inline constexpr int kMinWaveformPx = 100;
inline constexpr int kMaxWaveformPx = 20000;

// (min, max) per pixel column over the whole buffer.
std::vector<std::pair<float, float>> waveform_peaks(std::span<const float> samples, int px);

int http_status(ErrorCode code);

struct IndexingProgress {
  std::size_t total = 0;
  std::size_t done = 0;
  bool running = false;
  std::vector<std::pair<std::string, std::string>> failed;  // asset, reason
};

// Bootstraps the workspace (artifacts loaded synchronously, missing
// fingerprints and features built on a background worker) and serves the API.
class Server {
 public:
  explicit Server(ApiConfig config);
  ~Server();

  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  Workspace& workspace() { return *workspace_; }
  const events::LoadReport& artifact_report() const { return artifact_report_; }

  // Binds and serves until stop(); returns false if binding fails.
  bool listen();
  // Binds, then serves on an internal thread. Returns the bound port or -1.
  int start();
  void stop();
  void wait_for_indexing();
  IndexingProgress progress() const;

 private:
  void routes();
  void index_pending();

  ApiConfig config_;
  std::unique_ptr<Workspace> workspace_;
  events::LoadReport artifact_report_;
  std::unique_ptr<httplib::Server> http_;
  std::thread serve_thread_;
  std::thread index_thread_;
  mutable std::mutex progress_mutex_;
  IndexingProgress progress_;
};

}  // namespace avp::service
