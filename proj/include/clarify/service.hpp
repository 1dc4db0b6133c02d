// HTTP/JSON endpoints for human labeling, backed by an ExperimentSession.
#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "clarify/envs.hpp"
#include "clarify/harness.hpp"

namespace httplib {
class Server;
}

namespace clarify {

class LabelService {
 public:
  LabelService(ExperimentSession& session, Environment env);
  ~LabelService();
  LabelService(const LabelService&) = delete;
  LabelService& operator=(const LabelService&) = delete;

  // Files under `dir` are served at "/".
  void set_static_dir(const std::filesystem::path& dir);

  // Binds to `port` (0 picks a free one) and returns the bound port, or -1.
  int bind(const std::string& host, int port);
  // Blocks until stop().
  bool listen();
  void stop();
  void wait_until_ready() const;

 private:
  ExperimentSession& session_;
  Environment env_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace clarify
