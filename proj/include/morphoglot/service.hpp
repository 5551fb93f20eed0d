#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>

#include "morphoglot/decoder.hpp"
#include "morphoglot/lexicon.hpp"

namespace httplib {
class Server;
}

namespace morphoglot {

struct ServiceOptions {
  DecodeOptions decode;
  std::string cors_origin = "*";
  // Echoed by GET /info.
  std::string run_config;
};

/// Immutable view of the session at one lexicon version.
struct SessionSnapshot {
  std::shared_ptr<const EncoderModel> encoder;
  std::shared_ptr<const DecoderModel> decoder;
  std::shared_ptr<const Lexicon> lexicon;
  std::uint64_t version = 0;

  bool loaded() const { return encoder && decoder && lexicon; }
};

struct ServiceResponse {
  int status = 200;
  std::string body;  // JSON
};

/// Glossing session behind the HTTP API. Readers work on snapshots; lexicon
/// mutations copy, append and publish a new version under a single-writer
/// gate, so a request never sees a torn lexicon.
class GlossService {
 public:
  explicit GlossService(ServiceOptions options = {});
  GlossService(EncoderModel encoder, DecoderModel decoder, Lexicon lexicon,
               ServiceOptions options = {});
  ~GlossService();

  SessionSnapshot snapshot() const;

  /// Dispatches one request without a socket; `path` excludes the query.
  ServiceResponse handle(const std::string& method, const std::string& path,
                         const std::string& body);

  ServiceResponse gloss(const std::string& body) const;
  ServiceResponse list_lexicon() const;
  ServiceResponse add_lexicon_entry(const std::string& body);
  ServiceResponse evaluate(const std::string& body) const;
  ServiceResponse info() const;

  /// Binds to host:port (port 0 picks a free one) and serves until stop().
  /// Returns false if binding failed.
  bool bind(const std::string& host, int port);
  int bound_port() const { return port_; }
  void serve();
  void stop();

 private:
  ServiceResponse not_loaded(std::uint64_t version) const;

  ServiceOptions options_;
  mutable std::shared_mutex state_mutex_;
  std::mutex writer_mutex_;
  SessionSnapshot state_;
  std::unique_ptr<httplib::Server> server_;
  int port_ = -1;
};

/// Host and port from flags, falling back to MORPHOGLOT_HOST /
/// MORPHOGLOT_PORT, then to 127.0.0.1:8080.
std::pair<std::string, int> resolve_bind_address(const std::optional<std::string>& host,
                                                 const std::optional<int>& port);

}  // namespace morphoglot
