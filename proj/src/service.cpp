#include "morphoglot/service.hpp"

#include <cstdlib>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

#include "morphoglot/evaluation.hpp"

namespace morphoglot {

using nlohmann::json;

namespace {

ServiceResponse reply(int status, json body, std::uint64_t version) {
  body["lexicon_version"] = version;
  return {status, body.dump()};
}

ServiceResponse error(int status, const std::string& message, std::uint64_t version) {
  return reply(status, json{{"error", message}}, version);
}

json entry_json(const Lexicon& lexicon, std::size_t index) {
  const auto& e = lexicon.entry(index);
  return {{"index", index},
          {"segment", e.morpheme.segment},
          {"gloss", e.morpheme.gloss},
          {"provenance", to_string(e.provenance)}};
}

json word_json(const WordGloss& w) {
  json segments = json::array(), glosses = json::array(), alternatives = json::array();
  for (const auto& m : w.morphemes) {
    segments.push_back(m.segment);
    glosses.push_back(m.gloss);
  }
  for (const auto& step : w.alternatives) {
    json alts = json::array();
    for (const auto& a : step)
      alts.push_back({{"segment", a.morpheme.segment}, {"gloss", a.morpheme.gloss},
                      {"prob", a.probability}});
    alternatives.push_back(std::move(alts));
  }
  return {{"surface", w.surface},       {"punctuation", w.punctuation},
          {"segments", segments},       {"glosses", glosses},
          {"log_prob", w.log_prob},     {"probabilities", w.probabilities},
          {"alternatives", alternatives}};
}

json parse_body(const std::string& body) {
  json j = json::parse(body);
  if (!j.is_object()) throw json::type_error::create(302, "request body must be a JSON object", nullptr);
  return j;
}

}  // namespace

GlossService::GlossService(ServiceOptions options) : options_(std::move(options)) {}

GlossService::GlossService(EncoderModel encoder, DecoderModel decoder, Lexicon lexicon,
                           ServiceOptions options)
    : options_(std::move(options)) {
  lexicon.check_encoder(encoder);
  decoder.check_lexicon(lexicon);
  state_.encoder = std::make_shared<const EncoderModel>(std::move(encoder));
  state_.decoder = std::make_shared<const DecoderModel>(std::move(decoder));
  state_.lexicon = std::make_shared<const Lexicon>(std::move(lexicon));
  state_.version = 1;
}

GlossService::~GlossService() { stop(); }

SessionSnapshot GlossService::snapshot() const {
  std::shared_lock lock(state_mutex_);
  return state_;
}

ServiceResponse GlossService::not_loaded(std::uint64_t version) const {
  return error(503, "models not loaded", version);
}

ServiceResponse GlossService::gloss(const std::string& body) const {
  const SessionSnapshot s = snapshot();
  if (!s.loaded()) return not_loaded(s.version);
  DecodeOptions options = options_.decode;
  std::string transcription;
  std::optional<std::string> translation;
  try {
    const json req = parse_body(body);
    transcription = req.at("transcription").get<std::string>();
    if (req.contains("translation") && !req["translation"].is_null())
      translation = req["translation"].get<std::string>();
    if (req.contains("beam_width")) options.beam_width = req["beam_width"].get<int>();
    if (req.contains("top_k")) options.top_k = req["top_k"].get<int>();
    if (options.beam_width < 1 || options.top_k < 0)
      return error(400, "beam_width must be >= 1 and top_k >= 0", s.version);
  } catch (const json::exception& e) {
    return error(400, std::string("malformed request: ") + e.what(), s.version);
  }
  const SentenceGloss result =
      gloss_sentence(*s.encoder, *s.decoder, *s.lexicon, transcription, translation, options);
  json words = json::array();
  for (const auto& w : result.words) words.push_back(word_json(w));
  return reply(200, json{{"words", words}}, s.version);
}

ServiceResponse GlossService::list_lexicon() const {
  const SessionSnapshot s = snapshot();
  if (!s.lexicon) return not_loaded(s.version);
  json entries = json::array();
  for (std::size_t i = 1; i < s.lexicon->size(); ++i) entries.push_back(entry_json(*s.lexicon, i));
  return reply(200, json{{"size", s.lexicon->size() - 1}, {"entries", entries}}, s.version);
}

ServiceResponse GlossService::add_lexicon_entry(const std::string& body) {
  std::lock_guard writer(writer_mutex_);
  const SessionSnapshot s = snapshot();
  if (!s.loaded()) return not_loaded(s.version);
  std::optional<Morpheme> morpheme;
  try {
    const json req = parse_body(body);
    morpheme.emplace(std::string(trim(req.at("segment").get<std::string>())),
                     std::string(trim(req.at("gloss").get<std::string>())));
  } catch (const json::exception& e) {
    return error(400, std::string("malformed request: ") + e.what(), s.version);
  } catch (const std::invalid_argument& e) {
    return error(400, e.what(), s.version);
  }
  if (auto existing = s.lexicon->find(*morpheme))
    return reply(200, json{{"index", *existing}, {"added", false}}, s.version);

  auto next = std::make_shared<Lexicon>(*s.lexicon);
  std::size_t index = 0;
  try {
    index = next->add_entry(*s.encoder, *morpheme, Provenance::user);
  } catch (const StaleLexicon& e) {
    return error(500, e.what(), s.version);
  }
  std::uint64_t version = 0;
  {
    std::unique_lock lock(state_mutex_);
    state_.lexicon = std::move(next);
    version = ++state_.version;
  }
  return reply(200, json{{"index", index}, {"added", true}}, version);
}

ServiceResponse GlossService::evaluate(const std::string& body) const {
  const SessionSnapshot s = snapshot();
  if (!s.loaded()) return not_loaded(s.version);
  Corpus gold;
  LexiconSetting setting = LexiconSetting::train;
  DecodeOptions options = options_.decode;
  try {
    const json req = parse_body(body);
    if (req.contains("lexicon_setting"))
      setting = parse_lexicon_setting(req["lexicon_setting"].get<std::string>());
    if (req.contains("beam_width")) options.beam_width = req["beam_width"].get<int>();
    if (req.contains("corpus")) {
      std::istringstream in(req["corpus"].get<std::string>());
      gold = parse_corpus(in, "eval", Split::test);
    } else if (req.contains("path")) {
      gold = parse_corpus_file(req["path"].get<std::string>(), "eval", Split::test);
    } else {
      return error(400, "request needs 'corpus' or 'path'", s.version);
    }
  } catch (const json::exception& e) {
    return error(400, std::string("malformed request: ") + e.what(), s.version);
  } catch (const ParseError& e) {
    return reply(400, json{{"error", e.what()}, {"line", e.line()}}, s.version);
  } catch (const std::exception& e) {
    return error(400, e.what(), s.version);
  }
  try {
    const Evaluation result =
        evaluate_glosser(*s.encoder, *s.decoder, *s.lexicon, gold, setting, options);
    json report = json::parse(report_to_json(result.report));
    report["oracle_entries_added"] = result.oracle_entries_added;
    return reply(200, report, s.version);
  } catch (const std::invalid_argument& e) {
    return error(400, e.what(), s.version);
  }
}

ServiceResponse GlossService::info() const {
  const SessionSnapshot s = snapshot();
  json out{{"loaded", s.loaded()}};
  if (s.lexicon) {
    out["lexicon_size"] = s.lexicon->size() - 1;
    out["lexicon_fingerprint"] = nn::to_hex(s.lexicon->encoder_fingerprint());
    out["provenance_counts"] = {{"train", s.lexicon->count(Provenance::train)},
                                {"user", s.lexicon->count(Provenance::user)},
                                {"eval_oracle", s.lexicon->count(Provenance::eval_oracle)}};
  }
  if (s.encoder) {
    const auto& tc = s.encoder->config.transformer;
    out["encoder"] = {{"fingerprint", nn::to_hex(s.encoder->fingerprint())},
                      {"d_model", tc.d_model},
                      {"n_layers", tc.n_layers},
                      {"n_heads", tc.n_heads},
                      {"embedding_dim", s.encoder->config.embedding_dim},
                      {"tau", s.encoder->tau()}};
  }
  if (s.decoder) {
    const auto& tc = s.decoder->config.transformer;
    out["decoder"] = {{"encoder_fingerprint", nn::to_hex(s.decoder->encoder_fingerprint)},
                      {"d_model", tc.d_model},
                      {"n_layers", tc.n_layers},
                      {"n_heads", tc.n_heads},
                      {"kappa", s.decoder->kappa()}};
  }
  out["decode"] = {{"beam_width", options_.decode.beam_width},
                   {"max_len", options_.decode.max_len},
                   {"top_k", options_.decode.top_k}};
  if (!options_.run_config.empty()) out["run_config"] = options_.run_config;
  return reply(200, out, s.version);
}

ServiceResponse GlossService::handle(const std::string& method, const std::string& path,
                                     const std::string& body) {
  if (path == "/gloss" && method == "POST") return gloss(body);
  if (path == "/lexicon" && method == "GET") return list_lexicon();
  if (path == "/lexicon" && method == "POST") return add_lexicon_entry(body);
  if (path == "/evaluate" && method == "POST") return evaluate(body);
  if (path == "/info" && method == "GET") return info();
  const bool known = path == "/gloss" || path == "/lexicon" || path == "/evaluate" || path == "/info";
  return error(known ? 405 : 404, known ? "method not allowed" : "no such route",
               snapshot().version);
}

bool GlossService::bind(const std::string& host, int port) {
  server_ = std::make_unique<httplib::Server>();
  server_->set_default_headers({{"Access-Control-Allow-Origin", options_.cors_origin},
                                {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                                {"Access-Control-Allow-Headers", "Content-Type"}});
  auto route = [this](const httplib::Request& req, httplib::Response& res) {
    ServiceResponse r;
    try {
      r = handle(req.method, req.path, req.body);
    } catch (const std::exception& e) {
      r = error(500, e.what(), snapshot().version);
    }
    res.status = r.status;
    res.set_content(r.body, "application/json");
  };
  for (const char* path : {"/gloss", "/lexicon", "/evaluate", "/info"}) {
    server_->Get(path, route);
    server_->Post(path, route);
    server_->Options(path, [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  }
  if (port == 0) {
    port_ = server_->bind_to_any_port(host);
  } else {
    port_ = server_->bind_to_port(host, port) ? port : -1;
  }
  return port_ > 0;
}

void GlossService::serve() {
  if (server_) server_->listen_after_bind();
}

void GlossService::stop() {
  if (server_) server_->stop();
}

std::pair<std::string, int> resolve_bind_address(const std::optional<std::string>& host,
                                                 const std::optional<int>& port) {
  std::string h = "127.0.0.1";
  int p = 8080;
  if (const char* env = std::getenv("MORPHOGLOT_HOST"); env && *env) h = env;
  if (const char* env = std::getenv("MORPHOGLOT_PORT"); env && *env) p = std::stoi(env);
  if (host) h = *host;
  if (port) p = *port;
  return {h, p};
}

}  // namespace morphoglot
