#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "genselect/errors.hpp"
#include "genselect/hashing.hpp"
#include "genselect/prompt_kit.hpp"

namespace genselect {

enum class RequestKind { Generation, Summary, Judgment, Verification, Equivalence };

inline const char* to_string(RequestKind k) {
  switch (k) {
    case RequestKind::Generation:
      return "generation";
    case RequestKind::Summary:
      return "summary";
    case RequestKind::Judgment:
      return "judgment";
    case RequestKind::Verification:
      return "verification";
    case RequestKind::Equivalence:
      return "equivalence";
  }
  return "generation";
}

inline RequestKind request_kind_from_string(std::string_view s) {
  if (s == "generation") return RequestKind::Generation;
  if (s == "summary") return RequestKind::Summary;
  if (s == "judgment") return RequestKind::Judgment;
  if (s == "verification") return RequestKind::Verification;
  if (s == "equivalence") return RequestKind::Equivalence;
  throw Error("unknown request kind '" + std::string(s) + "'");
}

// Routing and bookkeeping metadata. Never sent over the wire and never part
// of the fixture key.
struct RequestTags {
  RequestKind kind = RequestKind::Generation;
  std::string problem_id;
  // Candidates in prompt order (judgments and verifications).
  std::vector<std::string> candidate_ids;
  // Human-readable position in the run, e.g. "genselect/rep=0/round=1/group=2".
  std::string label;
  std::optional<std::uint64_t> permutation_seed;
};

struct GenerationRequest {
  std::vector<Message> messages;
  double temperature = 0.6;
  double top_p = 0.95;
  std::size_t max_output_tokens = 32768;
  std::optional<std::int64_t> seed_hint;
  // Which independent draw of this exact request this is.
  std::size_t sample_index = 0;
  RequestTags tags;

  void validate() const {
    if (messages.empty()) throw InvalidRequest("request has no messages");
    if (!(temperature >= 0.0 && temperature <= 2.0)) {
      throw InvalidRequest("temperature must lie in [0, 2]");
    }
    if (!(top_p > 0.0 && top_p <= 1.0)) throw InvalidRequest("top_p must lie in (0, 1]");
    if (max_output_tokens < 1) throw InvalidRequest("max_output_tokens must be >= 1");
  }
};

enum class FinishReason { Stop, Length, Error };

inline const char* to_string(FinishReason r) {
  switch (r) {
    case FinishReason::Stop:
      return "stop";
    case FinishReason::Length:
      return "length";
    case FinishReason::Error:
      return "error";
  }
  return "error";
}

inline FinishReason finish_reason_from_string(std::string_view s) {
  if (s == "stop") return FinishReason::Stop;
  if (s == "length") return FinishReason::Length;
  return FinishReason::Error;
}

struct GenerationResult {
  std::string text;
  std::size_t prompt_tokens = 0;
  std::size_t output_tokens = 0;
  FinishReason finish_reason = FinishReason::Stop;
  std::int64_t latency_ms = 0;
};

inline nlohmann::json request_key_document(const GenerationRequest& req) {
  nlohmann::json messages = nlohmann::json::array();
  for (const auto& m : req.messages) {
    messages.push_back({{"role", m.role}, {"content", m.text}});
  }
  return {{"messages", std::move(messages)},
          {"temperature", req.temperature},
          {"top_p", req.top_p},
          {"max_output_tokens", req.max_output_tokens},
          {"sample_index", req.sample_index}};
}

// Stable content hash used as the replay key.
inline std::string request_key(const GenerationRequest& req) {
  return sha256_hex(request_key_document(req).dump());
}

// Hash of the prompt alone (no sampling parameters).
inline std::string prompt_hash(std::span<const Message> messages) {
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& m : messages) doc.push_back({m.role, m.text});
  return sha256_hex(doc.dump());
}

inline nlohmann::json to_json(const GenerationResult& r) {
  return {{"text", r.text},
          {"prompt_tokens", r.prompt_tokens},
          {"output_tokens", r.output_tokens},
          {"finish_reason", to_string(r.finish_reason)},
          {"latency_ms", r.latency_ms}};
}

inline GenerationResult result_from_json(const nlohmann::json& j) {
  GenerationResult r;
  r.text = j.at("text").get<std::string>();
  r.prompt_tokens = j.value("prompt_tokens", std::size_t{0});
  r.output_tokens = j.value("output_tokens", std::size_t{0});
  r.finish_reason = finish_reason_from_string(j.value("finish_reason", "stop"));
  r.latency_ms = j.value("latency_ms", std::int64_t{0});
  return r;
}

// Anything that can complete a chat request. Implementations must allow
// concurrent generate() calls.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual GenerationResult generate(const GenerationRequest& request) = 0;
  // True when identical requests always yield identical results; wall-clock
  // fields are zeroed in records for such backends.
  virtual bool deterministic() const { return false; }
};

// Directory of fixtures, one `<key>.json` document per keyed entry.
// Concurrent reads are allowed; writes are serialized.
class ReplayStore {
 public:
  explicit ReplayStore(std::filesystem::path dir) : dir_(std::move(dir)) {}

  const std::filesystem::path& dir() const noexcept { return dir_; }

  std::optional<GenerationResult> load(const std::string& key) const {
    std::shared_lock lock(mutex_);
    const auto path = path_for(key);
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::nullopt;
    nlohmann::json doc = nlohmann::json::parse(in);
    return result_from_json(doc.at("result"));
  }

  void store(const GenerationRequest& request, const GenerationResult& result) {
    store(request_key(request), result, request_key_document(request));
  }

  // `request_doc` is informational; lookups use the key alone.
  void store(const std::string& key, const GenerationResult& result,
             const nlohmann::json& request_doc = nullptr) {
    std::unique_lock lock(mutex_);
    std::filesystem::create_directories(dir_);
    nlohmann::json doc = {{"key", key}, {"request", request_doc}, {"result", to_json(result)}};
    const auto path = path_for(key);
    const auto tmp = path.string() + ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw BackendError("cannot write fixture " + tmp);
      out << doc.dump(2) << '\n';
    }
    std::filesystem::rename(tmp, path);
  }

  std::size_t size() const {
    std::shared_lock lock(mutex_);
    if (!std::filesystem::exists(dir_)) return 0;
    std::size_t n = 0;
    for (const auto& e : std::filesystem::directory_iterator(dir_)) {
      if (e.path().extension() == ".json") ++n;
    }
    return n;
  }

 private:
  std::filesystem::path path_for(const std::string& key) const {
    return dir_ / (key + ".json");
  }

  std::filesystem::path dir_;
  mutable std::shared_mutex mutex_;
};

class ReplayBackend final : public Backend {
 public:
  explicit ReplayBackend(ReplayStore& store) : store_(store) {}

  GenerationResult generate(const GenerationRequest& request) override {
    request.validate();
    const std::string key = request_key(request);
    auto hit = store_.load(key);
    if (!hit) throw MissingFixture(key);
    hit->latency_ms = 0;
    return *hit;
  }

  bool deterministic() const override { return true; }

 private:
  ReplayStore& store_;
};

// Forwards to `inner` and saves every result as a fixture.
class CapturingBackend final : public Backend {
 public:
  CapturingBackend(Backend& inner, ReplayStore& store) : inner_(inner), store_(store) {}

  GenerationResult generate(const GenerationRequest& request) override {
    auto result = inner_.generate(request);
    store_.store(request, result);
    return result;
  }

  bool deterministic() const override { return inner_.deterministic(); }

 private:
  Backend& inner_;
  ReplayStore& store_;
};

// Dispatches by request kind; kinds without a route go to the fallback.
class RoutingBackend final : public Backend {
 public:
  explicit RoutingBackend(Backend& fallback) : fallback_(fallback) {}

  RoutingBackend& route(RequestKind kind, Backend& backend) {
    routes_[kind] = &backend;
    return *this;
  }

  GenerationResult generate(const GenerationRequest& request) override {
    return target(request.tags.kind).generate(request);
  }

  bool deterministic() const override {
    if (!fallback_.deterministic()) return false;
    for (const auto& [kind, b] : routes_) {
      if (!b->deterministic()) return false;
    }
    return true;
  }

 private:
  Backend& target(RequestKind kind) const {
    auto it = routes_.find(kind);
    return it == routes_.end() ? fallback_ : *it->second;
  }

  Backend& fallback_;
  std::map<RequestKind, Backend*> routes_;
};

// One row of the append-only call log.
struct RunRecord {
  RequestKind kind = RequestKind::Generation;
  std::string problem_id;
  std::string request_hash;
  std::string label;
  std::vector<std::string> candidate_ids;
  std::string text;
  std::size_t prompt_tokens = 0;
  std::size_t output_tokens = 0;
  FinishReason finish_reason = FinishReason::Stop;
  // The call threw; text holds the error message and usage is zero.
  bool failed = false;
  std::int64_t started_at_ms = 0;
  std::int64_t finished_at_ms = 0;
  std::int64_t latency_ms = 0;
  std::size_t sample_index = 0;
  std::optional<std::int64_t> seed_hint;
  std::optional<std::uint64_t> permutation_seed;
  double temperature = 0.0;
  double top_p = 1.0;
  std::size_t max_output_tokens = 0;
};

template <typename T>
nlohmann::ordered_json or_null(const std::optional<T>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

inline nlohmann::ordered_json to_json(const RunRecord& r) {
  nlohmann::ordered_json j;
  j["kind"] = to_string(r.kind);
  j["problem_id"] = r.problem_id;
  j["request_hash"] = r.request_hash;
  j["label"] = r.label;
  j["candidate_ids"] = r.candidate_ids;
  j["text"] = r.text;
  j["usage"] = {{"prompt_tokens", r.prompt_tokens}, {"output_tokens", r.output_tokens}};
  j["finish_reason"] = to_string(r.finish_reason);
  j["status"] = r.failed ? "failed" : "ok";
  j["timestamps"] = {{"started_at_ms", r.started_at_ms},
                     {"finished_at_ms", r.finished_at_ms},
                     {"latency_ms", r.latency_ms}};
  nlohmann::ordered_json seeds;
  seeds["sample_index"] = r.sample_index;
  seeds["seed_hint"] = or_null(r.seed_hint);
  seeds["permutation_seed"] = or_null(r.permutation_seed);
  j["seeds"] = std::move(seeds);
  j["sampling"] = {{"temperature", r.temperature},
                   {"top_p", r.top_p},
                   {"max_output_tokens", r.max_output_tokens}};
  return j;
}

inline RunRecord run_record_from_json(const nlohmann::json& j) {
  RunRecord r;
  r.kind = request_kind_from_string(j.at("kind").get<std::string>());
  r.problem_id = j.at("problem_id").get<std::string>();
  r.request_hash = j.at("request_hash").get<std::string>();
  r.label = j.value("label", "");
  r.candidate_ids = j.value("candidate_ids", std::vector<std::string>{});
  r.text = j.at("text").get<std::string>();
  const auto& usage = j.at("usage");
  r.prompt_tokens = usage.value("prompt_tokens", std::size_t{0});
  r.output_tokens = usage.value("output_tokens", std::size_t{0});
  r.finish_reason = finish_reason_from_string(j.value("finish_reason", "stop"));
  r.failed = j.value("status", "ok") == "failed";
  if (j.contains("timestamps")) {
    const auto& ts = j.at("timestamps");
    r.started_at_ms = ts.value("started_at_ms", std::int64_t{0});
    r.finished_at_ms = ts.value("finished_at_ms", std::int64_t{0});
    r.latency_ms = ts.value("latency_ms", std::int64_t{0});
  }
  if (j.contains("seeds")) {
    const auto& s = j.at("seeds");
    r.sample_index = s.value("sample_index", std::size_t{0});
    if (s.contains("seed_hint") && !s.at("seed_hint").is_null()) {
      r.seed_hint = s.at("seed_hint").get<std::int64_t>();
    }
    if (s.contains("permutation_seed") && !s.at("permutation_seed").is_null()) {
      r.permutation_seed = s.at("permutation_seed").get<std::uint64_t>();
    }
  }
  if (j.contains("sampling")) {
    const auto& s = j.at("sampling");
    r.temperature = s.value("temperature", 0.0);
    r.top_p = s.value("top_p", 1.0);
    r.max_output_tokens = s.value("max_output_tokens", std::size_t{0});
  }
  return r;
}

// Collects one RunRecord per model call. Thread-safe.
class RecordCollector {
 public:
  void append(RunRecord record) {
    std::lock_guard lock(mutex_);
    records_.push_back(std::move(record));
  }

  // Records in a deterministic order regardless of call interleaving.
  std::vector<RunRecord> take_sorted() {
    std::lock_guard lock(mutex_);
    std::vector<RunRecord> out = std::move(records_);
    records_.clear();
    std::stable_sort(out.begin(), out.end(), [](const RunRecord& a, const RunRecord& b) {
      return std::tie(a.problem_id, a.kind, a.label, a.sample_index, a.request_hash) <
             std::tie(b.problem_id, b.kind, b.label, b.sample_index, b.request_hash);
    });
    return out;
  }

 private:
  std::mutex mutex_;
  std::vector<RunRecord> records_;
};

// Decorator that logs every call (successful or not) into a collector.
class LoggingBackend final : public Backend {
 public:
  LoggingBackend(Backend& inner, RecordCollector& sink) : inner_(inner), sink_(sink) {}

  GenerationResult generate(const GenerationRequest& request) override {
    using clock = std::chrono::system_clock;
    const bool det = inner_.deterministic();
    const auto now_ms = [] {
      return std::chrono::duration_cast<std::chrono::milliseconds>(
                 clock::now().time_since_epoch())
          .count();
    };
    RunRecord rec;
    rec.kind = request.tags.kind;
    rec.problem_id = request.tags.problem_id;
    rec.request_hash = request_key(request);
    rec.label = request.tags.label;
    rec.candidate_ids = request.tags.candidate_ids;
    rec.sample_index = request.sample_index;
    rec.seed_hint = request.seed_hint;
    rec.permutation_seed = request.tags.permutation_seed;
    rec.temperature = request.temperature;
    rec.top_p = request.top_p;
    rec.max_output_tokens = request.max_output_tokens;
    rec.started_at_ms = det ? 0 : now_ms();
    try {
      GenerationResult result = inner_.generate(request);
      rec.text = result.text;
      rec.prompt_tokens = result.prompt_tokens;
      rec.output_tokens = result.output_tokens;
      rec.finish_reason = result.finish_reason;
      rec.finished_at_ms = det ? 0 : now_ms();
      rec.latency_ms = det ? 0 : result.latency_ms;
      sink_.append(std::move(rec));
      return result;
    } catch (const std::exception& e) {
      rec.text = std::string("error: ") + e.what();
      rec.finish_reason = FinishReason::Error;
      rec.failed = true;
      rec.finished_at_ms = det ? 0 : now_ms();
      sink_.append(std::move(rec));
      throw;
    }
  }

  bool deterministic() const override { return inner_.deterministic(); }

 private:
  Backend& inner_;
  RecordCollector& sink_;
};

// Converts logged calls back into replay fixtures so a finished run can be
// replayed offline. Failed calls are skipped. Returns the number written.
inline std::size_t export_fixtures(std::span<const RunRecord> records, ReplayStore& store) {
  std::size_t written = 0;
  for (const auto& r : records) {
    if (r.failed) continue;
    GenerationResult result;
    result.text = r.text;
    result.prompt_tokens = r.prompt_tokens;
    result.output_tokens = r.output_tokens;
    result.finish_reason = r.finish_reason;
    store.store(r.request_hash, result);
    ++written;
  }
  return written;
}

}  // namespace genselect
