#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace cir {

/// Renders the captioning prompt "Please briefly describe the {type} in {k} words."
/// No pluralization: k = 1 still says "words".
std::string render_caption_prompt(std::string_view type_word, int k);

struct CaptionRequest {
  std::string image_id;
  std::string image_ref;  // file path or URL, opaque to the library
  std::string prompt;
  std::string type_word;
  int k = 0;
};

CaptionRequest make_caption_request(std::string image_id, std::string image_ref, std::string type_word, int k);

struct CaptionRecord {
  std::string image_id;
  std::string caption;
  std::string provider;
  int token_estimate = 0;
};

/// Whitespace-delimited word count.
int count_words(std::string_view text);
std::string trim(std::string_view text);

class CaptionProvider {
 public:
  virtual ~CaptionProvider() = default;
  virtual std::string name() const = 0;
  /// Raw caption text for one request. Throws ProviderError on failure.
  /// Must be safe to call from several threads at once.
  virtual std::string caption(const CaptionRequest& request) = 0;
};

/// Deterministic provider: exactly k words from a fixed vocabulary, seeded by
/// (image_id, seed). Needs no model and no network.
class StubCaptionProvider final : public CaptionProvider {
 public:
  explicit StubCaptionProvider(std::uint64_t seed) : seed_(seed) {}
  std::string name() const override { return "stub"; }
  std::string caption(const CaptionRequest& request) override;

 private:
  std::uint64_t seed_;
};

struct RetryPolicy {
  int attempts = 3;
  std::chrono::milliseconds initial_backoff{500};
};

/// POST {base_url}/caption with {"image_ref", "prompt"}; expects 200 with
/// {"caption": str}. Any other status, or a transport error, is retried with
/// exponential backoff and then surfaced as ProviderError.
class HttpCaptionProvider final : public CaptionProvider {
 public:
  explicit HttpCaptionProvider(std::string base_url, RetryPolicy retry = {},
                               std::chrono::seconds timeout = std::chrono::seconds(120));
  std::string name() const override { return "http"; }
  std::string caption(const CaptionRequest& request) override;

 private:
  std::string scheme_host_port_;
  std::string path_prefix_;
  RetryPolicy retry_;
  std::chrono::seconds timeout_;
};

/// Line-delimited JSON cache {"image_id", "caption", "provider"}. Appends are
/// serialized and flushed per record so an interrupted batch can resume.
class CaptionCache {
 public:
  explicit CaptionCache(std::filesystem::path path);

  std::optional<CaptionRecord> lookup(const std::string& image_id) const;
  void append(const CaptionRecord& record);
  std::size_t size() const;
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
  mutable std::mutex mutex_;
  std::unordered_map<std::string, CaptionRecord> records_;
};

struct CaptionBatchOptions {
  std::size_t fan_out = 4;
  CaptionCache* cache = nullptr;
};

/// One record per request, in request order. Cached ids are served from the
/// cache without calling the provider.
std::vector<CaptionRecord> caption_batch(std::span<const CaptionRequest> requests, CaptionProvider& provider,
                                         const CaptionBatchOptions& options = {});

/// Rewrites a captions file in canonical order (one line per record).
void write_captions(const std::filesystem::path& path, std::span<const CaptionRecord> records);
std::vector<CaptionRecord> read_captions(const std::filesystem::path& path);

}  // namespace cir
