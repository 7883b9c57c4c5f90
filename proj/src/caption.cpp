#include "cir/caption.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cctype>
#include <exception>
#include <fstream>
#include <thread>

#include "cir/error.hpp"
#include "cir/jsonl.hpp"
#include "cir/rng.hpp"

namespace cir {
namespace {

constexpr std::array<std::string_view, 64> kVocabulary = {
    "a",       "red",     "blue",    "green",   "black",    "white",   "striped", "floral",
    "long",    "short",   "sleeve",  "dress",   "shirt",    "top",     "with",    "and",
    "dog",     "cat",     "person",  "standing", "sitting", "on",      "grass",   "beach",
    "street",  "car",     "table",   "wooden",  "bright",   "dark",    "small",   "large",
    "two",     "three",   "near",    "under",   "over",     "the",     "sunny",   "cloudy",
    "pattern", "collar",  "v-neck",  "denim",   "cotton",   "lace",    "printed", "logo",
    "yellow",  "pink",    "grey",    "orange",  "purple",   "brown",   "tall",    "round",
    "open",    "closed",  "indoor",  "outdoor", "morning",  "night",   "river",   "mountain"};

}  // namespace

std::string render_caption_prompt(std::string_view type_word, int k) {
  if (type_word.empty()) throw UsageError("caption type word must be nonempty");
  if (k < 1) throw UsageError("caption word count k must be >= 1");
  std::string out = "Please briefly describe the ";
  out += type_word;
  out += " in ";
  out += std::to_string(k);
  out += " words.";
  return out;
}

CaptionRequest make_caption_request(std::string image_id, std::string image_ref, std::string type_word, int k) {
  CaptionRequest r;
  r.prompt = render_caption_prompt(type_word, k);
  r.image_id = std::move(image_id);
  r.image_ref = std::move(image_ref);
  r.type_word = std::move(type_word);
  r.k = k;
  return r;
}

int count_words(std::string_view text) {
  int n = 0;
  bool in_word = false;
  for (unsigned char c : text) {
    const bool space = std::isspace(c) != 0;
    if (!space && !in_word) ++n;
    in_word = !space;
  }
  return n;
}

std::string trim(std::string_view text) {
  const auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  auto begin = std::find_if_not(text.begin(), text.end(), is_space);
  auto end = std::find_if_not(text.rbegin(), std::string_view::reverse_iterator(begin), is_space).base();
  return std::string(begin, end);
}

std::string StubCaptionProvider::caption(const CaptionRequest& request) {
  Rng rng(stream_seed(seed_, fnv1a64(request.image_id)));
  std::string out;
  for (int i = 0; i < request.k; ++i) {
    if (i > 0) out.push_back(' ');
    out += kVocabulary[rng.uniform_index(kVocabulary.size())];
  }
  return out;
}

CaptionCache::CaptionCache(std::filesystem::path path) : path_(std::move(path)) {
  if (!std::filesystem::exists(path_)) return;
  for (auto& r : read_captions(path_)) records_[r.image_id] = std::move(r);
}

std::optional<CaptionRecord> CaptionCache::lookup(const std::string& image_id) const {
  std::lock_guard lock(mutex_);
  auto it = records_.find(image_id);
  if (it == records_.end()) return std::nullopt;
  return it->second;
}

void CaptionCache::append(const CaptionRecord& record) {
  std::lock_guard lock(mutex_);
  std::ofstream out(path_, std::ios::binary | std::ios::app);
  if (!out) throw DataError("cannot append to caption cache " + path_.string());
  out << json{{"image_id", record.image_id}, {"caption", record.caption}, {"provider", record.provider}}.dump()
      << '\n';
  records_[record.image_id] = record;
}

std::size_t CaptionCache::size() const {
  std::lock_guard lock(mutex_);
  return records_.size();
}

std::vector<CaptionRecord> caption_batch(std::span<const CaptionRequest> requests, CaptionProvider& provider,
                                         const CaptionBatchOptions& options) {
  std::vector<CaptionRecord> out(requests.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  const auto work = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= requests.size()) return;
      {
        std::lock_guard lock(failure_mutex);
        if (failure) return;
      }
      const CaptionRequest& req = requests[i];
      try {
        if (options.cache != nullptr) {
          if (auto cached = options.cache->lookup(req.image_id)) {
            out[i] = *cached;
            out[i].token_estimate = count_words(out[i].caption);
            continue;
          }
        }
        CaptionRecord rec;
        rec.image_id = req.image_id;
        rec.caption = trim(provider.caption(req));
        rec.provider = provider.name();
        if (rec.caption.empty()) {
          throw ProviderError("provider returned an empty caption for image \"" + req.image_id + "\"");
        }
        rec.token_estimate = count_words(rec.caption);
        if (options.cache != nullptr) options.cache->append(rec);
        out[i] = std::move(rec);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };

  const std::size_t workers = std::max<std::size_t>(1, std::min(options.fan_out, requests.size()));
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

void write_captions(const std::filesystem::path& path, std::span<const CaptionRecord> records) {
  std::vector<json> lines;
  lines.reserve(records.size());
  for (const auto& r : records) {
    lines.push_back({{"image_id", r.image_id}, {"caption", r.caption}, {"provider", r.provider}});
  }
  write_jsonl(path, lines);
}

std::vector<CaptionRecord> read_captions(const std::filesystem::path& path) {
  std::vector<CaptionRecord> out;
  read_jsonl(path, [&](const json& j, std::size_t) {
    CaptionRecord r;
    r.image_id = require_string(j, "image_id");
    r.caption = require_string(j, "caption");
    r.provider = j.contains("provider") ? require_string(j, "provider") : std::string("unknown");
    if (trim(r.caption).empty()) throw DataError("empty caption for image \"" + r.image_id + "\"");
    r.token_estimate = count_words(r.caption);
    out.push_back(std::move(r));
  });
  return out;
}

}  // namespace cir
