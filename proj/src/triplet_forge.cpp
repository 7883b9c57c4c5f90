#include "cir/triplet_forge.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "cir/error.hpp"
#include "cir/jsonl.hpp"
#include "cir/parallel.hpp"
#include "cir/rng.hpp"

namespace cir {

RankWindow clamp_window(const PairMatchConfig& cfg, std::size_t n) {
  if (n < 2) throw UsageError("pair matching needs at least 2 images, got " + std::to_string(n));
  if (cfg.c0 >= cfg.c1) {
    throw UsageError("rank window needs c0 < c1, got [" + std::to_string(cfg.c0) + ", " + std::to_string(cfg.c1) +
                     ")");
  }
  RankWindow w{cfg.c0, std::min(cfg.c1, n - 1)};
  if (w.begin >= w.end) {
    throw UsageError("rank window [" + std::to_string(cfg.c0) + ", " + std::to_string(cfg.c1) +
                     ") is empty for " + std::to_string(n) + " images");
  }
  return w;
}

PairMatchConfig fractional_config(double f0, double f1, std::size_t n, std::uint64_t seed) {
  if (!(f0 >= 0.0 && f0 < f1 && f1 <= 1.0)) {
    throw UsageError("fractional window needs 0 <= c0 < c1 <= 1");
  }
  if (n < 2) throw UsageError("pair matching needs at least 2 images");
  const auto ranks = static_cast<double>(n - 1);
  PairMatchConfig cfg;
  cfg.c0 = static_cast<std::size_t>(std::floor(f0 * ranks));
  cfg.c1 = std::max(cfg.c0 + 1, static_cast<std::size_t>(std::ceil(f1 * ranks)));
  cfg.seed = seed;
  return cfg;
}

std::vector<ImagePair> match_pairs(const EmbeddingMatrix& embeddings, const PairMatchConfig& cfg,
                                   std::size_t chunk) {
  if (!embeddings.normalized()) throw DataError("pair matching needs normalized embeddings");
  const std::size_t n = embeddings.rows();
  const RankWindow window = clamp_window(cfg, n);
  if (chunk == 0) throw UsageError("chunk must be positive");
  const auto& key = embeddings.id_order();
  std::vector<ImagePair> out(n);

  for_each_block(embeddings.view(), embeddings, chunk, [&](const SimilarityBlock& block) {
    parallel_for(block.row_count, [&](std::size_t begin, std::size_t end) {
      std::vector<std::uint32_t> others;
      others.reserve(n - 1);
      for (std::size_t r = begin; r < end; ++r) {
        const std::size_t ref = block.first_row + r;
        const auto scores = block.row(r);
        const auto before = [&](std::uint32_t a, std::uint32_t b) {
          return ranks_before(scores[a], key[a], scores[b], key[b]);
        };
        others.clear();
        for (std::uint32_t j = 0; j < n; ++j) {
          if (j != ref) others.push_back(j);
        }
        // Partition so positions [begin, end) hold exactly the window ranks.
        const auto first = others.begin() + static_cast<std::ptrdiff_t>(window.begin);
        const auto last = others.begin() + static_cast<std::ptrdiff_t>(window.end);
        std::nth_element(others.begin(), first, others.end(), before);
        if (last != others.end()) std::nth_element(first, last, others.end(), before);
        std::sort(first, last, before);
        Rng rng(stream_seed(cfg.seed, ref));
        const std::uint32_t target = *(first + static_cast<std::ptrdiff_t>(rng.uniform_index(window.size())));
        out[ref] = ImagePair{embeddings.id(ref), embeddings.id(target)};
      }
    });
  });
  return out;
}

std::vector<Quadruplet> build_quadruplets(std::span<const ImagePair> pairs,
                                          std::span<const CaptionRecord> captions) {
  std::unordered_map<std::string, const std::string*> by_id;
  for (const auto& c : captions) by_id[c.image_id] = &c.caption;
  const auto lookup = [&](const std::string& id) -> const std::string& {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw DataError("no caption for image \"" + id + "\"");
    return *it->second;
  };
  std::vector<Quadruplet> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    if (p.ref_id == p.target_id) throw DataError("pair references itself: \"" + p.ref_id + "\"");
    out.push_back({p.ref_id, lookup(p.ref_id), p.target_id, lookup(p.target_id)});
  }
  return out;
}

std::string render_modified_text(const Quadruplet& q, int template_id) {
  if (q.ref_caption.empty() || q.target_caption.empty()) throw DataError("template captions must be nonempty");
  switch (template_id) {
    case 0: return q.target_caption + " instead of " + q.ref_caption;
    case 1: return "Unlike " + q.ref_caption + ", I want " + q.target_caption;
    case 2: return q.target_caption;
    default: throw UsageError("unknown template id " + std::to_string(template_id));
  }
}

const char* to_string(Provenance p) noexcept {
  return p == Provenance::annotated ? "annotated" : "generated";
}

std::vector<Triplet> forge_triplets(std::span<const Quadruplet> quads, std::span<const int> templates,
                                    std::size_t budget, std::uint64_t seed) {
  if (templates.empty()) throw UsageError("template set is empty");
  std::set<int> unique(templates.begin(), templates.end());
  for (int t : unique) {
    if (t < 0 || t >= kTemplateCount) throw UsageError("unknown template id " + std::to_string(t));
  }
  if (budget == 0) throw UsageError("budget must be positive");
  if (budget > quads.size()) {
    throw UsageError("budget " + std::to_string(budget) + " exceeds the " + std::to_string(quads.size()) +
                     " available quadruplets");
  }
  // Partial Fisher-Yates: the first `budget` slots are a uniform sample.
  std::vector<std::size_t> idx(quads.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = 0; i < budget; ++i) {
    const std::size_t j = i + rng.uniform_index(idx.size() - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(budget);
  std::sort(idx.begin(), idx.end());

  std::vector<Triplet> out;
  out.reserve(budget * unique.size());
  for (std::size_t i : idx) {
    const Quadruplet& q = quads[i];
    if (q.ref_id == q.target_id) throw DataError("quadruplet references itself: \"" + q.ref_id + "\"");
    for (int t : unique) {
      out.push_back({q.ref_id, render_modified_text(q, t), q.target_id, Provenance::generated, t});
    }
  }
  return out;
}

void validate_triplet(const Triplet& t) {
  if (t.ref_id.empty() || t.target_id.empty()) throw DataError("triplet ids must be nonempty");
  if (t.ref_id == t.target_id) throw DataError("triplet reference equals target: \"" + t.ref_id + "\"");
  if (t.modified_text.empty()) throw DataError("triplet modified text is empty");
  const bool generated = t.provenance == Provenance::generated;
  if (generated != t.template_id.has_value()) {
    throw DataError("template_id must be set exactly for generated triplets");
  }
  if (t.template_id && (*t.template_id < 0 || *t.template_id >= kTemplateCount)) {
    throw DataError("template_id out of range");
  }
}

void write_pairs(const std::filesystem::path& path, std::span<const ImagePair> pairs) {
  std::vector<json> lines;
  lines.reserve(pairs.size());
  for (const auto& p : pairs) lines.push_back({{"ref_id", p.ref_id}, {"target_id", p.target_id}});
  write_jsonl(path, lines);
}

std::vector<ImagePair> read_pairs(const std::filesystem::path& path) {
  std::vector<ImagePair> out;
  read_jsonl(path, [&](const json& j, std::size_t) {
    out.push_back({require_string(j, "ref_id"), require_string(j, "target_id")});
  });
  return out;
}

void write_triplets(const std::filesystem::path& path, std::span<const Triplet> triplets) {
  std::vector<json> lines;
  lines.reserve(triplets.size());
  for (const auto& t : triplets) {
    json j{{"ref_id", t.ref_id},
           {"modified_text", t.modified_text},
           {"target_id", t.target_id},
           {"provenance", to_string(t.provenance)}};
    j["template_id"] = t.template_id ? json(*t.template_id) : json(nullptr);
    lines.push_back(std::move(j));
  }
  write_jsonl(path, lines);
}

std::vector<Triplet> read_triplets(const std::filesystem::path& path) {
  std::vector<Triplet> out;
  read_jsonl(path, [&](const json& j, std::size_t) {
    Triplet t;
    t.ref_id = require_string(j, "ref_id");
    t.modified_text = require_string(j, "modified_text");
    t.target_id = require_string(j, "target_id");
    const std::string prov = require_string(j, "provenance");
    if (prov == "annotated") {
      t.provenance = Provenance::annotated;
    } else if (prov == "generated") {
      t.provenance = Provenance::generated;
    } else {
      throw DataError("provenance must be \"annotated\" or \"generated\", got \"" + prov + "\"");
    }
    if (auto it = j.find("template_id"); it != j.end() && !it->is_null()) {
      if (!it->is_number_integer()) throw DataError("template_id must be an integer or null");
      t.template_id = it->get<int>();
    }
    validate_triplet(t);
    out.push_back(std::move(t));
  });
  return out;
}

}  // namespace cir
