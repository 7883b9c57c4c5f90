#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cir/dense.hpp"
#include "cir/embedding_store.hpp"
#include "cir/fusion_model.hpp"
#include "cir/jsonl.hpp"

namespace cir {

using RecallMap = std::map<std::size_t, double>;

/// Fraction of queries whose target row appears in the first K entries of
/// its ranked list. Throws UsageError when K exceeds a list's length.
RecallMap recall_at_k(std::span<const std::vector<std::uint32_t>> ranked, std::span<const std::uint32_t> targets,
                      std::span<const std::size_t> ks);

/// Top-`depth` candidate rows per query by descending cosine score, ties by
/// ascending id; `masked[i]` (when set) is excluded from query i's list.
std::vector<std::vector<std::uint32_t>> rank_candidates(const DenseMatrix& queries, const EmbeddingMatrix& candidates,
                                                        std::span<const std::optional<std::uint32_t>> masked,
                                                        std::size_t depth);

/// Recall@K restricted to each query's group members, reference excluded.
/// Every group must contain its target and at least K members besides the
/// reference.
RecallMap subset_recall_at_k(const DenseMatrix& queries, const EmbeddingMatrix& candidates,
                             std::span<const std::uint32_t> references, std::span<const std::uint32_t> targets,
                             std::span<const std::vector<std::uint32_t>> group_members,
                             std::span<const std::size_t> ks);

enum class Convention { fashioniq, cirr };

const char* to_string(Convention c) noexcept;
Convention parse_convention(std::string_view s);

/// fashioniq: mean of every R@K in `recall`. cirr: (R@5 + R_subset@1) / 2.
double rmean(const RecallMap& recall, const RecallMap& subset, Convention convention);

/// Half-away-from-zero rounding to `decimals` places of the decimal value
/// closest to x (so 81.385 -> 81.39 even though the double sits just below).
double round_decimal(double x, int decimals);

struct EvalQuery {
  std::string ref_id;
  std::string text_id;
  std::string target_id;
  std::optional<std::string> group_id;
  std::string split = "all";
};

/// Line-delimited {"ref_id", "text_id", "target_id", "group_id": str|null}
/// with an optional "split" field.
std::vector<EvalQuery> read_queries(const std::filesystem::path& path);
void write_queries(const std::filesystem::path& path, std::span<const EvalQuery> queries);

using Groups = std::unordered_map<std::string, std::vector<std::string>>;

/// Line-delimited {"group_id": str, "members": [str, ...]}.
Groups read_groups(const std::filesystem::path& path);
void write_groups(const std::filesystem::path& path, const std::map<std::string, std::vector<std::string>>& groups);

struct EvalOptions {
  Convention convention = Convention::fashioniq;
  std::vector<std::size_t> ks = {10, 50};
  std::vector<std::size_t> subset_ks;
  std::optional<bool> mask_reference;  // unset: on for cirr, off for fashioniq
};

struct EvalReport {
  Convention convention = Convention::fashioniq;
  RecallMap recall_at;         // mean over splits of per-split recall
  RecallMap subset_recall_at;  // over all queries
  std::map<std::string, RecallMap> per_split;
  double rmean = 0.0;
  std::size_t n_queries = 0;
  bool masked_reference = false;
  std::string checkpoint_fingerprint;  // filled in by callers that know the checkpoint file
};

json to_json(const EvalReport& report);

/// Query-side inputs already resolved to rows and encoded.
struct EncodedQueries {
  DenseMatrix queries;
  std::vector<std::uint32_t> references;  // row in candidates, or npos when absent
  std::vector<std::uint32_t> targets;
  std::vector<std::string> splits;
  std::vector<std::vector<std::uint32_t>> groups;  // empty unless subset recall is requested
};

inline constexpr std::uint32_t kNoRow = 0xffffffffu;

/// Scores encoded queries against already target-encoded candidates.
EvalReport evaluate_encoded(const EncodedQueries& queries, const EmbeddingMatrix& candidates, const EvalOptions& options);

/// Resolves ids, encodes queries with `params`, encodes the image corpus with
/// the target projection and evaluates. Throws DataError for unknown ids,
/// an empty query set or a missing group when subset metrics are requested.
EvalReport evaluate(const FusionParams& params, std::span<const EvalQuery> queries, const EmbeddingMatrix& texts,
                    const EmbeddingMatrix& images, const Groups* groups, const EvalOptions& options);

EncodedQueries encode_queries(const FusionParams& params, std::span<const EvalQuery> queries,
                              const EmbeddingMatrix& texts, const EmbeddingMatrix& images, const Groups* groups,
                              bool need_groups);

}  // namespace cir
