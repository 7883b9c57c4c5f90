#include "cir/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <numeric>

#include "cir/contrastive.hpp"
#include "cir/error.hpp"
#include "cir/kernels.hpp"
#include "cir/parallel.hpp"

namespace cir {

RecallMap recall_at_k(std::span<const std::vector<std::uint32_t>> ranked, std::span<const std::uint32_t> targets,
                      std::span<const std::size_t> ks) {
  if (ranked.size() != targets.size()) throw UsageError("one ranked list per target is required");
  RecallMap out;
  for (std::size_t k : ks) {
    if (k == 0) throw UsageError("K must be >= 1");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < ranked.size(); ++i) {
      if (k > ranked[i].size()) {
        throw UsageError("K=" + std::to_string(k) + " exceeds ranked list length " + std::to_string(ranked[i].size()));
      }
      const auto end = ranked[i].begin() + static_cast<std::ptrdiff_t>(k);
      if (std::find(ranked[i].begin(), end, targets[i]) != end) ++hits;
    }
    out[k] = ranked.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(ranked.size());
  }
  return out;
}

std::vector<std::vector<std::uint32_t>> rank_candidates(const DenseMatrix& queries, const EmbeddingMatrix& candidates,
                                                        std::span<const std::optional<std::uint32_t>> masked,
                                                        std::size_t depth) {
  if (queries.cols != candidates.dim()) throw DataError("query dim does not match the candidates");
  if (!masked.empty() && masked.size() != queries.rows) throw UsageError("mask list length mismatch");
  const std::size_t n = candidates.rows();
  const auto& key = candidates.id_order();
  const auto& k = kernels::active();
  std::vector<std::vector<std::uint32_t>> out(queries.rows);
  parallel_for(queries.rows, [&](std::size_t begin, std::size_t end) {
    std::vector<double> scores(n);
    std::vector<std::uint32_t> order;
    for (std::size_t i = begin; i < end; ++i) {
      const auto q = queries.row(i);
      for (std::size_t j = 0; j < n; ++j) scores[j] = k.dot_f64_f32(q.data(), candidates.row(j).data(), q.size());
      order.clear();
      const std::uint32_t skip = masked.empty() || !masked[i] ? kNoRow : *masked[i];
      for (std::uint32_t j = 0; j < n; ++j) {
        if (j != skip) order.push_back(j);
      }
      const std::size_t take = std::min(depth, order.size());
      const auto before = [&](std::uint32_t a, std::uint32_t b) { return ranks_before(scores[a], key[a], scores[b], key[b]); };
      std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(), before);
      order.resize(take);
      out[i] = order;
    }
  });
  return out;
}

RecallMap subset_recall_at_k(const DenseMatrix& queries, const EmbeddingMatrix& candidates,
                             std::span<const std::uint32_t> references, std::span<const std::uint32_t> targets,
                             std::span<const std::vector<std::uint32_t>> group_members,
                             std::span<const std::size_t> ks) {
  const std::size_t nq = queries.rows;
  if (references.size() != nq || targets.size() != nq || group_members.size() != nq) {
    throw UsageError("subset recall inputs must have one entry per query");
  }
  const std::size_t max_k = ks.empty() ? 0 : *std::max_element(ks.begin(), ks.end());
  const auto& key = candidates.id_order();
  std::vector<std::vector<std::uint32_t>> ranked(nq);
  for (std::size_t i = 0; i < nq; ++i) {
    std::vector<std::uint32_t> pool;
    for (std::uint32_t m : group_members[i]) {
      if (m != references[i]) pool.push_back(m);
    }
    if (std::find(pool.begin(), pool.end(), targets[i]) == pool.end()) {
      throw DataError("target \"" + candidates.id(targets[i]) + "\" is outside its query's group");
    }
    if (pool.size() < max_k) {
      throw DataError("group of query " + std::to_string(i) + " has " + std::to_string(pool.size()) +
                      " candidates besides the reference, fewer than K=" + std::to_string(max_k));
    }
    const auto q = queries.row(i);
    std::vector<double> scores(pool.size());
    for (std::size_t j = 0; j < pool.size(); ++j) scores[j] = kernels::dot(q, candidates.row(pool[j]));
    std::vector<std::size_t> order(pool.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return ranks_before(scores[a], key[pool[a]], scores[b], key[pool[b]]);
    });
    ranked[i].reserve(pool.size());
    for (std::size_t j : order) ranked[i].push_back(pool[j]);
  }
  return recall_at_k(ranked, targets, ks);
}

const char* to_string(Convention c) noexcept { return c == Convention::cirr ? "cirr" : "fashioniq"; }

Convention parse_convention(std::string_view s) {
  if (s == "fashioniq") return Convention::fashioniq;
  if (s == "cirr") return Convention::cirr;
  throw UsageError("unknown convention \"" + std::string(s) + "\" (expected fashioniq or cirr)");
}

double rmean(const RecallMap& recall, const RecallMap& subset, Convention convention) {
  if (convention == Convention::fashioniq) {
    if (recall.empty()) throw DataError("fashioniq Rmean needs at least one R@K value");
    double s = 0.0;
    for (const auto& [k, v] : recall) s += v;
    return s / static_cast<double>(recall.size());
  }
  auto r5 = recall.find(5);
  auto s1 = subset.find(1);
  if (r5 == recall.end()) throw DataError("cirr Rmean needs R@5");
  if (s1 == subset.end()) throw DataError("cirr Rmean needs R_subset@1");
  return (r5->second + s1->second) / 2.0;
}

double round_decimal(double x, int decimals) {
  // %.15g recovers the shortest decimal the double stands for; rounding that
  // string avoids binary artefacts such as 81.385 -> 81.38499999999999.
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.15g", x);
  const double clean = std::strtod(buf, nullptr);
  const double scale = std::pow(10.0, decimals);
  const double scaled = clean * scale;
  const double rounded = std::floor(std::abs(scaled) + 0.5 + 1e-9);
  return std::copysign(rounded, scaled) / scale;
}

std::vector<EvalQuery> read_queries(const std::filesystem::path& path) {
  std::vector<EvalQuery> out;
  read_jsonl(path, [&](const json& j, std::size_t) {
    EvalQuery q;
    q.ref_id = require_string(j, "ref_id");
    q.text_id = require_string(j, "text_id");
    q.target_id = require_string(j, "target_id");
    if (auto it = j.find("group_id"); it != j.end() && !it->is_null()) {
      if (!it->is_string()) throw DataError("group_id must be a string or null");
      q.group_id = it->get<std::string>();
    }
    if (auto it = j.find("split"); it != j.end() && !it->is_null()) q.split = it->get<std::string>();
    out.push_back(std::move(q));
  });
  return out;
}

void write_queries(const std::filesystem::path& path, std::span<const EvalQuery> queries) {
  std::vector<json> lines;
  for (const auto& q : queries) {
    json j{{"ref_id", q.ref_id}, {"text_id", q.text_id}, {"target_id", q.target_id}};
    j["group_id"] = q.group_id ? json(*q.group_id) : json(nullptr);
    if (q.split != "all") j["split"] = q.split;
    lines.push_back(std::move(j));
  }
  write_jsonl(path, lines);
}

Groups read_groups(const std::filesystem::path& path) {
  Groups out;
  read_jsonl(path, [&](const json& j, std::size_t) {
    const std::string id = require_string(j, "group_id");
    const json& members = require_field(j, "members");
    if (!members.is_array()) throw DataError("members must be an array");
    std::vector<std::string> m;
    for (const auto& x : members) m.push_back(x.get<std::string>());
    if (!out.emplace(id, std::move(m)).second) throw DataError("duplicate group \"" + id + "\"");
  });
  return out;
}

void write_groups(const std::filesystem::path& path, const std::map<std::string, std::vector<std::string>>& groups) {
  std::vector<json> lines;
  for (const auto& [id, members] : groups) lines.push_back({{"group_id", id}, {"members", members}});
  write_jsonl(path, lines);
}

json to_json(const EvalReport& r) {
  const auto recall_json = [](const RecallMap& m) {
    json j = json::object();
    for (const auto& [k, v] : m) j[std::to_string(k)] = v;
    return j;
  };
  json splits = json::object();
  for (const auto& [name, m] : r.per_split) splits[name] = recall_json(m);
  return json{{"convention", to_string(r.convention)},
              {"n_queries", r.n_queries},
              {"masked_reference", r.masked_reference},
              {"recall_at", recall_json(r.recall_at)},
              {"subset_recall_at", recall_json(r.subset_recall_at)},
              {"per_split", splits},
              {"rmean", r.rmean},
              {"checkpoint_fingerprint", r.checkpoint_fingerprint}};
}

EvalReport evaluate_encoded(const EncodedQueries& eq, const EmbeddingMatrix& candidates, const EvalOptions& options) {
  const std::size_t nq = eq.queries.rows;
  if (nq == 0) throw DataError("evaluation needs at least one query");
  if (options.ks.empty()) throw UsageError("at least one K is required");
  EvalReport report;
  report.convention = options.convention;
  report.n_queries = nq;
  report.masked_reference = options.mask_reference.value_or(options.convention == Convention::cirr);

  std::vector<std::optional<std::uint32_t>> masked(nq);
  if (report.masked_reference) {
    for (std::size_t i = 0; i < nq; ++i) {
      if (eq.references[i] != kNoRow) masked[i] = eq.references[i];
    }
  }
  const std::size_t depth = *std::max_element(options.ks.begin(), options.ks.end());
  const auto ranked = rank_candidates(eq.queries, candidates, masked, depth);

  std::map<std::string, std::vector<std::size_t>> by_split;
  for (std::size_t i = 0; i < nq; ++i) by_split[eq.splits.empty() ? "all" : eq.splits[i]].push_back(i);
  for (const auto& [name, idx] : by_split) {
    std::vector<std::vector<std::uint32_t>> lists;
    std::vector<std::uint32_t> targets;
    for (std::size_t i : idx) {
      lists.push_back(ranked[i]);
      targets.push_back(eq.targets[i]);
    }
    report.per_split[name] = recall_at_k(lists, targets, options.ks);
  }
  for (std::size_t k : options.ks) {
    double s = 0.0;
    for (const auto& [name, m] : report.per_split) s += m.at(k);
    report.recall_at[k] = s / static_cast<double>(report.per_split.size());
  }
  if (!options.subset_ks.empty()) {
    report.subset_recall_at =
        subset_recall_at_k(eq.queries, candidates, eq.references, eq.targets, eq.groups, options.subset_ks);
  }
  report.rmean = rmean(report.recall_at, report.subset_recall_at, options.convention);
  return report;
}

EncodedQueries encode_queries(const FusionParams& params, std::span<const EvalQuery> queries,
                              const EmbeddingMatrix& texts, const EmbeddingMatrix& images, const Groups* groups,
                              bool need_groups) {
  EncodedQueries eq;
  eq.queries = DenseMatrix(queries.size(), params.dim);
  eq.references.resize(queries.size());
  eq.targets.resize(queries.size());
  eq.splits.resize(queries.size());
  if (need_groups) {
    if (groups == nullptr) throw DataError("subset metrics need a groups file");
    eq.groups.resize(queries.size());
  }
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const EvalQuery& q = queries[i];
    const std::size_t ref = images.index_of(q.ref_id);
    const std::size_t text = texts.index_of(q.text_id);
    eq.references[i] = static_cast<std::uint32_t>(ref);
    eq.targets[i] = static_cast<std::uint32_t>(images.index_of(q.target_id));
    eq.splits[i] = q.split;
    const QueryTrace tr = encode_query(params, images.row(ref), texts.row(text));
    std::copy(tr.query.begin(), tr.query.end(), eq.queries.row(i).begin());
    if (need_groups) {
      if (!q.group_id) throw DataError("query " + std::to_string(i) + " has no group_id");
      auto it = groups->find(*q.group_id);
      if (it == groups->end()) throw DataError("unknown group \"" + *q.group_id + "\"");
      for (const auto& m : it->second) eq.groups[i].push_back(static_cast<std::uint32_t>(images.index_of(m)));
    }
  }
  return eq;
}

EvalReport evaluate(const FusionParams& params, std::span<const EvalQuery> queries, const EmbeddingMatrix& texts,
                    const EmbeddingMatrix& images, const Groups* groups, const EvalOptions& options) {
  if (queries.empty()) throw DataError("evaluation needs at least one query");
  if (!texts.normalized() || !images.normalized()) throw DataError("evaluation inputs must be normalized");
  const EncodedQueries eq = encode_queries(params, queries, texts, images, groups, !options.subset_ks.empty());
  const NegativeCache candidates = cache_targets(params, images);
  return evaluate_encoded(eq, candidates.corpus, options);
}

}  // namespace cir
