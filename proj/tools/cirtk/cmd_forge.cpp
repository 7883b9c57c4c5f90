#include <fmt/format.h>

#include <cstdlib>

#include "cir/caption.hpp"
#include "cir/error.hpp"
#include "cir/manifest.hpp"
#include "cir/triplet_forge.hpp"
#include "common.hpp"

namespace cirtk {
namespace {

struct ForgeArgs {
  std::string images;
  std::string emb;
  double c0 = 0;
  double c1 = 0;
  bool fractional = false;
  std::string templates = "0,1,2";
  std::size_t budget = 0;
  std::uint64_t seed = 0;
  std::string type_word = "image";
  int k = 10;
  std::string provider = "stub";
  std::size_t fan_out = 4;
  std::string out;
};

struct ImageEntry {
  std::string id;
  std::string ref;
};

std::vector<ImageEntry> read_image_list(const std::string& path) {
  const cir::json doc = cir::read_json_file(path);
  if (!doc.is_array()) throw cir::DataError(path + ": expected a JSON array of image ids or {\"id\", \"image_ref\"}");
  std::vector<ImageEntry> out;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const cir::json& e = doc[i];
    if (e.is_string()) {
      out.push_back({e.get<std::string>(), e.get<std::string>()});
    } else if (e.is_object()) {
      const std::string id = cir::require_string(e, "id");
      out.push_back({id, e.contains("image_ref") ? cir::require_string(e, "image_ref") : id});
    } else {
      throw cir::DataError(fmt::format("{}: entry {} is neither a string nor an object", path, i));
    }
  }
  return out;
}

cir::EmbeddingMatrix select_rows(const cir::EmbeddingMatrix& all, const std::vector<ImageEntry>& list) {
  std::vector<std::string> ids;
  std::vector<float> data;
  data.reserve(list.size() * all.dim());
  for (const ImageEntry& e : list) {
    const auto row = all.row(all.index_of(e.id));
    data.insert(data.end(), row.begin(), row.end());
    ids.push_back(e.id);
  }
  return cir::normalize_rows(cir::EmbeddingMatrix(std::move(ids), all.dim(), std::move(data)));
}

std::size_t as_rank(double v, const char* flag) {
  if (v < 0 || v != static_cast<double>(static_cast<std::size_t>(v))) {
    throw cir::UsageError(fmt::format("{} must be a non-negative integer rank (or use --fractional)", flag));
  }
  return static_cast<std::size_t>(v);
}

int run(const ForgeArgs& a) {
  const std::filesystem::path out(a.out);
  if (a.budget == 0) throw cir::UsageError("--budget must be >= 1");
  if (a.k < 1) throw cir::UsageError("--k must be >= 1");
  const std::vector<int> templates = parse_ints(a.templates, "--templates");
  std::unique_ptr<cir::CaptionProvider> provider;
  if (a.provider == "stub") {
    provider = std::make_unique<cir::StubCaptionProvider>(a.seed);
  } else if (a.provider == "http") {
    const char* url = std::getenv("CIR_CAPTION_URL");
    if (url == nullptr || *url == '\0') throw cir::UsageError("--provider http needs CIR_CAPTION_URL");
    provider = std::make_unique<cir::HttpCaptionProvider>(url);
  } else {
    throw cir::UsageError("--provider must be stub or http");
  }
  ensure_dir(out);

  cir::RunManifest manifest("forge", argv_words());
  manifest.set_seed(a.seed);
  manifest.add_input("images", a.images);
  manifest.add_input("emb", a.emb);
  const std::vector<ImageEntry> list = read_image_list(a.images);
  const cir::EmbeddingMatrix emb = select_rows(cir::load_embeddings(a.emb), list);
  const cir::PairMatchConfig window =
      a.fractional ? cir::fractional_config(a.c0, a.c1, emb.rows(), a.seed)
                   : cir::PairMatchConfig{as_rank(a.c0, "--c0"), as_rank(a.c1, "--c1"), a.seed};
  const cir::RankWindow clamped = cir::clamp_window(window, emb.rows());
  manifest.set_config({{"c0", window.c0},
                       {"c1", window.c1},
                       {"window", {clamped.begin, clamped.end}},
                       {"templates", templates},
                       {"budget", a.budget},
                       {"type", a.type_word},
                       {"k", a.k},
                       {"provider", provider->name()},
                       {"fan_out", a.fan_out}});

  cir::Stopwatch sw;
  std::vector<cir::CaptionRequest> requests;
  for (const ImageEntry& e : list) requests.push_back(cir::make_caption_request(e.id, e.ref, a.type_word, a.k));
  std::vector<cir::CaptionRecord> captions;
  {
    cir::CaptionCache cache(out / "captions.jsonl");
    captions = cir::caption_batch(requests, *provider, {a.fan_out, &cache});
  }
  cir::write_captions(out / "captions.jsonl", captions);
  manifest.time_phase("captions", sw.seconds());

  sw = cir::Stopwatch();
  const std::vector<cir::ImagePair> pairs = cir::match_pairs(emb, window);
  cir::write_pairs(out / "pairs.jsonl", pairs);
  manifest.time_phase("pairs", sw.seconds());

  sw = cir::Stopwatch();
  const std::vector<cir::Quadruplet> quads = cir::build_quadruplets(pairs, captions);
  const std::vector<cir::Triplet> triplets = cir::forge_triplets(quads, templates, a.budget, a.seed);
  cir::write_triplets(out / "triplets.jsonl", triplets);
  manifest.time_phase("triplets", sw.seconds());

  for (const char* f : {"captions.jsonl", "pairs.jsonl", "triplets.jsonl"}) manifest.add_output(out / f);
  manifest.write(out);
  fmt::print("{} captions, {} pairs, {} triplets -> {}\n", captions.size(), pairs.size(), triplets.size(), out.string());
  return 0;
}

}  // namespace

Runner register_forge(CLI::App& app) {
  auto a = std::make_shared<ForgeArgs>();
  CLI::App* cmd = app.add_subcommand("forge", "Caption images, match pairs by similarity rank and render triplets");
  cmd->add_option("--images", a->images, "JSON array of image ids or {\"id\", \"image_ref\"} objects")->required();
  cmd->add_option("--emb", a->emb, "Image embeddings (CIRE) covering every listed id")->required();
  cmd->add_option("--c0", a->c0, "First similarity rank of the target window (inclusive)")->required();
  cmd->add_option("--c1", a->c1, "End of the target window (exclusive)")->required();
  cmd->add_flag("--fractional", a->fractional, "Read --c0/--c1 as fractions of the available ranks");
  cmd->add_option("--templates", a->templates, "Template ids to render: 0, 1, 2")->capture_default_str();
  cmd->add_option("--budget", a->budget, "Number of pairs to turn into triplets")->required();
  cmd->add_option("--seed", a->seed, "Seed for target sampling, pair selection and the stub provider")->capture_default_str();
  cmd->add_option("--type", a->type_word, "Type word in the caption prompt")->capture_default_str();
  cmd->add_option("--k", a->k, "Word count in the caption prompt")->capture_default_str();
  cmd->add_option("--provider", a->provider, "Caption provider: stub or http (endpoint from CIR_CAPTION_URL)")->capture_default_str();
  cmd->add_option("--fan-out", a->fan_out, "Concurrent caption requests")->capture_default_str();
  cmd->add_option("--out", a->out, "Output directory")->required();
  return [a] { return run(*a); };
}

}  // namespace cirtk
