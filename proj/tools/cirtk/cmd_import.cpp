#include <fmt/format.h>

#include "cir/error.hpp"
#include "cir/manifest.hpp"
#include "cir/triplet_forge.hpp"
#include "common.hpp"

namespace cirtk {
namespace {

struct ImportArgs {
  std::string format = "jsonl";
  std::vector<std::string> inputs;
  std::string out;
  std::string split;
};

cir::json load_array(const std::string& path) {
  cir::json doc = cir::read_json_file(path);
  if (!doc.is_array()) throw cir::DataError(path + ": expected a JSON array of annotations");
  return doc;
}

// FashionIQ: {"candidate", "target", "captions": [str, ...]}; the relative
// captions are joined with " and ".
void import_fashioniq(const std::string& path, const std::string& split, std::vector<cir::Triplet>& triplets,
                      std::vector<cir::EvalQuery>& queries) {
  const cir::json doc = load_array(path);
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const cir::json& a = doc[i];
    try {
      std::string text;
      for (const cir::json& c : cir::require_field(a, "captions")) {
        std::string piece = cir::trim(c.get<std::string>());
        if (piece.empty()) continue;
        text += text.empty() ? piece : " and " + piece;
      }
      cir::Triplet t{cir::require_string(a, "candidate"), text, cir::require_string(a, "target"),
                     cir::Provenance::annotated, std::nullopt};
      cir::validate_triplet(t);
      queries.push_back({t.ref_id, t.modified_text, t.target_id, std::nullopt, split.empty() ? "all" : split});
      triplets.push_back(std::move(t));
    } catch (const std::exception& e) {
      throw cir::DataError(fmt::format("{}: annotation {}: {}", path, i, e.what()));
    }
  }
}

// CIRR: {"reference", "target_hard", "caption", "img_set": {"id", "members"}}.
void import_cirr(const std::string& path, std::vector<cir::Triplet>& triplets, std::vector<cir::EvalQuery>& queries,
                 std::map<std::string, std::vector<std::string>>& groups) {
  const cir::json doc = load_array(path);
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const cir::json& a = doc[i];
    try {
      cir::Triplet t{cir::require_string(a, "reference"), cir::trim(cir::require_string(a, "caption")),
                     cir::require_string(a, "target_hard"), cir::Provenance::annotated, std::nullopt};
      cir::validate_triplet(t);
      std::optional<std::string> group;
      if (a.contains("img_set")) {
        const cir::json& set = a.at("img_set");
        group = set.at("id").is_string() ? set.at("id").get<std::string>() : set.at("id").dump();
        groups[*group] = set.at("members").get<std::vector<std::string>>();
      }
      queries.push_back({t.ref_id, t.modified_text, t.target_id, group, "all"});
      triplets.push_back(std::move(t));
    } catch (const std::exception& e) {
      throw cir::DataError(fmt::format("{}: annotation {}: {}", path, i, e.what()));
    }
  }
}

int run(const ImportArgs& args) {
  if (args.format != "fashioniq" && args.format != "cirr" && args.format != "jsonl") {
    throw cir::UsageError("--format must be fashioniq, cirr or jsonl");
  }
  const std::filesystem::path out(args.out);
  ensure_dir(out);
  cir::RunManifest manifest("import", argv_words());
  std::vector<cir::Triplet> triplets;
  std::vector<cir::EvalQuery> queries;
  std::map<std::string, std::vector<std::string>> groups;
  for (const std::string& in : args.inputs) {
    manifest.add_input("annotations", in);
    if (args.format == "fashioniq") {
      import_fashioniq(in, args.split, triplets, queries);
    } else if (args.format == "cirr") {
      import_cirr(in, triplets, queries, groups);
    } else {
      for (cir::Triplet& t : cir::read_triplets(in)) {
        queries.push_back({t.ref_id, t.modified_text, t.target_id, std::nullopt, "all"});
        triplets.push_back(std::move(t));
      }
    }
  }
  if (triplets.empty()) throw cir::DataError("no annotations found in the inputs");
  cir::write_triplets(out / "triplets.jsonl", triplets);
  cir::write_queries(out / "queries.jsonl", queries);
  manifest.add_output(out / "triplets.jsonl");
  manifest.add_output(out / "queries.jsonl");
  if (!groups.empty()) {
    cir::write_groups(out / "groups.jsonl", groups);
    manifest.add_output(out / "groups.jsonl");
  }
  manifest.set_config({{"format", args.format}, {"split", args.split}});
  manifest.write(out);
  fmt::print("imported {} triplets into {}\n", triplets.size(), out.string());
  return 0;
}

}  // namespace

Runner register_import(CLI::App& app) {
  auto args = std::make_shared<ImportArgs>();
  CLI::App* cmd = app.add_subcommand("import", "Convert annotated datasets to triplets and evaluation queries");
  cmd->add_option("--format", args->format, "Annotation format: fashioniq, cirr or jsonl (triplets)")->capture_default_str();
  cmd->add_option("--input", args->inputs, "Annotation file; repeat for several")->required();
  cmd->add_option("--split", args->split, "Split label stored on the queries (fashioniq)");
  cmd->add_option("--out", args->out, "Output directory")->required();
  return [args] { return run(*args); };
}

}  // namespace cirtk
