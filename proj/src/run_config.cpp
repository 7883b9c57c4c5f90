#include "cir/run_config.hpp"

#include <algorithm>

#include "cir/error.hpp"

namespace cir {
namespace {

template <class T>
void read_number(const json& sec, const char* section, const char* key, T& out, std::vector<std::string>& errors) {
  if (!sec.contains(key)) return;
  const json& v = sec.at(key);
  if constexpr (std::is_floating_point_v<T>) {
    if (!v.is_number()) {
      errors.push_back(std::string(section) + "." + key + " must be a number");
      return;
    }
    out = v.get<T>();
  } else {
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
      errors.push_back(std::string(section) + "." + key + " must be a non-negative integer");
      return;
    }
    out = v.get<T>();
  }
}

void read_string(const json& sec, const char* section, const char* key, std::string& out,
                 std::vector<std::string>& errors) {
  if (!sec.contains(key)) return;
  if (!sec.at(key).is_string()) {
    errors.push_back(std::string(section) + "." + key + " must be a string");
    return;
  }
  out = sec.at(key).get<std::string>();
}

void read_ks(const json& sec, const char* section, const char* key, std::vector<std::size_t>& out,
             std::vector<std::string>& errors) {
  if (!sec.contains(key)) return;
  const json& v = sec.at(key);
  if (!v.is_array() || !std::all_of(v.begin(), v.end(), [](const json& k) { return k.is_number_unsigned() && k.get<std::size_t>() >= 1; })) {
    errors.push_back(std::string(section) + "." + key + " must be a list of positive integers");
    return;
  }
  out = v.get<std::vector<std::size_t>>();
}

const json& section_of(const json& doc, const char* name, std::vector<std::string>& errors) {
  static const json empty = json::object();
  if (!doc.contains(name)) return empty;
  if (!doc.at(name).is_object()) {
    errors.push_back(std::string(name) + " must be an object");
    return empty;
  }
  return doc.at(name);
}

}  // namespace

const std::vector<std::pair<std::string, std::vector<std::string>>>& run_config_keys() {
  static const std::vector<std::pair<std::string, std::vector<std::string>>> keys = {
      {"train",
       {"stage", "tau", "lr", "weight_decay", "batch_size", "epochs", "hidden", "neg_method", "seed", "neg_pool",
        "select_best"}},
      {"data", {"images", "texts", "triplets", "val_queries", "groups", "init", "cache"}},
      {"validation", {"convention", "ks", "subset_ks", "mask_reference"}},
  };
  return keys;
}

RunConfig resolve_run_config(const json& file, const json& overrides, std::vector<std::string>& errors) {
  json doc = file.is_null() ? json::object() : file;
  if (!doc.is_object()) {
    errors.push_back("config must be a JSON object");
    doc = json::object();
  }
  for (const auto& [name, sec] : overrides.items()) {
    if (sec.is_object() && doc.contains(name) && doc[name].is_object()) {
      doc[name].update(sec);
    } else {
      doc[name] = sec;
    }
  }

  const auto& keys = run_config_keys();
  for (const auto& [name, _] : doc.items()) {
    const auto it = std::find_if(keys.begin(), keys.end(), [&](const auto& s) { return s.first == name; });
    if (it == keys.end()) {
      errors.push_back("unknown config section \"" + name + "\"");
      continue;
    }
    if (!doc[name].is_object()) continue;
    for (const auto& [key, __] : doc[name].items()) {
      if (std::find(it->second.begin(), it->second.end(), key) == it->second.end()) {
        errors.push_back("unknown config key \"" + name + "." + key + "\"");
      }
    }
  }

  const json& tr = section_of(doc, "train", errors);
  Stage stage = Stage::one;
  if (tr.contains("stage")) {
    const json& s = tr.at("stage");
    if (s.is_number_integer() && (s.get<int>() == 1 || s.get<int>() == 2)) {
      stage = static_cast<Stage>(s.get<int>());
    } else {
      errors.push_back("train.stage must be 1 or 2");
    }
  }
  RunConfig cfg;
  cfg.train = TrainConfig::defaults(stage);
  TrainConfig& t = cfg.train;
  read_number(tr, "train", "tau", t.tau, errors);
  read_number(tr, "train", "lr", t.lr, errors);
  read_number(tr, "train", "weight_decay", t.weight_decay, errors);
  read_number(tr, "train", "batch_size", t.batch_size, errors);
  read_number(tr, "train", "epochs", t.epochs, errors);
  read_number(tr, "train", "hidden", t.hidden, errors);
  read_number(tr, "train", "seed", t.seed, errors);
  read_number(tr, "train", "neg_pool", t.neg_pool, errors);
  if (tr.contains("neg_method")) {
    const json& m = tr.at("neg_method");
    try {
      t.neg_method = parse_negative_method(m.is_number_integer() ? std::to_string(m.get<int>()) : m.get<std::string>());
    } catch (const std::exception&) {
      errors.push_back("train.neg_method must be one of ref_replace, text_replace, target_replace, query_replace (or 1-4)");
    }
  }
  if (tr.contains("select_best")) {
    if (tr.at("select_best").is_boolean()) {
      t.select_best = tr.at("select_best").get<bool>();
    } else {
      errors.push_back("train.select_best must be true or false");
    }
  }

  const json& da = section_of(doc, "data", errors);
  read_string(da, "data", "images", cfg.data.images, errors);
  read_string(da, "data", "texts", cfg.data.texts, errors);
  read_string(da, "data", "triplets", cfg.data.triplets, errors);
  read_string(da, "data", "val_queries", cfg.data.val_queries, errors);
  read_string(da, "data", "groups", cfg.data.groups, errors);
  read_string(da, "data", "init", cfg.data.init, errors);
  read_string(da, "data", "cache", cfg.data.cache, errors);

  const json& va = section_of(doc, "validation", errors);
  if (va.contains("convention")) {
    try {
      cfg.validation.convention = parse_convention(va.at("convention").get<std::string>());
    } catch (const std::exception&) {
      errors.push_back("validation.convention must be fashioniq or cirr");
    }
  }
  read_ks(va, "validation", "ks", cfg.validation.ks, errors);
  read_ks(va, "validation", "subset_ks", cfg.validation.subset_ks, errors);
  if (va.contains("mask_reference")) {
    const json& m = va.at("mask_reference");
    if (m.is_boolean()) {
      cfg.validation.mask_reference = m.get<bool>();
    } else if (!m.is_null()) {
      errors.push_back("validation.mask_reference must be true, false or null");
    }
  }
  if (cfg.validation.convention == Convention::cirr && cfg.validation.subset_ks.empty() && !cfg.data.val_queries.empty()) {
    errors.push_back("validation.subset_ks must be set for the cirr convention");
  }
  if (cfg.validation.ks.empty()) errors.push_back("validation.ks must not be empty");

  for (std::string& e : validate_config(cfg.train)) errors.push_back("train: " + e);
  if (cfg.data.images.empty()) errors.push_back("data.images is required");
  if (cfg.data.texts.empty()) errors.push_back("data.texts is required");
  if (cfg.data.triplets.empty()) errors.push_back("data.triplets is required");
  if (!cfg.validation.subset_ks.empty() && !cfg.data.val_queries.empty() && cfg.data.groups.empty()) {
    errors.push_back("data.groups is required when validation.subset_ks is set");
  }
  if (stage == Stage::two && cfg.data.init.empty()) errors.push_back("data.init is required for stage 2");
  return cfg;
}

json to_json(const RunConfig& cfg) {
  const TrainConfig& t = cfg.train;
  json doc;
  doc["train"] = {{"stage", static_cast<int>(t.stage)},
                  {"tau", t.tau},
                  {"lr", t.lr},
                  {"weight_decay", t.weight_decay},
                  {"batch_size", t.batch_size},
                  {"epochs", t.epochs},
                  {"hidden", t.hidden},
                  {"neg_method", to_string(t.neg_method)},
                  {"seed", t.seed},
                  {"neg_pool", t.neg_pool},
                  {"select_best", t.select_best}};
  doc["data"] = {{"images", cfg.data.images},       {"texts", cfg.data.texts}, {"triplets", cfg.data.triplets},
                 {"val_queries", cfg.data.val_queries}, {"groups", cfg.data.groups}, {"init", cfg.data.init},
                 {"cache", cfg.data.cache}};
  doc["validation"] = {{"convention", to_string(cfg.validation.convention)},
                       {"ks", cfg.validation.ks},
                       {"subset_ks", cfg.validation.subset_ks},
                       {"mask_reference", cfg.validation.mask_reference ? json(*cfg.validation.mask_reference) : json()}};
  return doc;
}

}  // namespace cir
