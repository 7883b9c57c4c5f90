#include "cir/manifest.hpp"

#include "cir/hash.hpp"

namespace cir {

RunManifest::RunManifest(std::string command, std::vector<std::string> argv)
    : command_(std::move(command)), argv_(std::move(argv)) {}

void RunManifest::add_input(const std::string& role, const std::filesystem::path& path) {
  inputs_[role] = json{{"path", path.string()}, {"sha256", sha256_file(path)}};
}

void RunManifest::add_output(const std::filesystem::path& path) {
  outputs_[path.filename().string()] = sha256_file(path);
}

json RunManifest::to_json() const {
  json doc;
  doc["command"] = command_;
  doc["argv"] = argv_;
  doc["config"] = config_;
  doc["seed"] = seed_;
  doc["inputs"] = inputs_;
  doc["outputs"] = outputs_;
  doc["timings"] = timings_;
  return doc;
}

void RunManifest::write(const std::filesystem::path& dir) const {
  write_json_file(dir / "manifest.json", to_json());
}

}  // namespace cir
