#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "prefsum/config.hpp"
#include "prefsum/corpus.hpp"
#include "prefsum/models.hpp"
#include "prefsum/synthetic.hpp"

namespace testing {

inline prefsum::Document make_doc(std::string id, std::vector<std::string> sentences,
                                  std::optional<std::vector<std::string>> gold = std::nullopt) {
  prefsum::Document d;
  d.id = std::move(id);
  d.sentences = std::move(sentences);
  d.gold_summary = std::move(gold);
  return d;
}

// A fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// Small synthetic corpus split into pretrain/offline/online with cheap
// training settings, shared by the session, sampling and service tests.
struct SmallWorld {
  prefsum::SyntheticCorpus corpus;
  std::shared_ptr<const prefsum::Dataset> dataset;
  prefsum::RunConfig config;
  prefsum::ModelBundle models;
};

prefsum::RunConfig small_config();
const SmallWorld& small_world();

}  // namespace testing
