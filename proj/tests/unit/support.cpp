#include "support.hpp"

#include <atomic>
#include <unistd.h>

namespace testing {

TempDir::TempDir(const std::string& tag) {
  static std::atomic<int> counter{0};
  path_ = std::filesystem::temp_directory_path() /
          ("prefsum-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  std::filesystem::remove_all(path_);
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

prefsum::RunConfig small_config() {
  prefsum::RunConfig c;
  c.split.n_offline = 20;
  c.split.n_online = 8;
  c.split.seed = 3;
  c.pretrain.epochs = 8;
  c.reward_train.epochs = 10;
  c.finetune.steps = 3;
  c.session.budget = 6;
  c.session.eval_subset = 0;
  return c;
}

const SmallWorld& small_world() {
  static const SmallWorld world = [] {
    SmallWorld w;
    prefsum::SyntheticConfig sc;
    sc.documents = 48;
    sc.topics = 3;
    sc.filler_words = 60;
    sc.seed = 5;
    w.corpus = prefsum::generate_corpus(sc);
    w.config = small_config();
    w.dataset = std::make_shared<const prefsum::Dataset>(prefsum::split_dataset(
        w.corpus.dataset, w.config.split.n_offline, w.config.split.n_online, w.config.split.seed));
    w.models = prefsum::pretrain_models(*w.dataset, w.config);
    return w;
  }();
  return world;
}

}  // namespace testing
