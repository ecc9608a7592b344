#include "doctest.h"

#include "prefsum/config.hpp"
#include "support.hpp"

using namespace prefsum;

TEST_CASE("configs round-trip through JSON and files") {
  RunConfig c;
  c.split.n_offline = 12;
  c.pretrain_on_offline = false;
  c.ppo.kl_coef = 0.2;
  c.sampling.strategy = Strategy::kLrs;
  c.sampling.k = 3;
  c.oracle.nc = 0.25;
  c.session.mode = SessionMode::kFewshot;
  c.session.pipeline = true;
  CHECK(to_json(config_from_json(to_json(c))) == to_json(c));

  testing::TempDir dir("config");
  save_config(c, dir / "c.json");
  CHECK(to_json(load_config(dir / "c.json")) == to_json(c));
}

TEST_CASE("missing keys keep their defaults") {
  const RunConfig c = config_from_json(nlohmann::json{{"ppo", {{"clip", 0.1}}}});
  CHECK(c.ppo.clip == 0.1);
  CHECK(c.ppo.gamma == RunConfig{}.ppo.gamma);
  CHECK(to_json(config_from_json(nlohmann::json::object())) == to_json(RunConfig{}));
}

TEST_CASE("unknown or malformed entries are rejected") {
  CHECK_THROWS_AS(config_from_json(nlohmann::json{{"nonsense", {}}}), std::invalid_argument);
  CHECK_THROWS_AS(config_from_json(nlohmann::json{{"ppo", {{"clipp", 0.1}}}}), std::invalid_argument);
  CHECK_THROWS_AS(config_from_json(nlohmann::json{{"ppo", {{"clip", "wide"}}}}), std::invalid_argument);
  CHECK_THROWS_AS(config_from_json(nlohmann::json{{"sampling", {{"strategy", "best"}}}}), std::invalid_argument);
  CHECK_THROWS_AS(config_from_json(nlohmann::json{{"session", 3}}), std::invalid_argument);
  CHECK_THROWS_AS(config_from_json(nlohmann::json::array()), std::invalid_argument);
  CHECK_THROWS(load_config("/nonexistent/config.json"));
}

TEST_CASE("validation catches inconsistent settings") {
  RunConfig c;
  CHECK_NOTHROW(c.validate());
  c.oracle.nc = 1.2;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = {};
  c.session.budget = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = {};
  c.triplets.long_budget = 1;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = {};
  c.reward.margin = 0.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("mode names") {
  for (SessionMode m : {SessionMode::kActive, SessionMode::kOnline, SessionMode::kFewshot}) {
    CHECK(session_mode_from_string(to_string(m)) == m);
  }
  CHECK(oracle_mode_from_string(to_string(OracleMode::kHuman)) == OracleMode::kHuman);
  CHECK_THROWS_AS(session_mode_from_string("batch"), std::invalid_argument);
}
