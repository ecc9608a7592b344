// Command-line front end: corpus generation, pretraining, simulated runs,
// evaluation and the HTTP session service.

#include "prefsum/config.hpp"
#include "prefsum/interaction.hpp"
#include "prefsum/models.hpp"
#include "prefsum/service.hpp"
#include "prefsum/synthetic.hpp"

#include <csignal>
#include <fstream>
#include <iomanip>
#include <iostream>

#include "CLI11.hpp"
#include "httplib.h"
#include "json.hpp"

namespace {

using nlohmann::json;
using namespace prefsum;

// Flags shared by commands that build a run configuration. Unset flags
// leave the configuration file (or the defaults) alone.
struct ConfigFlags {
  std::string config_path;
  std::optional<std::string> mode, strategy, oracle;
  std::optional<std::size_t> k, budget, eval_subset, n_offline, n_online;
  std::optional<double> nc;
  std::optional<std::uint64_t> seed, split_seed;
  std::optional<bool> pipeline;

  void attach(CLI::App& app) {
    app.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
    app.add_option("--mode", mode, "active | online | fewshot");
    app.add_option("--strategy", strategy, "none | random | lrs | dss");
    app.add_option("--k", k, "offline documents per interaction");
    app.add_option("--nc", nc, "oracle noise probability");
    app.add_option("--oracle", oracle, "simulated | human");
    app.add_option("--budget", budget, "maximum number of interactions");
    app.add_option("--seed", seed, "session seed");
    app.add_option("--eval-subset", eval_subset, "online documents evaluated per interaction (0 = all)");
    app.add_option("--n-offline", n_offline, "offline pool size");
    app.add_option("--n-online", n_online, "online documents");
    app.add_option("--split-seed", split_seed, "seed of the offline/online split");
    app.add_option("--pipeline", pipeline, "prepare the next query while training");
  }

  json request() const {
    json r = json::object();
    if (!config_path.empty()) r["config"] = to_json(load_config(config_path));
    if (mode) r["mode"] = *mode;
    if (strategy) r["strategy"] = *strategy;
    if (k) r["k"] = *k;
    if (nc) r["nc"] = *nc;
    if (oracle) r["oracle"] = *oracle;
    if (budget) r["budget"] = *budget;
    if (seed) r["seed"] = *seed;
    if (eval_subset) r["eval_subset"] = *eval_subset;
    if (n_offline) r["n_offline"] = *n_offline;
    if (n_online) r["n_online"] = *n_online;
    if (split_seed) r["split_seed"] = *split_seed;
    r["pipeline"] = pipeline.value_or(r.contains("config") ? r["config"]["session"]["pipeline"].get<bool>() : false);
    return r;
  }

  RunConfig build() const { return config_from_request(request()); }
};

Dataset load_split(const std::string& corpus, const std::string& manifest, const RunConfig& config) {
  Dataset raw = load_corpus(corpus);
  if (!manifest.empty()) return apply_manifest(raw, load_manifest(manifest));
  return split_dataset(raw, config.split.n_offline, config.split.n_online, config.split.seed);
}

void print_record(const MetricsRecord& r) {
  std::cout << "interaction " << std::setw(3) << r.interaction << "  R1 " << std::fixed << std::setprecision(4)
            << r.rouge1 << "  R2 " << r.rouge2 << "  RL " << r.rougeL << "  reward " << r.mean_reward;
  if (!r.offline_ids.empty()) {
    std::cout << "  offline";
    for (const auto& id : r.offline_ids) std::cout << ' ' << id;
  }
  std::cout << '\n';
}

std::unique_ptr<httplib::Server> g_server;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Interactive preference learning for extractive summarization"};
  app.require_subcommand(1);

  // gen-corpus
  auto* gen = app.add_subcommand("gen-corpus", "write a synthetic topic corpus");
  std::string gen_kind = "end-to-end";
  std::string gen_out;
  std::uint64_t gen_seed = 1;
  std::optional<std::size_t> gen_docs, gen_topics;
  std::optional<double> gen_paraphrase;
  gen->add_option("--kind", gen_kind, "end-to-end | reward-benchmark")
      ->check(CLI::IsMember({"end-to-end", "reward-benchmark"}));
  gen->add_option("--seed", gen_seed);
  gen->add_option("--documents", gen_docs);
  gen->add_option("--topics", gen_topics);
  gen->add_option("--paraphrase-rate", gen_paraphrase);
  gen->add_option("-o,--out", gen_out, "output corpus file")->required();

  // pretrain
  auto* pre = app.add_subcommand("pretrain", "train the backbone and reward model on the pretraining data");
  ConfigFlags pre_flags;
  std::string pre_corpus, pre_manifest, pre_out;
  pre_flags.attach(*pre);
  pre->add_option("--corpus", pre_corpus)->required()->check(CLI::ExistingFile);
  pre->add_option("--manifest", pre_manifest, "split manifest to apply instead of splitting");
  pre->add_option("-o,--out", pre_out, "checkpoint directory")->required();

  // run
  auto* run = app.add_subcommand("run", "run a simulated (or replayed) interactive session");
  ConfigFlags run_flags;
  std::string run_corpus, run_manifest, run_models, run_metrics, run_transcript, run_replay, run_checkpoint,
      run_resume;
  bool run_pretrain = false;
  bool run_quiet = false;
  run_flags.attach(*run);
  run->add_option("--corpus", run_corpus)->required()->check(CLI::ExistingFile);
  run->add_option("--manifest", run_manifest);
  run->add_option("--models", run_models, "checkpoint directory from pretrain");
  run->add_flag("--pretrain", run_pretrain, "pretrain inline instead of loading checkpoints");
  run->add_option("--metrics", run_metrics, "metrics log (JSON lines)");
  run->add_option("--transcript", run_transcript, "feedback transcript to write");
  run->add_option("--replay", run_replay, "answer queries from a recorded transcript")->check(CLI::ExistingFile);
  run->add_option("--checkpoint", run_checkpoint, "session checkpoint written at the end");
  run->add_option("--resume", run_resume, "continue from a session checkpoint")->check(CLI::ExistingFile);
  run->add_flag("-q,--quiet", run_quiet);

  // serve
  auto* serve = app.add_subcommand("serve", "HTTP session service for human feedback");
  std::string serve_host = "127.0.0.1";
  int serve_port = 8080;
  std::string serve_models;
  serve->add_option("--host", serve_host);
  serve->add_option("--port", serve_port);
  serve->add_option("--models", serve_models, "default checkpoint directory");

  // eval
  auto* ev = app.add_subcommand("eval", "ROUGE of greedy summaries on one split");
  ConfigFlags ev_flags;
  std::string ev_corpus, ev_manifest, ev_models, ev_split = "online";
  std::size_t ev_m = 3;
  ev_flags.attach(*ev);
  ev->add_option("--corpus", ev_corpus)->required()->check(CLI::ExistingFile);
  ev->add_option("--manifest", ev_manifest);
  ev->add_option("--models", ev_models)->required();
  ev->add_option("--split", ev_split, "pretrain | offline | online | test");
  ev->add_option("--m", ev_m, "sentences per summary");

  // reward-eval
  auto* rev = app.add_subcommand("reward-eval", "preference accuracy on a triplet file");
  ConfigFlags rev_flags;
  std::string rev_corpus, rev_manifest, rev_models, rev_triplets;
  rev_flags.attach(*rev);
  rev->add_option("--corpus", rev_corpus)->required()->check(CLI::ExistingFile);
  rev->add_option("--manifest", rev_manifest);
  rev->add_option("--models", rev_models)->required();
  rev->add_option("--triplets", rev_triplets)->required()->check(CLI::ExistingFile);

  // dump-config
  auto* dump = app.add_subcommand("dump-config", "print the effective run configuration");
  ConfigFlags dump_flags;
  dump_flags.attach(*dump);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      SyntheticConfig c = gen_kind == "reward-benchmark" ? reward_benchmark_config(gen_seed) : end_to_end_config(gen_seed);
      if (gen_docs) c.documents = *gen_docs;
      if (gen_topics) c.topics = *gen_topics;
      if (gen_paraphrase) c.paraphrase_rate = *gen_paraphrase;
      save_corpus(generate_corpus(c).dataset, gen_out);
      std::cout << "wrote " << c.documents << " documents to " << gen_out << '\n';
    } else if (*pre) {
      const RunConfig config = pre_flags.build();
      const Dataset ds = load_split(pre_corpus, pre_manifest, config);
      const ModelBundle models = pretrain_models(ds, config);
      save_models(models, config, pre_out);
      save_manifest(SplitManifest::of(ds), std::filesystem::path(pre_out) / "manifest.json");
      save_config(config, std::filesystem::path(pre_out) / "config.json");
      for (const auto& w : models.warnings) std::cerr << "warning: " << w << '\n';
      const std::size_t used = ds.count(Split::kPretrain) + (config.pretrain_on_offline ? ds.count(Split::kOffline) : 0);
      std::cout << "pretraining docs " << used << ", BCE " << models.pretrain_losses.front()
                << " -> " << models.pretrain_losses.back() << ", reward loss " << models.reward_losses.front()
                << " -> " << models.reward_losses.back() << ", triplets " << models.store.size() << '\n';
    } else if (*run) {
      RunConfig config = run_flags.build();
      json resume;
      if (!run_resume.empty()) {
        std::ifstream in(run_resume);
        resume = json::parse(in);
        if (run_flags.budget) resume["config"]["session"]["budget"] = *run_flags.budget;
        config = config_from_json(resume.at("config"));
      }
      if (config.oracle.mode == OracleMode::kHuman) {
        throw std::invalid_argument("human feedback goes through the serve command");
      }
      auto ds = std::make_shared<const Dataset>(load_split(run_corpus, run_manifest, config));
      ModelBundle models;
      if (run_pretrain) {
        models = pretrain_models(*ds, config);
      } else if (!run_models.empty()) {
        models = load_models(run_models, *ds);
      } else {
        throw std::invalid_argument("run needs --models or --pretrain");
      }
      std::unique_ptr<Session> session;
      if (resume.is_null()) {
        session = std::make_unique<Session>(ds, models, config);
      } else {
        session = Session::restore(ds, models, resume);
      }
      std::unique_ptr<FeedbackProvider> provider;
      if (!run_replay.empty()) {
        auto transcript = load_transcript(run_replay);
        // A resumed run skips the entries it has already consumed.
        transcript.erase(transcript.begin(),
                         transcript.begin() + static_cast<std::ptrdiff_t>(
                                                  std::min(transcript.size(), session->transcript().size())));
        provider = std::make_unique<ReplayProvider>(std::move(transcript));
      } else {
        provider = std::make_unique<SimulatedOracle>(*ds, config.oracle);
      }
      if (!run_quiet) print_record(session->initial_metrics());
      const auto result = run_session(*session, *provider, [&](const MetricsRecord& r) {
        if (!run_quiet) print_record(r);
      });
      if (!run_metrics.empty()) std::ofstream(run_metrics) << metrics_log(result.history);
      if (!run_transcript.empty()) save_transcript(result.transcript, run_transcript);
      if (!run_checkpoint.empty()) std::ofstream(run_checkpoint) << session->checkpoint().dump() << '\n';
      const auto& last = result.history.empty() ? result.initial : result.history.back();
      std::cout << "final R1 " << std::fixed << std::setprecision(4) << last.rouge1 << " after "
                << result.history.size() << " interactions\n";
    } else if (*serve) {
      SessionService service(ServiceOptions{serve_models});
      g_server = std::make_unique<httplib::Server>();
      service.bind(*g_server);
      std::signal(SIGINT, [](int) { g_server->stop(); });
      std::signal(SIGTERM, [](int) { g_server->stop(); });
      std::cout << "listening on http://" << serve_host << ':' << serve_port << std::endl;
      if (!g_server->listen(serve_host, serve_port)) throw std::runtime_error("cannot bind the listening socket");
      service.shutdown();
    } else if (*ev) {
      const RunConfig config = ev_flags.build();
      const Dataset ds = load_split(ev_corpus, ev_manifest, config);
      const ModelBundle models = load_models(ev_models, ds);
      FeatureCache cache(models.featurizer);
      const auto r = evaluate_corpus(models.policy, ds.split(split_from_string(ev_split)), cache, ev_m);
      std::cout << json{{"split", ev_split}, {"rouge1", r.rouge1}, {"rouge2", r.rouge2}, {"rougeL", r.rougeL}}.dump()
                << '\n';
    } else if (*rev) {
      const RunConfig config = rev_flags.build();
      const Dataset ds = load_split(rev_corpus, rev_manifest, config);
      const ModelBundle models = load_models(rev_models, ds);
      FeatureCache cache(models.featurizer);
      const TripletStore store = load_triplets(rev_triplets, ds, cache);
      json out = json::object();
      std::vector<TripletExample> all;
      for (Objective o : kObjectives) {
        const auto& t = store.triplets(o);
        if (!t.empty()) out[std::string(to_string(o))] = preference_accuracy(models.reward, t);
        all.insert(all.end(), t.begin(), t.end());
      }
      out["pooled"] = preference_accuracy(models.reward, all);
      out["triplets"] = all.size();
      std::cout << out.dump() << '\n';
    } else if (*dump) {
      std::cout << to_json(dump_flags.build()).dump(2) << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
