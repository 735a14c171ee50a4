#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "storyweaver/analytics.hpp"
#include "storyweaver/corpus.hpp"
#include "storyweaver/errors.hpp"
#include "storyweaver/server.hpp"
#include "storyweaver/session.hpp"

using namespace storyweaver;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << text;
}

void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    if (!text.empty() && text.back() != '\n') std::cout << '\n';
  } else {
    write_file(path, text);
  }
}

std::unique_ptr<Session> open_session(const std::string& path) {
  return Session::load(read_file(path));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"storyweaver: connect documents through topic space and steer stories with feedback"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic themed corpus");
  std::uint64_t synth_seed = 1;
  std::size_t synth_docs = 0;
  std::string synth_out = "-", synth_dump;
  synth->add_option("--seed", synth_seed, "Generator seed");
  synth->add_option("--docs", synth_docs, "Random-mixing corpus of this size instead of the toy corpus");
  synth->add_option("--out", synth_out, "Corpus JSON output (- for stdout)");
  synth->add_option("--dump", synth_dump, "Also write one text file per document here");

  // ingest
  auto* ingest_cmd = app.add_subcommand("ingest", "Tokenize a directory of .txt files or a JSONL file");
  std::string ingest_source, ingest_out = "-";
  double ingest_gini = 0.0;
  ingest_cmd->add_option("source", ingest_source, "Directory or JSONL file")->required();
  ingest_cmd->add_option("--out", ingest_out, "Corpus JSON output (- for stdout)");
  ingest_cmd->add_option("--gini", ingest_gini, "Fraction of least discriminative terms to drop");

  // fit
  auto* fit_cmd = app.add_subcommand("fit", "Fit the topic model and write a session snapshot");
  std::string fit_corpus, fit_config, fit_session;
  std::uint64_t fit_toy = 0;
  std::optional<std::size_t> fit_topics, fit_iterations, fit_clusters;
  std::optional<double> fit_xi, fit_gini;
  fit_cmd->add_option("--corpus", fit_corpus, "Corpus JSON, text directory or JSONL");
  fit_cmd->add_option("--toy", fit_toy, "Use the toy corpus generated with this seed");
  fit_cmd->add_option("--config", fit_config, "Session config JSON");
  fit_cmd->add_option("--topics", fit_topics, "Number of topics");
  fit_cmd->add_option("--iterations", fit_iterations, "Gibbs sweeps");
  fit_cmd->add_option("--xi", fit_xi, "Edge cost threshold");
  fit_cmd->add_option("--gini", fit_gini, "Gini filter fraction");
  fit_cmd->add_option("--clusters", fit_clusters, "k-means clusters for pruned search (0 = off)");
  fit_cmd->add_option("--session", fit_session, "Snapshot output")->required();

  // story
  auto* story_cmd = app.add_subcommand("story", "Connect two documents");
  std::string story_session, story_start, story_end;
  story_cmd->add_option("--session", story_session, "Session snapshot (updated in place)")->required();
  story_cmd->add_option("--start", story_start, "Start document id")->required();
  story_cmd->add_option("--end", story_end, "End document id")->required();

  // feedback
  auto* feedback_cmd = app.add_subcommand("feedback", "Require documents in the story, in order");
  std::string feedback_session;
  std::vector<std::string> feedback_sequence;
  feedback_cmd->add_option("--session", feedback_session, "Session snapshot (updated in place)")
      ->required();
  feedback_cmd->add_option("--sequence", feedback_sequence, "Document ids in order")
      ->required()
      ->delimiter(',');

  // alternatives
  auto* alt_cmd = app.add_subcommand("alternatives", "List the k shortest stories");
  std::string alt_session;
  std::size_t alt_k = 10;
  bool alt_json = false;
  alt_cmd->add_option("--session", alt_session, "Session snapshot")->required();
  alt_cmd->add_option("-k", alt_k, "Number of stories");
  alt_cmd->add_flag("--json", alt_json, "Print JSON instead of a table");

  // layout / heatmap / replay
  auto* layout_cmd = app.add_subcommand("layout", "MDS layout with story overlays (JSON)");
  std::string layout_session;
  layout_cmd->add_option("--session", layout_session, "Session snapshot")->required();
  auto* heatmap_cmd = app.add_subcommand("heatmap", "Topic distance heatmap against the initial fit");
  std::string heatmap_session;
  bool heatmap_csv_out = false;
  heatmap_cmd->add_option("--session", heatmap_session, "Session snapshot")->required();
  heatmap_cmd->add_flag("--csv", heatmap_csv_out, "Print CSV");
  auto* replay_cmd = app.add_subcommand("replay", "Re-run a snapshot's rounds and compare stories");
  std::string replay_session;
  replay_cmd->add_option("--session", replay_session, "Session snapshot")->required();

  // bench
  auto* bench_cmd = app.add_subcommand("bench", "Compare A*, uniform cost and constrained A*");
  BenchmarkSpec bench;
  std::string bench_out = "-";
  bench_cmd->add_option("--docs", bench.num_docs, "Synthetic corpus size");
  bench_cmd->add_option("--xi", bench.xis, "Thresholds to sweep")->delimiter(',');
  bench_cmd->add_option("--trials", bench.trials, "Random (s, t, feedback) trials");
  bench_cmd->add_option("--topics", bench.num_topics, "Number of topics");
  bench_cmd->add_option("--iterations", bench.iterations, "Gibbs sweeps");
  bench_cmd->add_option("--seed", bench.seed, "Seed");
  bench_cmd->add_option("--out", bench_out, "CSV output (- for stdout)");

  // serve
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP session service");
  std::string serve_host = "127.0.0.1";
  int serve_port = 8080;
  std::vector<std::string> serve_load;
  serve_cmd->add_option("--host", serve_host, "Bind address");
  serve_cmd->add_option("--port", serve_port, "Port");
  serve_cmd->add_option("--load", serve_load, "Snapshots to preload");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      if (const char* env = std::getenv("STORYWEAVER_SEED")) synth_seed = std::strtoull(env, nullptr, 10);
      nlohmann::json source = {{"kind", "toy"}, {"seed", synth_seed}};
      if (synth_docs > 0) {
        source = {{"kind", "synthetic"}, {"spec", {{"num_docs", synth_docs}, {"seed", synth_seed}}}};
      }
      const Corpus corpus = load_source(source);
      if (!synth_dump.empty()) write_text_dump(corpus, synth_dump);
      emit(synth_out, corpus_to_json(corpus).dump());
    } else if (*ingest_cmd) {
      const Corpus corpus = gini_filter(ingest(ingest_source), ingest_gini);
      std::cerr << "ingested " << corpus.size() << " documents, M=" << corpus.vocabulary_size() << "\n";
      emit(ingest_out, corpus_to_json(corpus).dump());
    } else if (*fit_cmd) {
      SessionConfig config;
      if (!fit_config.empty()) config = config_from_json(nlohmann::json::parse(read_file(fit_config)));
      if (fit_topics) config.num_topics = *fit_topics;
      if (fit_iterations) config.iterations = *fit_iterations;
      if (fit_xi) config.xi = *fit_xi;
      if (fit_gini) config.gini_fraction = *fit_gini;
      if (fit_clusters) config.clusters = *fit_clusters;
      apply_seed_override(config);
      nlohmann::json source;
      if (fit_toy > 0) {
        source = {{"kind", "toy"}, {"seed", fit_toy}};
      } else if (fit_corpus.size() > 5 && fit_corpus.ends_with(".json")) {
        source = {{"kind", "corpus"}, {"corpus", nlohmann::json::parse(read_file(fit_corpus))}};
      } else if (!fit_corpus.empty()) {
        source = {{"kind", "path"}, {"path", fit_corpus}};
      } else {
        throw ParameterError("fit needs --corpus or --toy");
      }
      auto session = Session::create("cli", load_source(source), config);
      write_file(fit_session, session->snapshot());
      std::cout << session->summary().dump(2) << "\n";
    } else if (*story_cmd) {
      auto session = open_session(story_session);
      const Round r = session->request_story(story_start, story_end);
      write_file(story_session, session->snapshot());
      std::cout << session->round_json(r).dump(2) << "\n";
    } else if (*feedback_cmd) {
      auto session = open_session(feedback_session);
      const Round r = session->submit_feedback(feedback_sequence);
      write_file(feedback_session, session->snapshot());
      nlohmann::json j = session->round_json(r);
      j.erase("relationships");
      std::cout << j.dump(2) << "\n";
    } else if (*alt_cmd) {
      auto session = open_session(alt_session);
      const auto stories = session->list_alternatives(alt_k);
      if (alt_json) {
        nlohmann::json arr = nlohmann::json::array();
        for (const Story& s : stories) arr.push_back(session->story_json(s));
        std::cout << arr.dump(2) << "\n";
      } else {
        std::printf("%-4s %-8s %-5s %s\n", "rank", "cost", "edges", "story");
        std::size_t rank = 1;
        for (const Story& s : stories) {
          std::string path;
          for (std::size_t d : s.path) {
            if (!path.empty()) path += " -> ";
            path += session->corpus().document(d).id;
          }
          std::printf("%-4zu %-8.4f %-5zu %s\n", rank++, s.cost, s.length(), path.c_str());
        }
      }
    } else if (*layout_cmd) {
      std::cout << open_session(layout_session)->layout().dump(2) << "\n";
    } else if (*heatmap_cmd) {
      auto session = open_session(heatmap_session);
      const nlohmann::json h = session->heatmap();
      if (heatmap_csv_out) {
        TopicDistanceMatrix m;
        m.entries = h.at("entries").get<Matrix>();
        std::cout << heatmap_csv(m);
      } else {
        std::cout << h.dump(2) << "\n";
      }
    } else if (*replay_cmd) {
      const ReplayReport report = replay(read_file(replay_session));
      std::cout << "rounds " << report.rounds << ", identical " << report.identical << "\n";
      return report.ok() ? 0 : 1;
    } else if (*bench_cmd) {
      if (const char* env = std::getenv("STORYWEAVER_SEED")) bench.seed = std::strtoull(env, nullptr, 10);
      emit(bench_out, comparison_csv(run_benchmark(bench)));
    } else if (*serve_cmd) {
      SessionManager sessions;
      for (const auto& path : serve_load) {
        std::cerr << "loaded session " << sessions.adopt(open_session(path)) << "\n";
      }
      std::cerr << "listening on " << serve_host << ":" << serve_port << "\n";
      serve(sessions, serve_host, serve_port);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
