// Command-line front end. Everything goes through the C API in
// sentgraph/capi.h; this file owns only argument plumbing and presentation.
//
// Exit codes: 0 success, 1 unreadable/malformed input, 2 conversion,
// alignment, numeric or output failures.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "sentgraph/capi.h"

using nlohmann::ordered_json;

namespace {

struct StringDeleter {
  void operator()(char* p) const { sg_string_free(p); }
};
struct DatasetDeleter {
  void operator()(sg_dataset* p) const { sg_dataset_free(p); }
};
struct ModelDeleter {
  void operator()(sg_model* p) const { sg_model_free(p); }
};
using CStr = std::unique_ptr<char, StringDeleter>;
using DataPtr = std::unique_ptr<sg_dataset, DatasetDeleter>;
using ModelPtr = std::unique_ptr<sg_model, ModelDeleter>;

[[noreturn]] void die(int code, const std::string& message) {
  std::cerr << "error: " << message << "\n";
  std::exit(code);
}

// Turns an API failure into the documented exit codes. Inputs that fail to
// parse (or to open) are the caller's data problem → 1; everything after
// that is a processing failure → 2.
void check(sg_status status) {
  if (status == SG_OK) return;
  die(status == SG_ERROR_PARSE || status == SG_ERROR_IO ? 1 : 2, sg_last_error());
}

// Input paths are validated before any work starts so a typo can never leave
// partial output behind.
void require_readable(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) die(1, "cannot open '" + path + "'");
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) die(1, "cannot open '" + path + "'");
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

void write_output(const std::string& path, const std::string& content) {
  if (path.empty() || path == "-") {
    std::cout << content;
    if (!content.empty() && content.back() != '\n') std::cout << '\n';
    return;
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) die(2, "cannot write '" + path + "'");
  f << content;
  if (!f) die(2, "failed writing '" + path + "'");
}

DataPtr load_dataset(const std::string& path) {
  require_readable(path);
  sg_dataset* d = nullptr;
  check(sg_dataset_read(path.c_str(), &d));
  return DataPtr(d);
}

// Flat "key value" lines from a JSON object, dotted for nesting; matches the
// evaluation report's text style.
void flat_lines(std::ostream& os, const std::string& prefix, const ordered_json& j) {
  for (const auto& [key, value] : j.items()) {
    std::string name = prefix.empty() ? key : prefix + "." + key;
    if (value.is_object()) {
      flat_lines(os, name, value);
    } else if (value.is_string()) {
      os << name << " " << value.get<std::string>() << "\n";
    } else {
      os << name << " " << value.dump() << "\n";
    }
  }
}

std::string render(const ordered_json& j, bool as_json) {
  if (as_json) return j.dump(2) + "\n";
  std::ostringstream os;
  flat_lines(os, "", j);
  return os.str();
}

bool is_dep_encoding(const std::string& e) {
  return e == "dep-head-first" || e == "dep-head-final";
}

// ---- subcommand implementations ----------------------------------------

int cmd_convert(const std::string& input, const std::string& encoding,
                const std::string& direction, std::string head_rule, const std::string& out) {
  if (head_rule.empty()) head_rule = encoding == "dep-head-first" ? "first" : "last";
  if (direction == "encode") {
    DataPtr data = load_dataset(input);
    CStr dump;
    if (is_dep_encoding(encoding)) {
      CStr loss;
      char *dp = nullptr, *lp = nullptr;
      check(sg_encode_dep(data.get(), head_rule.c_str(), &dp, &lp));
      dump.reset(dp);
      loss.reset(lp);
      ordered_json j = ordered_json::parse(loss.get());
      std::fprintf(stderr, "arcs_total: %lld, arcs_lost: %lld, lost: %.1f%%\n",
                   j["arcs_total"].get<long long>(), j["arcs_lost"].get<long long>(),
                   j["percent_lost"].get<double>());
    } else {
      char* dp = nullptr;
      check(sg_encode_graphs(data.get(), encoding.c_str(), &dp));
      dump.reset(dp);
    }
    write_output(out, dump.get());
  } else {
    std::string text = read_file(input);
    sg_dataset* d = nullptr;
    CStr stats;
    char* sp = nullptr;
    if (is_dep_encoding(encoding)) {
      check(sg_decode_dep(text.c_str(), &d, &sp));
    } else {
      check(sg_decode_graphs(text.c_str(), &d, &sp));
    }
    stats.reset(sp);
    DataPtr data(d);
    std::fprintf(stderr, "%s\n", ordered_json::parse(stats.get()).dump().c_str());
    CStr json_text;
    char* jp = nullptr;
    check(sg_dataset_to_json(data.get(), &jp));
    json_text.reset(jp);
    write_output(out, json_text.get());
  }
  return 0;
}

int cmd_stats(const std::string& input, bool as_json) {
  DataPtr data = load_dataset(input);
  char* sp = nullptr;
  check(sg_dataset_stats_json(data.get(), &sp));
  CStr stats(sp);
  std::cout << render(ordered_json::parse(stats.get()), as_json);
  return 0;
}

int cmd_roundtrip(const std::string& input, const std::string& encoding, bool as_json) {
  DataPtr data = load_dataset(input);
  std::vector<std::string> encodings;
  if (encoding == "all") {
    encodings = {"opinion-tuple", "node-centric", "labeled-edge", "dep-head-final"};
  } else {
    encodings = {encoding};
  }
  ordered_json results = ordered_json::array();
  for (const std::string& e : encodings) {
    char* rp = nullptr;
    check(sg_roundtrip_json(data.get(), e.c_str(), &rp));
    CStr rt(rp);
    results.push_back(ordered_json::parse(rt.get()));
  }
  if (as_json) {
    std::cout << results.dump(2) << "\n";
  } else {
    for (const auto& r : results) {
      std::printf("%-14s sf1 %.6f exact %s\n", r["encoding"].get<std::string>().c_str(),
                  r["sf1"]["f1"].get<double>(), r["exact"].get<bool>() ? "yes" : "no");
    }
  }
  return 0;
}

int cmd_eval(const std::string& gold_path, const std::string& pred_path, bool no_polarity,
             bool as_json) {
  DataPtr gold = load_dataset(gold_path);
  DataPtr pred = load_dataset(pred_path);
  char *tp = nullptr, *jp = nullptr;
  check(sg_evaluate(gold.get(), pred.get(), &tp, &jp));
  CStr text(tp), js(jp);
  const char* primary = no_polarity ? "nsf1" : "sf1";
  if (as_json) {
    ordered_json out{{"primary", primary}};
    for (const auto& [key, value] : ordered_json::parse(js.get()).items()) out[key] = value;
    std::cout << out.dump(2) << "\n";
  } else {
    ordered_json report = ordered_json::parse(js.get());
    std::printf("primary %s.f1 %.6f\n", primary, report[primary]["f1"].get<double>());
    std::cout << text.get();
  }
  return 0;
}

int cmd_train(const std::string& train_path, const std::string& dev_path,
              const std::string& config_path, const std::string& checkpoint_path,
              const std::string& log_path, const std::string& encoding, long long seed,
              bool has_seed, bool as_json) {
  std::string config_text = read_file(config_path);
  // Flag overrides append after the file body: the last assignment wins.
  if (!encoding.empty()) config_text += "\ngraph_mode = " + encoding + "\n";
  if (has_seed) config_text += "\nseed = " + std::to_string(seed) + "\n";

  DataPtr train_set = load_dataset(train_path);
  DataPtr dev_set;
  if (!dev_path.empty()) dev_set = load_dataset(dev_path);

  std::string metrics_path = log_path.empty() ? checkpoint_path + ".log" : log_path;
  std::ofstream log(metrics_path, std::ios::trunc);
  if (!log) die(2, "cannot write '" + metrics_path + "'");

  auto on_epoch = [](const char* line, void* user) {
    auto* os = static_cast<std::ofstream*>(user);
    *os << line << "\n";
    os->flush();
  };

  sg_model* m = nullptr;
  char* sp = nullptr;
  check(sg_train(config_text.c_str(), train_set.get(), dev_set.get(), on_epoch, &log, &m, &sp));
  ModelPtr model(m);
  CStr summary(sp);

  check(sg_model_write(model.get(), checkpoint_path.c_str()));

  ordered_json out = ordered_json::parse(summary.get());
  out["parameters"] = sg_model_parameter_count(model.get());
  out["checkpoint"] = checkpoint_path;
  out["metrics_log"] = metrics_path;
  std::cout << render(out, as_json);
  return 0;
}

int cmd_predict(const std::string& input, const std::string& checkpoint_path,
                const std::string& out) {
  require_readable(checkpoint_path);
  DataPtr data = load_dataset(input);
  sg_model* mp = nullptr;
  check(sg_model_read(checkpoint_path.c_str(), &mp));
  ModelPtr model(mp);

  sg_dataset* pp = nullptr;
  char* sp = nullptr;
  check(sg_model_predict(model.get(), data.get(), &pp, &sp));
  DataPtr pred(pp);
  CStr stats(sp);
  std::fprintf(stderr, "%s\n", ordered_json::parse(stats.get()).dump().c_str());

  char* jp = nullptr;
  check(sg_dataset_to_json(pred.get(), &jp));
  CStr json_text(jp);
  write_output(out, json_text.get());
  return 0;
}

int cmd_significance(const std::string& gold_path, const std::vector<std::string>& a_paths,
                     const std::vector<std::string>& b_paths, long long b_joint, long long b_pair,
                     double alpha, int wins, uint64_t seed, int threads, bool as_json) {
  DataPtr gold = load_dataset(gold_path);
  std::vector<DataPtr> a, b;
  std::vector<const sg_dataset*> ap, bp;
  for (const std::string& p : a_paths) {
    a.push_back(load_dataset(p));
    ap.push_back(a.back().get());
  }
  for (const std::string& p : b_paths) {
    b.push_back(load_dataset(p));
    bp.push_back(b.back().get());
  }
  char* rp = nullptr;
  check(sg_significance(gold.get(), ap.data(), ap.size(), bp.data(), bp.size(), b_joint, b_pair,
                        alpha, wins, seed, threads, &rp));
  CStr result(rp);
  ordered_json j = ordered_json::parse(result.get());
  if (as_json) {
    std::cout << j.dump(2) << "\n";
    return 0;
  }
  std::printf("observed_diff %.6f\n", j["observed_diff"].get<double>());
  std::printf("joint_p %.6f\n", j["joint_p"].get<double>());
  std::printf("pairwise_wins %d/%zu (required %d)\n", j["pairwise_wins"].get<int>(),
              j["pairwise_p"].size(), j["pair_wins_required"].get<int>());
  std::printf("pairwise_p:\n");
  size_t cols = b_paths.size();
  const auto& ps = j["pairwise_p"];
  for (size_t i = 0; i < ps.size(); ++i) {
    std::printf("%s%.6f%s", i % cols == 0 ? "  " : " ", ps[i].get<double>(),
                (i + 1) % cols == 0 ? "\n" : "");
  }
  std::printf("decision %s\n", j["decision"].get<std::string>().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Structured sentiment analysis toolkit (graph encodings, metrics, parser)"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(sg_version()));

  const std::vector<std::string> kEncodings = {"opinion-tuple", "node-centric", "labeled-edge",
                                               "dep-head-first", "dep-head-final"};
  const std::vector<std::string> kGraphAndAll = {"opinion-tuple", "node-centric", "labeled-edge",
                                                 "dep-head-first", "dep-head-final", "all"};

  // convert
  std::string cv_in, cv_out, cv_encoding = "opinion-tuple", cv_direction = "encode", cv_rule;
  auto* convert = app.add_subcommand("convert", "Convert between dataset JSON and graph dumps");
  convert->add_option("input", cv_in, "Input file")->required();
  convert->add_option("--encoding", cv_encoding, "Graph encoding")
      ->check(CLI::IsMember(kEncodings));
  convert->add_option("--direction", cv_direction, "encode: dataset JSON -> dump; decode: back")
      ->check(CLI::IsMember({"encode", "decode"}));
  convert->add_option("--head-rule", cv_rule, "Span head token for dep encodings")
      ->check(CLI::IsMember({"first", "last"}));
  convert->add_option("-o,--out", cv_out, "Output path (default stdout)");

  // stats
  std::string st_in;
  bool st_json = false;
  auto* stats = app.add_subcommand("stats", "Dataset statistics (counts, polarity, nesting)");
  stats->add_option("input", st_in, "Dataset JSON file")->required();
  stats->add_flag("--json", st_json, "Machine-readable output");

  // roundtrip
  std::string rt_in, rt_encoding = "all";
  bool rt_json = false;
  auto* roundtrip = app.add_subcommand("roundtrip", "Score decode(encode(data)) against data");
  roundtrip->add_option("input", rt_in, "Dataset JSON file")->required();
  roundtrip->add_option("--encoding", rt_encoding, "One encoding, or 'all'")
      ->check(CLI::IsMember(kGraphAndAll));
  roundtrip->add_flag("--json", rt_json, "Machine-readable output");

  // eval
  std::string ev_gold, ev_pred;
  bool ev_nopol = false, ev_json = false;
  auto* eval = app.add_subcommand("eval", "Evaluate predictions against gold");
  eval->add_option("gold", ev_gold, "Gold dataset JSON")->required();
  eval->add_option("pred", ev_pred, "Predicted dataset JSON")->required();
  eval->add_flag("--no-polarity", ev_nopol, "Report NSF1 as the primary metric");
  eval->add_flag("--json", ev_json, "Machine-readable output");

  // train
  std::string tr_train, tr_dev, tr_config, tr_ckpt, tr_log, tr_encoding;
  long long tr_seed = 0;
  bool tr_json = false;
  auto* train = app.add_subcommand("train", "Train a parser and write a checkpoint");
  train->add_option("train", tr_train, "Training dataset JSON")->required();
  train->add_option("--dev", tr_dev, "Development dataset for model selection");
  train->add_option("--config", tr_config, "Config file (key = value lines)")->required();
  train->add_option("--checkpoint", tr_ckpt, "Checkpoint output path")->required();
  train->add_option("--log", tr_log, "Metrics log path (default: <checkpoint>.log)");
  train->add_option("--encoding", tr_encoding, "Override the config's graph_mode")
      ->check(CLI::IsMember({"opinion-tuple", "node-centric", "labeled-edge"}));
  auto* tr_seed_opt = train->add_option("--seed", tr_seed, "Override the config's seed");
  train->add_flag("--json", tr_json, "Machine-readable summary");

  // predict
  std::string pr_in, pr_ckpt, pr_out;
  auto* predict = app.add_subcommand("predict", "Predict opinions with a trained checkpoint");
  predict->add_option("input", pr_in, "Dataset JSON (opinions ignored)")->required();
  predict->add_option("--checkpoint", pr_ckpt, "Checkpoint path")->required();
  predict->add_option("-o,--out", pr_out, "Output path (default stdout)");

  // significance
  std::string sg_gold;
  std::vector<std::string> sg_a, sg_b;
  long long sg_bjoint = 1000000, sg_bpair = 100000;
  double sg_alpha = 0.05;
  int sg_wins = 15;
  long long sg_seed = 1;
  int sg_threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  bool sg_json = false;
  auto* signif = app.add_subcommand("significance", "Bootstrap comparison of two systems");
  signif->add_option("gold", sg_gold, "Gold dataset JSON")->required();
  signif->add_option("--system-a", sg_a, "Prediction runs of system A")->required();
  signif->add_option("--system-b", sg_b, "Prediction runs of system B")->required();
  signif->add_option("--b-joint", sg_bjoint, "Resamples for the pooled test");
  signif->add_option("--b-pair", sg_bpair, "Resamples per pairwise test");
  signif->add_option("--alpha", sg_alpha, "Significance level");
  signif->add_option("--wins", sg_wins, "Pairwise rejections required");
  signif->add_option("--seed", sg_seed, "Resampling seed");
  signif->add_option("--threads", sg_threads, "Worker threads (result is thread-count invariant)");
  signif->add_flag("--json", sg_json, "Machine-readable output");

  CLI11_PARSE(app, argc, argv);

  if (convert->parsed()) {
    return cmd_convert(cv_in, cv_encoding, cv_direction, cv_rule, cv_out);
  }
  if (stats->parsed()) return cmd_stats(st_in, st_json);
  if (roundtrip->parsed()) return cmd_roundtrip(rt_in, rt_encoding, rt_json);
  if (eval->parsed()) return cmd_eval(ev_gold, ev_pred, ev_nopol, ev_json);
  if (train->parsed()) {
    return cmd_train(tr_train, tr_dev, tr_config, tr_ckpt, tr_log, tr_encoding, tr_seed,
                     tr_seed_opt->count() > 0, tr_json);
  }
  if (predict->parsed()) return cmd_predict(pr_in, pr_ckpt, pr_out);
  if (signif->parsed()) {
    return cmd_significance(sg_gold, sg_a, sg_b, sg_bjoint, sg_bpair, sg_alpha, sg_wins,
                            static_cast<uint64_t>(sg_seed), sg_threads, sg_json);
  }
  return 0;
}
